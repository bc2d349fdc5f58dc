"""Small dense linear-algebra helpers shared across the package.

Everything here operates on square symmetric matrices of modest size (state
and measurement dimensions), so Cholesky factorizations are the workhorse and
failures are handled by escalating diagonal jitter rather than by switching to
iterative methods.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

__all__ = ["NumericError", "symmetrize", "spd_inverse", "inv_lemma_split"]

# Jitter escalation for barely-indefinite matrices: relative to trace/n,
# starting at 1e-12 and growing by decades up to 1e-6.
_JITTER_START = 1e-12
_JITTER_STOP = 1e-6


class NumericError(ArithmeticError):
    """A linear-algebra operation failed beyond recoverable jitter."""


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return the symmetric part 0.5 * (m + m')."""
    return 0.5 * (m + m.T)


def _check_square_symmetric(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max()) if m.size else 1.0)
    if not np.allclose(m, m.T, atol=1e-8 * scale):
        raise ValueError(f"{name} must be symmetric")
    return m


def spd_inverse(m: np.ndarray) -> np.ndarray:
    """Invert a symmetric positive definite matrix via Cholesky.

    A matrix that fails to factor gets diagonal jitter scaled by trace(m)/n,
    escalating from 1e-12 to 1e-6 by decades.  Past that the matrix is treated
    as genuinely indefinite and a NumericError with condition diagnostics is
    raised.

    Args:
        m: symmetric positive (semi)definite matrix, shape (n, n).

    Returns:
        Symmetrized inverse of m, shape (n, n).
    """
    m = _check_square_symmetric(m, "m")
    n = m.shape[0]
    scale = float(np.trace(m)) / n
    if scale <= 0.0:
        scale = 1.0
    eye = np.eye(n)
    jitter = 0.0
    while True:
        try:
            chol = sla.cho_factor(m + jitter * eye, lower=True)
            return symmetrize(sla.cho_solve(chol, eye))
        except np.linalg.LinAlgError:
            jitter = _JITTER_START * scale if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_STOP * scale:
                eigmin = float(sla.eigvalsh(m)[0])
                raise NumericError(
                    "matrix is not positive definite within jitter budget: "
                    f"min eigenvalue {eigmin:.3e}, trace/n {scale:.3e}"
                ) from None


def inv_lemma_split(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Evaluate (a + b)^-1 as a^-1 minus a correction, without forming a + b.

    Uses the matrix-inversion-lemma rearrangement

        (a + b)^-1 = a^-1 - (a b^-1 a + a)^-1

    valid for symmetric positive definite a and b.  The correction term
    (a b^-1 a + a)^-1 is what the FIM decomposition calls the Psi matrix.

    Args:
        a: symmetric positive definite matrix, shape (n, n).
        b: symmetric positive definite matrix, shape (n, n).

    Returns:
        (a + b)^-1 computed via the split form, shape (n, n).
    """
    a = _check_square_symmetric(a, "a")
    b = _check_square_symmetric(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: a {a.shape} vs b {b.shape}")
    correction = spd_inverse(symmetrize(a @ spd_inverse(b) @ a) + a)
    return spd_inverse(a) - correction
