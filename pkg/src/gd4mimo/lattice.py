"""Classical lattice detectors: box-constrained Babai (ZF-SIC), K-best
randomized Klein-Babai, and an exact brute-force oracle for small instances.

All detectors take instances in shifted coordinates (symbols in
{1, ..., 2^k}) and report the squared residual of the system they were given;
for a regularized instance that is the value of the augmented objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .instances import ProblemInstance

__all__ = [
    "QRFactorization",
    "DetectorResult",
    "qr_factor",
    "babai_box",
    "klein_sample",
    "kbest_klein_babai",
    "brute_force_ils",
]

BRUTE_FORCE_LIMIT = 10**7


@dataclass(frozen=True)
class QRFactorization:
    """Reduced QR factorization with sign-normalized (positive) R diagonal.

    Keeps the factored system (H, y) alongside Q, R and ybar = Q^T y so
    detectors can report residuals of the original objective.
    """

    Q: np.ndarray
    R: np.ndarray
    ybar: np.ndarray
    H: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class DetectorResult:
    x_hat: np.ndarray
    residual: float
    candidates_evaluated: int


def qr_factor(H: np.ndarray, y: np.ndarray) -> QRFactorization:
    """Reduced QR factorization of a full-column-rank matrix.

    Raises on (near) rank deficiency: |R_ii| < 1e-12 ||H||_F. Under-determined
    channels must be regularized before factoring.
    """
    H = np.asarray(H, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if H.shape[0] < H.shape[1]:
        raise ValueError(
            "H has more columns than rows; regularize the instance first"
        )
    Q, R = np.linalg.qr(H, mode="reduced")
    signs = np.sign(np.diag(R))
    signs[signs == 0.0] = 1.0
    Q = Q * signs
    R = signs[:, None] * R
    scale = np.linalg.norm(H)
    if np.any(np.abs(np.diag(R)) < 1e-12 * scale):
        raise ValueError("H is rank deficient (tiny diagonal in R)")
    return QRFactorization(Q=Q, R=R, ybar=Q.T @ y, H=H, y=y)


def _residual_sq(qr: QRFactorization, x: np.ndarray) -> float:
    return float(np.sum((qr.y - qr.H @ x) ** 2))


def babai_box(qr: QRFactorization, k: int) -> DetectorResult:
    """Box-constrained Babai point (ZF-SIC): back-substitute, round
    half-to-even, clamp to the box at every level."""
    x = _kernels.babai_nearest(qr.R, qr.ybar, 2**k)
    return DetectorResult(x_hat=x, residual=_residual_sq(qr, x), candidates_evaluated=1)


def klein_sample(
    qr: QRFactorization, k: int, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """One randomized Klein-Babai draw.

    Each level samples from the discrete Gaussian over the box centered at
    the back-substituted value; sigma <= 1e-9 degenerates to the
    deterministic Babai rounding.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    n = qr.R.shape[0]
    U = rng.random((1, n))
    return _kernels.klein_samples(qr.R, qr.ybar, 2**k, sigma, U)[0]


def kbest_klein_babai(
    inst: ProblemInstance, K: int, rng: np.random.Generator
) -> DetectorResult:
    """Best of the Babai point and K independent Klein samples, by residual.

    The Babai point is always in the candidate pool (first position), so the
    result never has larger residual than plain Babai. Ties keep the earliest
    candidate, and the first K draws of a larger-K run with the same
    generator state form a prefix, making the residual non-increasing in K.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    qr = qr_factor(inst.H, inst.y)
    levels = 2**inst.k
    babai = _kernels.babai_nearest(qr.R, qr.ybar, levels)
    U = rng.random((K, qr.R.shape[0]))
    samples = _kernels.klein_samples(qr.R, qr.ybar, levels, inst.sigma_n, U)
    pool = np.vstack([babai[None, :], samples])
    residuals = np.sum((pool @ qr.H.T - qr.y) ** 2, axis=1)
    best = int(np.argmin(residuals))
    return DetectorResult(
        x_hat=pool[best].copy(),
        residual=float(residuals[best]),
        candidates_evaluated=K + 1,
    )


def brute_force_ils(inst: ProblemInstance) -> DetectorResult:
    """Exact integer least squares by exhaustive enumeration.

    Guarded to search spaces of at most 10^7 candidates; ties resolve to the
    lexicographically first minimizer.
    """
    n = inst.n_symbols
    levels = 2**inst.k
    if levels**n > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"search space {levels}^{n} exceeds the brute-force limit {BRUTE_FORCE_LIMIT}"
        )
    x, res, count = _kernels.brute_force(inst.H, inst.y, levels)
    return DetectorResult(x_hat=x, residual=res, candidates_evaluated=count)
