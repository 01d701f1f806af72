"""Problem instances: constellations, the complex -> real -> shifted-integer
system pipeline, instance sampling, and L2 regularization for under-determined
detection.

All detectors in this package operate on the shifted coordinates where symbols
live in {1, ..., 2^k}. The residual of the shifted system equals the residual
of the real-valued system, so objective values are directly comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Constellation",
    "ComplexSystem",
    "RealSystem",
    "ProblemInstance",
    "realify",
    "transform",
    "inverse_transform",
    "sigma_from_snr",
    "sample_instance",
    "regularize",
    "canonical_scale",
    "save_instance",
    "load_instance",
]


def _frozen_array(obj, name, value, dtype=None):
    arr = np.array(value, dtype=dtype)
    arr.setflags(write=False)
    object.__setattr__(obj, name, arr)


@dataclass(frozen=True)
class Constellation:
    """Per-real-dimension QAM alphabet with k bits.

    The real-domain alphabet is the odd integers {+-1, ..., +-(2^k - 1)};
    the shifted alphabet is {1, ..., 2^k}.
    """

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")

    @property
    def levels(self) -> int:
        return 2**self.k

    @cached_property
    def real_alphabet(self) -> np.ndarray:
        a = np.arange(-(self.levels - 1), self.levels, 2, dtype=np.int64)
        a.setflags(write=False)
        return a

    @cached_property
    def symbol_variance(self) -> float:
        """Per-entry variance of a uniform draw from the real alphabet,
        computed by exact enumeration (equals (4^k - 1) / 3)."""
        a = self.real_alphabet.astype(np.float64)
        return float(np.mean(a**2))


@dataclass(frozen=True)
class ComplexSystem:
    """Complex channel model y_c = H_c x_c + n_c with noise std sigma_c."""

    H_c: np.ndarray
    y_c: np.ndarray
    sigma_c: float
    x_c: np.ndarray | None = None

    def __post_init__(self):
        _frozen_array(self, "H_c", self.H_c, dtype=np.complex128)
        _frozen_array(self, "y_c", self.y_c, dtype=np.complex128)
        if self.H_c.ndim != 2:
            raise ValueError("H_c must be a matrix")
        if self.y_c.shape != (self.H_c.shape[0],):
            raise ValueError("y_c length must match the row count of H_c")
        if self.x_c is not None:
            _frozen_array(self, "x_c", self.x_c, dtype=np.complex128)
            if self.x_c.shape != (self.H_c.shape[1],):
                raise ValueError("x_c length must match the column count of H_c")
        if self.sigma_c < 0:
            raise ValueError("sigma_c must be nonnegative")

    @property
    def n_rx(self) -> int:
        return self.H_c.shape[0]

    @property
    def n_tx(self) -> int:
        return self.H_c.shape[1]


@dataclass(frozen=True)
class RealSystem:
    """Real-valued stacked model y_r = H_r x_r + n_r over the odd-integer
    alphabet, with per-entry noise std sigma_n."""

    H_r: np.ndarray
    y_r: np.ndarray
    sigma_n: float
    x_r: np.ndarray | None = None

    def __post_init__(self):
        _frozen_array(self, "H_r", self.H_r, dtype=np.float64)
        _frozen_array(self, "y_r", self.y_r, dtype=np.float64)
        if self.H_r.ndim != 2 or self.H_r.shape[0] % 2 or self.H_r.shape[1] % 2:
            raise ValueError("H_r must be a 2N_r x 2N_t matrix")
        if self.y_r.shape != (self.H_r.shape[0],):
            raise ValueError("y_r length must match the row count of H_r")
        if self.x_r is not None:
            _frozen_array(self, "x_r", self.x_r, dtype=np.int64)
            if self.x_r.shape != (self.H_r.shape[1],):
                raise ValueError("x_r length must match the column count of H_r")
        if self.sigma_n < 0:
            raise ValueError("sigma_n must be nonnegative")

    @property
    def n_rx(self) -> int:
        return self.H_r.shape[0] // 2

    @property
    def n_tx(self) -> int:
        return self.H_r.shape[1] // 2


@dataclass(frozen=True)
class ProblemInstance:
    """Detection problem in shifted coordinates: y = H x + n with x over
    {1, ..., 2^k}.

    ``regularized`` marks an instance whose (H, y) were augmented by
    :func:`regularize`; its residuals are values of the L2-regularized
    objective.
    """

    H: np.ndarray
    y: np.ndarray
    sigma_n: float
    k: int
    x_star: np.ndarray | None = None
    snr_db: float = float("nan")
    regularized: bool = False

    def __post_init__(self):
        _frozen_array(self, "H", self.H, dtype=np.float64)
        _frozen_array(self, "y", self.y, dtype=np.float64)
        if self.H.ndim != 2:
            raise ValueError("H must be a matrix")
        if self.y.shape != (self.H.shape[0],):
            raise ValueError("y length must match the row count of H")
        if self.x_star is not None:
            _frozen_array(self, "x_star", self.x_star, dtype=np.int64)
            if self.x_star.shape != (self.H.shape[1],):
                raise ValueError("x_star length must match the column count of H")
            levels = 2**self.k
            if np.any(self.x_star < 1) or np.any(self.x_star > levels):
                raise ValueError("x_star entries must lie in {1, ..., 2^k}")
        if self.k < 1:
            raise ValueError("k must be positive")

    @property
    def n_symbols(self) -> int:
        """Number of real-valued symbols to detect (2 N_t)."""
        return self.H.shape[1]

    @property
    def constellation(self) -> Constellation:
        return Constellation(self.k)

    def residual_sq(self, x: np.ndarray) -> float:
        """Squared residual ||y - H x||^2 of a candidate symbol vector."""
        return float(np.sum((self.y - self.H @ np.asarray(x, dtype=np.float64)) ** 2))


def realify(cs: ComplexSystem) -> RealSystem:
    """Stack real and imaginary parts of a complex system.

    The real noise std is sigma_c / sqrt(2), and residual norms are
    preserved: ||y_r - H_r x_r|| = ||y_c - H_c x_c|| for corresponding x.
    """
    top = np.hstack([cs.H_c.real, -cs.H_c.imag])
    bot = np.hstack([cs.H_c.imag, cs.H_c.real])
    H_r = np.vstack([top, bot])
    y_r = np.concatenate([cs.y_c.real, cs.y_c.imag])
    x_r = None
    if cs.x_c is not None:
        x_r = np.concatenate([cs.x_c.real, cs.x_c.imag]).astype(np.int64)
    return RealSystem(H_r=H_r, y_r=y_r, sigma_n=cs.sigma_c / np.sqrt(2.0), x_r=x_r)


def transform(rs: RealSystem, k: int, snr_db: float | None = None) -> ProblemInstance:
    """Shift the odd-integer alphabet {+-1, ..., +-(2^k - 1)} onto
    {1, ..., 2^k}.

    Uses x = (x_r + (2^k + 1) e) / 2, y = y_r + (2^k + 1) H_r e, H = 2 H_r,
    which preserves residuals exactly.

    If ``snr_db`` is omitted it is derived from sigma_n and the system shape.
    """
    const = Constellation(k)
    shift = const.levels + 1
    x = None
    if rs.x_r is not None:
        xr = rs.x_r
        if np.any(xr % 2 == 0) or np.any(np.abs(xr) > const.levels - 1):
            raise ValueError(
                "x_r entries must be odd integers in {+-1, ..., +-(2^k - 1)}"
            )
        x = (xr + shift) // 2
    ones = np.ones(rs.H_r.shape[1])
    y = rs.y_r + shift * (rs.H_r @ ones)
    H = 2.0 * rs.H_r
    if snr_db is None:
        if rs.sigma_n == 0.0:
            snr_db = float("inf")
        else:
            snr_db = 10.0 * np.log10(
                rs.n_tx * const.symbol_variance / (rs.n_rx * rs.sigma_n**2)
            )
    return ProblemInstance(
        H=H, y=y, sigma_n=rs.sigma_n, k=k, x_star=x, snr_db=float(snr_db)
    )


def inverse_transform(x: np.ndarray, k: int) -> np.ndarray:
    """Map shifted symbols {1, ..., 2^k} back to the odd-integer alphabet."""
    const = Constellation(k)
    x = np.asarray(x, dtype=np.int64)
    if np.any(x < 1) or np.any(x > const.levels):
        raise ValueError("entries must lie in {1, ..., 2^k}")
    return 2 * x - (const.levels + 1)


def sigma_from_snr(snr_db: float, n_tx: int, n_rx: int, const: Constellation) -> float:
    """Real-domain noise std for a target SNR in dB.

    With channel entries ~ CN(0, 1/N_r) and symbols uniform on the
    constellation, E||H_c x_c||^2 = 2 N_t sigma_x^2 and
    E||n_c||^2 = 2 N_r sigma_n^2, so
    sigma_n^2 = N_t sigma_x^2 / (N_r 10^(snr/10)).
    """
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    return float(
        np.sqrt(n_tx * const.symbol_variance / (n_rx * 10.0 ** (snr_db / 10.0)))
    )


def sample_instance(
    rng: np.random.Generator, n_tx: int, n_rx: int, k: int, snr_db: float
) -> ProblemInstance:
    """Draw a random detection instance at the requested SNR.

    Channel entries are i.i.d. CN(0, 1/N_r), symbols uniform on the
    constellation, noise white Gaussian. Draw order is fixed (channel real,
    channel imag, symbols, noise) so a seeded generator reproduces the
    instance bit for bit.
    """
    if n_tx < 1 or n_rx < 1:
        raise ValueError("n_tx and n_rx must be >= 1")
    const = Constellation(k)
    scale = np.sqrt(1.0 / (2.0 * n_rx))
    H_re = rng.normal(0.0, scale, size=(n_rx, n_tx))
    H_im = rng.normal(0.0, scale, size=(n_rx, n_tx))
    x_r = rng.choice(const.real_alphabet, size=2 * n_tx)
    sigma_n = sigma_from_snr(snr_db, n_tx, n_rx, const)
    noise = rng.normal(0.0, sigma_n, size=2 * n_rx)

    top = np.hstack([H_re, -H_im])
    bot = np.hstack([H_im, H_re])
    H_r = np.vstack([top, bot])
    y_r = H_r @ x_r + noise
    rs = RealSystem(H_r=H_r, y_r=y_r, sigma_n=sigma_n, x_r=x_r)
    return transform(rs, k, snr_db=snr_db)


def regularize(inst: ProblemInstance) -> ProblemInstance:
    """Augment an instance so its least-squares objective carries the L2
    penalty lambda^2 ||x_r||^2 of the real-domain regularized problem, with
    lambda = sigma_n / sigma_x.

    In shifted coordinates the penalty pulls x toward the constellation
    midpoint (2^k + 1) / 2. The augmented channel matrix always has full
    column rank, which makes under-determined instances QR-factorable.
    """
    if inst.regularized:
        raise ValueError("instance is already regularized")
    const = inst.constellation
    lam = inst.sigma_n / np.sqrt(const.symbol_variance)
    if lam <= 0.0:
        raise ValueError("regularization needs sigma_n > 0 (lambda must be positive)")
    n = inst.n_symbols
    shift = const.levels + 1
    # Augmenting the real system with [H_r; lam I] and [y_r; 0], then shifting,
    # gives blocks 2*lam*I and lam*(2^k + 1)*e in the shifted coordinates.
    H_aug = np.vstack([inst.H, 2.0 * lam * np.eye(n)])
    y_aug = np.concatenate([inst.y, lam * shift * np.ones(n)])
    return ProblemInstance(
        H=H_aug,
        y=y_aug,
        sigma_n=inst.sigma_n,
        k=inst.k,
        x_star=inst.x_star,
        snr_db=inst.snr_db,
        regularized=True,
    )


def canonical_scale(inst: ProblemInstance) -> ProblemInstance:
    """Rescale (H, y, sigma_n) jointly so that ||H||_F^2 equals the symbol
    count (average unit column energy).

    Joint positive scaling leaves the detection problem unchanged: the
    least-squares argmin, the Babai/Klein rounding decisions, and every
    residual ordering are scale-invariant. The canonical gauge only matters
    numerically; it keeps network input features O(1) regardless of the
    antenna count, so the denoiser sees a consistent scale at any system
    size. Detectors that only compare residuals can use either gauge.
    """
    fro = float(np.linalg.norm(inst.H))
    if fro == 0.0:
        return inst
    c = np.sqrt(inst.n_symbols) / fro
    return ProblemInstance(
        H=c * inst.H,
        y=c * inst.y,
        sigma_n=c * inst.sigma_n,
        k=inst.k,
        x_star=inst.x_star,
        snr_db=inst.snr_db,
        regularized=inst.regularized,
    )


def save_instance(inst: ProblemInstance, path) -> None:
    """Write an instance to a JSON file (shifted coordinates)."""
    payload = {
        "H": inst.H.tolist(),
        "y": inst.y.tolist(),
        "sigma_n": inst.sigma_n,
        "k": inst.k,
        "snr_db": inst.snr_db,
        "regularized": inst.regularized,
    }
    if inst.x_star is not None:
        payload["x_star"] = inst.x_star.tolist()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_instance(path) -> ProblemInstance:
    """Read an instance written by :func:`save_instance`."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    x_star = payload.get("x_star")
    return ProblemInstance(
        H=np.array(payload["H"], dtype=np.float64),
        y=np.array(payload["y"], dtype=np.float64),
        sigma_n=float(payload["sigma_n"]),
        k=int(payload["k"]),
        x_star=None if x_star is None else np.array(x_star, dtype=np.int64),
        snr_db=float(payload.get("snr_db", "nan")),
        regularized=bool(payload.get("regularized", False)),
    )
