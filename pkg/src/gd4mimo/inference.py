"""Detection with the trained denoiser: cold-start reverse sampling with
step skipping, Babai-SER calibration of the warm-start step, and one-step
warm-start refinement of the Babai point.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .diffusion import TransitionSet
from .instances import ProblemInstance, sample_instance, regularize
from .lattice import babai_box, qr_factor
from .net import NetworkParams, forward

__all__ = [
    "StepSchedule",
    "CalibrationTable",
    "schedule_hash",
    "make_step_schedule",
    "cold_start_detect",
    "calibrate_tB",
    "warm_start_detect",
    "save_calibration",
    "load_calibration",
]


@dataclass(frozen=True)
class StepSchedule:
    """Reverse-time knots for step-skipped sampling.

    M is the number of network evaluations; times has M+1 strictly
    decreasing entries from T down to 0. Evaluations happen at times[:-1];
    the final knot 0 is the clean-signal output.
    """

    M: int
    times: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if len(self.times) != self.M + 1:
            raise ValueError("times must have M+1 entries")
        if self.times[-1] != 0:
            raise ValueError("schedule must end at t=0")
        if any(b >= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly decreasing")


def make_step_schedule(T: int, M: int) -> StepSchedule:
    """Linearly spaced knots from T to 0, rounded to integers."""
    if M > T:
        raise ValueError(f"M={M} exceeds T={T}; knots would collide")
    times = np.rint(np.linspace(T, 0, M + 1)).astype(int)
    return StepSchedule(M=M, times=tuple(int(t) for t in times))


def schedule_hash(k: int, T: int, beta_start: float, beta_end: float) -> str:
    """Stable fingerprint of a noise schedule for calibration matching."""
    text = f"{k}:{T}:{float(beta_start)!r}:{float(beta_end)!r}"
    return f"{zlib.crc32(text.encode()) & 0xFFFFFFFF:08x}"


@dataclass(frozen=True)
class CalibrationTable:
    """Per-SNR Babai SER estimates and matched warm-start steps t_B."""

    snr_db: tuple[float, ...]
    babai_ser: tuple[float, ...]
    t_B: tuple[int, ...]
    k: int
    n_tx: int
    n_rx: int
    sched_hash: str
    n_samples: int

    def lookup(self, snr_db: float) -> tuple[float, int]:
        """Nearest calibrated grid point within 1 dB; error otherwise."""
        grid = np.asarray(self.snr_db)
        idx = int(np.argmin(np.abs(grid - snr_db)))
        if abs(grid[idx] - snr_db) > 1.0:
            raise KeyError(
                f"no calibration entry within 1 dB of snr={snr_db} "
                f"(grid: {list(grid)})"
            )
        return self.babai_ser[idx], self.t_B[idx]


def _sample_categorical_rows(P: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(P, axis=1)
    u = rng.random((P.shape[0], 1))
    idx = (cdf < u).sum(axis=1)
    return np.minimum(idx, P.shape[1] - 1)


def cold_start_detect(
    params: NetworkParams,
    inst: ProblemInstance,
    ts: TransitionSet,
    schedule: StepSchedule,
    rng: np.random.Generator,
    sample_mode: str = "sample",
) -> np.ndarray:
    """Reverse-sample from uniform noise with step skipping.

    One network evaluation per schedule knot above zero; intermediate
    transitions are sampled from the skip posterior (or argmax-decoded when
    sample_mode='argmax'); the final step takes the per-node argmax of the
    last predicted clean distribution.
    """
    if sample_mode not in ("sample", "argmax"):
        raise ValueError("sample_mode must be 'sample' or 'argmax'")
    if schedule.times[0] != ts.schedule.T:
        raise ValueError("schedule must start at the chain horizon T")
    K = ts.n_states
    n = inst.n_symbols
    states = rng.integers(0, K, size=n)
    for m in range(schedule.M):
        t2 = schedule.times[m]
        t1 = schedule.times[m + 1]
        P = forward(params, inst, states + 1, t2, train_mode=False)
        if t1 == 0:
            return np.argmax(P, axis=1) + 1
        post = ts.skip_posterior(P, states, t1, t2)
        if sample_mode == "sample":
            states = _sample_categorical_rows(post, rng)
        else:
            states = np.argmax(post, axis=1)
    raise AssertionError("schedule did not terminate at 0")


def calibrate_tB(
    n_tx: int,
    n_rx: int,
    k: int,
    ts: TransitionSet,
    snr_grid_db: list[float],
    n_samples: int,
    rng: np.random.Generator,
) -> CalibrationTable:
    """Monte-Carlo Babai SER per SNR, then match each to the diffusion step
    whose expected forward SER is closest (ties to the smaller step).

    Independent of any trained network. Under-determined systems are
    regularized before the Babai solve.
    """
    if n_samples < 1000:
        raise ValueError("calibration needs n_samples >= 1000")
    efs = np.array([ts.expected_forward_ser(t) for t in range(1, ts.schedule.T + 1)])
    sers = []
    tbs = []
    for snr in snr_grid_db:
        errors = 0
        total = 0
        for _ in range(n_samples):
            inst = sample_instance(rng, n_tx, n_rx, k, snr)
            det_inst = regularize(inst) if n_rx < n_tx else inst
            qr = qr_factor(det_inst.H, det_inst.y)
            x_hat = babai_box(qr, k).x_hat
            errors += int(np.count_nonzero(x_hat != inst.x_star))
            total += inst.n_symbols
        ser = errors / total
        t_B = int(np.argmin(np.abs(efs - ser))) + 1
        sers.append(ser)
        tbs.append(t_B)
    order = np.argsort(sers)
    if np.any(np.diff(np.asarray(tbs)[order]) < 0):
        raise AssertionError("calibration not monotone: higher SER mapped to smaller t_B")
    return CalibrationTable(
        snr_db=tuple(float(s) for s in snr_grid_db),
        babai_ser=tuple(sers),
        t_B=tuple(tbs),
        k=k,
        n_tx=n_tx,
        n_rx=n_rx,
        sched_hash=schedule_hash(
            k, ts.schedule.T, ts.schedule.beta_start, ts.schedule.beta_end
        ),
        n_samples=n_samples,
    )


def warm_start_detect(
    params: NetworkParams,
    inst: ProblemInstance,
    table: CalibrationTable,
    ts: TransitionSet,
) -> np.ndarray:
    """One-step refinement: treat the Babai point as x_t at the calibrated
    step t_B and take the argmax of the predicted clean distribution.

    The Babai solve runs on the regularized system when the channel is
    under-determined; the network always sees the unregularized instance.
    """
    if inst.snr_db is None or not np.isfinite(inst.snr_db):
        raise ValueError("instance has no snr_db; warm start cannot look up t_B")
    expect_hash = schedule_hash(
        table.k, ts.schedule.T, ts.schedule.beta_start, ts.schedule.beta_end
    )
    if table.sched_hash != expect_hash:
        raise ValueError("calibration table was built for a different noise schedule")
    if table.k != inst.k:
        raise ValueError(f"calibration table k={table.k} does not match instance k={inst.k}")
    _, t_B = table.lookup(inst.snr_db)
    det_inst = regularize(inst) if inst.H.shape[0] < inst.H.shape[1] else inst
    qr = qr_factor(det_inst.H, det_inst.y)
    x_B = babai_box(qr, inst.k).x_hat
    P = forward(params, inst, x_B, t_B, train_mode=False)
    return np.argmax(P, axis=1) + 1


def save_calibration(table: CalibrationTable, path: str) -> None:
    lines = [
        f"# k={table.k}",
        f"# n_tx={table.n_tx}",
        f"# n_rx={table.n_rx}",
        f"# sched_hash={table.sched_hash}",
        f"# n_samples={table.n_samples}",
        "snr_db,babai_ser,t_B",
    ]
    for snr, ser, tb in zip(table.snr_db, table.babai_ser, table.t_B):
        lines.append(f"{snr!r},{ser!r},{tb}")
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_calibration(path: str) -> CalibrationTable:
    meta: dict[str, str] = {}
    rows: list[tuple[float, float, int]] = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            elif not line.startswith("snr_db"):
                snr, ser, tb = line.split(",")
                rows.append((float(snr), float(ser), int(tb)))
    if not rows:
        raise ValueError(f"calibration file {path} has no entries")
    return CalibrationTable(
        snr_db=tuple(r[0] for r in rows),
        babai_ser=tuple(r[1] for r in rows),
        t_B=tuple(r[2] for r in rows),
        k=int(meta["k"]),
        n_tx=int(meta["n_tx"]),
        n_rx=int(meta["n_rx"]),
        sched_hash=meta["sched_hash"],
        n_samples=int(meta["n_samples"]),
    )
