"""Benchmark harness: streams instances, runs detectors, estimates SER
with binomial confidence intervals, and writes plot-ready CSV files.

Instance streams are derived from (seed, snr index, instance index) only,
so every method sees the same instances at a given SNR and comparisons are
paired. Detector randomness is seeded separately per method.
"""

from __future__ import annotations

import os
import tempfile
import time
import zlib
from dataclasses import dataclass

import numpy as np

from . import checkpoint as ckpt
from .diffusion import NoiseSchedule, TransitionSet
from .inference import (
    CalibrationTable,
    cold_start_detect,
    load_calibration,
    make_step_schedule,
    warm_start_detect,
)
from .instances import ProblemInstance, regularize, sample_instance
from .lattice import BRUTE_FORCE_LIMIT, babai_box, brute_force_ils, kbest_klein_babai, qr_factor

__all__ = [
    "BenchConfig",
    "BenchmarkRecord",
    "compute_ser",
    "paired_significant",
    "per_instance_errors",
    "run_benchmark",
    "emit_plotdata",
    "read_plotdata",
]

LATTICE_METHODS = ("babai", "kbest", "brute")


@dataclass(frozen=True)
class BenchConfig:
    n_tx: int
    n_rx: int
    k: int
    snr_list_db: tuple[float, ...]
    n_instances: int
    methods: tuple[str, ...]
    seed: int = 0
    checkpoint_path: str | None = None
    calibration_path: str | None = None
    output_path: str | None = None
    include_timing: bool = True

    def __post_init__(self) -> None:
        if self.n_instances < 1:
            raise ValueError("n_instances must be >= 1")
        if not self.methods:
            raise ValueError("at least one method required")
        for m in self.methods:
            name, _ = parse_method(m)
            if name == "brute" and (2**self.k) ** (2 * self.n_tx) > BRUTE_FORCE_LIMIT:
                raise ValueError(
                    "brute-force method infeasible: search space exceeds "
                    f"{BRUTE_FORCE_LIMIT}"
                )


@dataclass(frozen=True)
class BenchmarkRecord:
    method: str
    snr_db: float
    ser: float
    ser_ci95_halfwidth: float
    mean_runtime_s: float | None
    n_instances: int


def parse_method(spec: str) -> tuple[str, int | None]:
    """Parse 'babai' | 'kbest:K' | 'cold:M' | 'warm' | 'brute'."""
    name, sep, arg = spec.partition(":")
    if name in ("babai", "warm", "brute"):
        if sep:
            raise ValueError(f"method {name} takes no argument")
        return name, None
    if name in ("kbest", "cold"):
        if not sep or not arg:
            raise ValueError(f"method {name} needs an argument, e.g. {name}:10")
        val = int(arg)
        if val < 1:
            raise ValueError(f"method {name} argument must be >= 1")
        return name, val
    raise ValueError(f"unknown method {spec!r}")


def compute_ser(x_hat: np.ndarray, x_star: np.ndarray) -> float:
    """Fraction of real-domain entries detected incorrectly."""
    x_hat = np.asarray(x_hat)
    x_star = np.asarray(x_star)
    if x_hat.shape != x_star.shape:
        raise ValueError("length mismatch between detected and true symbols")
    return float(np.count_nonzero(x_hat != x_star)) / x_hat.size


def paired_significant(errors_a: np.ndarray, errors_b: np.ndarray) -> tuple[float, float]:
    """95% paired comparison of per-instance error counts.

    Returns (mean difference a-b, CI halfwidth); a is significantly better
    than b when mean + halfwidth < 0.
    """
    d = np.asarray(errors_a, dtype=np.float64) - np.asarray(errors_b, dtype=np.float64)
    mean = float(d.mean())
    half = float(1.96 * d.std(ddof=1) / np.sqrt(d.size))
    return mean, half


def _format_float(x: float) -> str:
    return repr(float(x))


def _load_net_artifacts(cfg: BenchConfig):
    """Load checkpoint/calibration artifacts demanded by cfg.methods."""
    params = None
    ts = None
    table: CalibrationTable | None = None
    needs_net = any(parse_method(m)[0] in ("cold", "warm") for m in cfg.methods)
    if needs_net:
        if cfg.checkpoint_path is None:
            raise ValueError("cold/warm methods need a checkpoint")
        loaded = ckpt.load_checkpoint(cfg.checkpoint_path, expect_k=cfg.k)
        params = loaded.params
        tcfg = loaded.config
        ts = TransitionSet(
            k=tcfg.k,
            schedule=NoiseSchedule(
                T=tcfg.T, beta_start=tcfg.beta_start, beta_end=tcfg.beta_end
            ),
        )
    if any(parse_method(m)[0] == "warm" for m in cfg.methods):
        if cfg.calibration_path is None:
            raise ValueError("warm method needs a calibration table")
        table = load_calibration(cfg.calibration_path)
        if (table.n_tx, table.n_rx) != (cfg.n_tx, cfg.n_rx):
            raise ValueError(
                f"calibration is for N_t={table.n_tx}, N_r={table.n_rx}; "
                f"benchmark wants N_t={cfg.n_tx}, N_r={cfg.n_rx}"
            )
    return params, ts, table


def per_instance_errors(cfg: BenchConfig) -> dict[str, np.ndarray]:
    """Per-instance symbol-error counts for every configured method.

    Returns {method: int array of shape (n_snrs, n_instances)}. The
    instance stream depends only on (seed, snr index, instance index), so
    rows are paired across methods and can feed paired_significant.
    """
    params, ts, table = _load_net_artifacts(cfg)
    under_determined = cfg.n_rx < cfg.n_tx
    out: dict[str, np.ndarray] = {}
    for method in cfg.methods:
        name, arg = parse_method(method)
        method_tag = zlib.crc32(method.encode()) & 0xFFFFFFFF
        errs = np.zeros((len(cfg.snr_list_db), cfg.n_instances), dtype=np.int64)
        for snr_idx, snr in enumerate(cfg.snr_list_db):
            for i in range(cfg.n_instances):
                inst_rng = np.random.default_rng(
                    np.random.SeedSequence([cfg.seed, snr_idx, i])
                )
                inst = sample_instance(inst_rng, cfg.n_tx, cfg.n_rx, cfg.k, snr)
                det_rng = np.random.default_rng(
                    np.random.SeedSequence([cfg.seed, method_tag, snr_idx, i])
                )
                x_hat = _detect(
                    name, arg, inst, under_determined, det_rng, params, ts, table
                )
                errs[snr_idx, i] = np.count_nonzero(x_hat != inst.x_star)
        out[method] = errs
    return out


def run_benchmark(cfg: BenchConfig) -> list[BenchmarkRecord]:
    """Run every (method, SNR) cell; returns records and, when
    output_path is set, writes the CSV atomically."""
    params, ts, table = _load_net_artifacts(cfg)
    under_determined = cfg.n_rx < cfg.n_tx
    records: list[BenchmarkRecord] = []
    for method in cfg.methods:
        name, arg = parse_method(method)
        method_tag = zlib.crc32(method.encode()) & 0xFFFFFFFF
        for snr_idx, snr in enumerate(cfg.snr_list_db):
            errors = 0
            entries = 0
            elapsed = 0.0
            for i in range(cfg.n_instances):
                inst_rng = np.random.default_rng(
                    np.random.SeedSequence([cfg.seed, snr_idx, i])
                )
                inst = sample_instance(inst_rng, cfg.n_tx, cfg.n_rx, cfg.k, snr)
                det_rng = np.random.default_rng(
                    np.random.SeedSequence([cfg.seed, method_tag, snr_idx, i])
                )
                t0 = time.perf_counter()
                x_hat = _detect(
                    name, arg, inst, under_determined, det_rng, params, ts, table
                )
                elapsed += time.perf_counter() - t0
                errors += int(np.count_nonzero(x_hat != inst.x_star))
                entries += inst.n_symbols
            ser = errors / entries
            half = 1.96 * np.sqrt(ser * (1.0 - ser) / entries)
            records.append(
                BenchmarkRecord(
                    method=method,
                    snr_db=float(snr),
                    ser=ser,
                    ser_ci95_halfwidth=float(half),
                    mean_runtime_s=(elapsed / cfg.n_instances if cfg.include_timing else None),
                    n_instances=cfg.n_instances,
                )
            )
    if cfg.output_path is not None:
        _write_records_csv(records, cfg.output_path)
    return records


def _detect(
    name: str,
    arg: int | None,
    inst: ProblemInstance,
    under_determined: bool,
    rng: np.random.Generator,
    params,
    ts,
    table,
) -> np.ndarray:
    if name in LATTICE_METHODS:
        det_inst = regularize(inst) if under_determined else inst
        if name == "babai":
            return babai_box(qr_factor(det_inst.H, det_inst.y), det_inst.k).x_hat
        if name == "kbest":
            return kbest_klein_babai(det_inst, arg, rng).x_hat
        return brute_force_ils(det_inst).x_hat
    if name == "cold":
        schedule = make_step_schedule(ts.schedule.T, arg)
        return cold_start_detect(params, inst, ts, schedule, rng)
    if name == "warm":
        return warm_start_detect(params, inst, table, ts)
    raise ValueError(f"unknown method {name!r}")


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".bench-")
    try:
        with os.fdopen(fd, "w", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_records_csv(records: list[BenchmarkRecord], path: str) -> None:
    lines = ["method,snr_db,ser,ser_ci95_halfwidth,mean_runtime_s,n_instances"]
    for r in records:
        runtime = "" if r.mean_runtime_s is None else f"{r.mean_runtime_s:.9f}"
        lines.append(
            f"{r.method},{_format_float(r.snr_db)},{_format_float(r.ser)},"
            f"{_format_float(r.ser_ci95_halfwidth)},{runtime},{r.n_instances}"
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def emit_plotdata(records: list[BenchmarkRecord], path: str) -> None:
    """SER-vs-SNR table: one row per SNR, one SER column per method in
    first-appearance order."""
    if not records:
        raise ValueError("no records to emit")
    methods: list[str] = []
    for r in records:
        if r.method not in methods:
            methods.append(r.method)
    snrs = sorted({r.snr_db for r in records})
    cell: dict[tuple[str, float], float] = {
        (r.method, r.snr_db): r.ser for r in records
    }
    lines = ["snr_db," + ",".join(f"ser_{m}" for m in methods)]
    for snr in snrs:
        row = [_format_float(snr)]
        for m in methods:
            if (m, snr) not in cell:
                raise ValueError(f"missing record for method {m} at snr {snr}")
            row.append(_format_float(cell[(m, snr)]))
        lines.append(",".join(row))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_plotdata(path: str) -> tuple[list[str], dict[tuple[str, float], float]]:
    """Parse an emit_plotdata file back into (methods, {(method, snr): ser})."""
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    header = lines[0].split(",")
    methods = [h[len("ser_") :] for h in header[1:]]
    cell: dict[tuple[str, float], float] = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        snr = float(parts[0])
        for m, val in zip(methods, parts[1:]):
            cell[(m, snr)] = float(val)
    return methods, cell
