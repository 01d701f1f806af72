"""Command-line interface: train, calibrate, detect, bench.

Options resolve in three layers: built-in defaults, then a key=value config
file (--config), then explicit command-line flags, which win.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import checkpoint as ckpt
from .bench import BenchConfig, emit_plotdata, run_benchmark
from .diffusion import NoiseSchedule, TransitionSet
from .inference import calibrate_tB, load_calibration, make_step_schedule, save_calibration
from .inference import cold_start_detect, warm_start_detect
from .instances import inverse_transform, load_instance
from .lattice import babai_box, brute_force_ils, kbest_klein_babai, qr_factor
from .training import TrainConfig, train

__all__ = ["main"]


def _load_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{ln}: expected key=value, got {line!r}")
            out[key.strip()] = val.strip()
    return out


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


class _Resolver:
    """Merges defaults, config-file entries, and explicit flags."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = vars(args)
        path = self.args.get("config")
        self.file_cfg = _load_config_file(path) if path else {}

    def get(self, name: str, conv, default=None, required: bool = False):
        flag_val = self.args.get(name)
        if flag_val is not None:
            return flag_val
        if name in self.file_cfg:
            raw = self.file_cfg[name]
            if conv is bool:
                return _parse_bool(raw)
            return conv(raw)
        if required and default is None:
            raise ValueError(f"missing required option --{name.replace('_', '-')}")
        return default


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _cmd_train(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    base = TrainConfig()
    cfg = TrainConfig(
        n_tx=r.get("n_tx", int, base.n_tx),
        n_rx=r.get("n_rx", int, base.n_rx),
        k=r.get("k", int, base.k),
        T=r.get("T", int, base.T),
        beta_start=r.get("beta_start", float),
        beta_end=r.get("beta_end", float),
        d_hidden=r.get("d_hidden", int, base.d_hidden),
        n_layers=r.get("n_layers", int, base.n_layers),
        iterations=r.get("iterations", int, base.iterations),
        batch_size=r.get("batch_size", int, base.batch_size),
        learning_rate=r.get("learning_rate", float, base.learning_rate),
        weight_decay=r.get("weight_decay", float, base.weight_decay),
        snr_range_db=(
            r.get("snr_lo", float, base.snr_range_db[0]),
            r.get("snr_hi", float, base.snr_range_db[1]),
        ),
        seed=r.get("seed", int, base.seed),
        checkpoint_interval=r.get("checkpoint_interval", int, base.checkpoint_interval),
        literal_gate=bool(r.get("literal_gate", bool, False)),
    )
    out = r.get("out", str, required=True)
    log = r.get("log", str)
    _, _, history = train(cfg, log_path=log, checkpoint_path=out)
    final = history[-1]
    print(
        f"trained {cfg.iterations} iterations; final loss {final['loss']:.4f} "
        f"(vb {final['loss_vb']:.4f}, ce {final['loss_ce']:.4f}); checkpoint: {out}"
    )
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    ckpt_path = r.get("checkpoint", str, required=True)
    loaded = ckpt.load_checkpoint(ckpt_path)
    tcfg = loaded.config
    ts = TransitionSet(
        k=tcfg.k,
        schedule=NoiseSchedule(T=tcfg.T, beta_start=tcfg.beta_start, beta_end=tcfg.beta_end),
    )
    n_tx = r.get("n_tx", int, tcfg.n_tx)
    n_rx = r.get("n_rx", int, tcfg.n_rx)
    grid = r.get("snr_grid", _float_list, required=True)
    samples = r.get("samples", int, 2000)
    seed = r.get("seed", int, 0)
    out = r.get("out", str, required=True)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    table = calibrate_tB(n_tx, n_rx, tcfg.k, ts, list(grid), samples, rng)
    save_calibration(table, out)
    pairs = ", ".join(
        f"{snr:g} dB -> ser {ser:.3g}, t_B {tb}"
        for snr, ser, tb in zip(table.snr_db, table.babai_ser, table.t_B)
    )
    print(f"calibration written to {out}: {pairs}")
    return 0


def _cmd_detect(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    inst = load_instance(r.get("instance", str, required=True))
    method = r.get("method", str, "babai")
    seed = r.get("seed", int, 0)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    from .bench import parse_method
    from .instances import regularize

    name, arg = parse_method(method)
    under = inst.H.shape[0] < inst.H.shape[1]
    if name in ("babai", "kbest", "brute"):
        det_inst = regularize(inst) if under else inst
        if name == "babai":
            x_hat = babai_box(qr_factor(det_inst.H, det_inst.y), det_inst.k).x_hat
        elif name == "kbest":
            x_hat = kbest_klein_babai(det_inst, arg, rng).x_hat
        else:
            x_hat = brute_force_ils(det_inst).x_hat
    else:
        loaded = ckpt.load_checkpoint(r.get("checkpoint", str, required=True), expect_k=inst.k)
        tcfg = loaded.config
        ts = TransitionSet(
            k=tcfg.k,
            schedule=NoiseSchedule(
                T=tcfg.T, beta_start=tcfg.beta_start, beta_end=tcfg.beta_end
            ),
        )
        if name == "cold":
            schedule = make_step_schedule(tcfg.T, arg)
            x_hat = cold_start_detect(loaded.params, inst, ts, schedule, rng)
        else:
            table = load_calibration(r.get("calibration", str, required=True))
            x_hat = warm_start_detect(loaded.params, inst, table, ts)
    print("symbols:", " ".join(str(int(v)) for v in x_hat))
    print("real:", " ".join(str(int(v)) for v in inverse_transform(x_hat, inst.k)))
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    r = _Resolver(args)
    cfg = BenchConfig(
        n_tx=r.get("n_tx", int, required=True),
        n_rx=r.get("n_rx", int, required=True),
        k=r.get("k", int, required=True),
        snr_list_db=r.get("snr_list", _float_list, required=True),
        n_instances=r.get("n_instances", int, 1000),
        methods=tuple(
            m.strip() for m in r.get("methods", str, "babai").split(",") if m.strip()
        ),
        seed=r.get("seed", int, 0),
        checkpoint_path=r.get("checkpoint", str),
        calibration_path=r.get("calibration", str),
        output_path=r.get("out", str, required=True),
        include_timing=not bool(r.get("no_timing", bool, False)),
    )
    records = run_benchmark(cfg)
    plot_out = r.get("plot_out", str)
    if plot_out:
        emit_plotdata(records, plot_out)
    for rec in records:
        rt = "" if rec.mean_runtime_s is None else f", {rec.mean_runtime_s * 1e3:.3f} ms/inst"
        print(
            f"{rec.method} @ {rec.snr_db:g} dB: ser {rec.ser:.4g} "
            f"(+-{rec.ser_ci95_halfwidth:.2g}{rt})"
        )
    print(f"results written to {cfg.output_path}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gd4mimo",
        description="Graph diffusion MIMO detector: training, calibration, detection, benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a denoiser and write a checkpoint")
    _add_common(p)
    for flag, typ in [
        ("--n-tx", int), ("--n-rx", int), ("--k", int), ("--T", int),
        ("--beta-start", float), ("--beta-end", float),
        ("--d-hidden", int), ("--n-layers", int),
        ("--iterations", int), ("--batch-size", int),
        ("--learning-rate", float), ("--weight-decay", float),
        ("--snr-lo", float), ("--snr-hi", float),
        ("--checkpoint-interval", int),
    ]:
        p.add_argument(flag, type=typ)
    p.add_argument("--literal-gate", action="store_const", const=True)
    p.add_argument("--out", help="checkpoint output path")
    p.add_argument("--log", help="training log CSV path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("calibrate", help="estimate Babai SER per SNR and match t_B")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint supplying k and the noise schedule")
    p.add_argument("--n-tx", type=int)
    p.add_argument("--n-rx", type=int)
    p.add_argument("--snr-grid", type=_float_list, help="comma-separated SNR values in dB")
    p.add_argument("--samples", type=int)
    p.add_argument("--out", help="calibration CSV output path")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("detect", help="detect one saved instance")
    _add_common(p)
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--method", help="babai | kbest:K | cold:M | warm | brute")
    p.add_argument("--checkpoint")
    p.add_argument("--calibration")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("bench", help="SER/runtime benchmark over an SNR sweep")
    _add_common(p)
    p.add_argument("--n-tx", type=int)
    p.add_argument("--n-rx", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--snr-list", type=_float_list, help="comma-separated SNR values in dB")
    p.add_argument("--n-instances", type=int)
    p.add_argument("--methods", help="comma-separated method list")
    p.add_argument("--checkpoint")
    p.add_argument("--calibration")
    p.add_argument("--out", help="records CSV output path")
    p.add_argument("--plot-out", help="optional SER-vs-SNR pivot CSV")
    p.add_argument("--no-timing", dest="no_timing", action="store_const", const=True,
                   help="omit runtime measurements for byte-reproducible output")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
