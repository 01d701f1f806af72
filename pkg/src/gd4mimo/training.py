"""Training loop: instance generation, forward corruption, variational +
cross-entropy losses with hand-derived gradients, and Adam updates with
decoupled weight decay.

Every iteration draws its randomness from a generator seeded by
(config seed, iteration index), so training traces are exactly
reproducible and resumable.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace

import numpy as np

from .diffusion import NoiseSchedule, TransitionSet, default_schedule
from .instances import canonical_scale, sample_instance
from .net import NetworkParams, backward_batch, forward_batch, init_graph_features

__all__ = [
    "TrainConfig",
    "OptimizerState",
    "loss_vb",
    "loss_ce",
    "loss_grads",
    "train_step",
    "train",
]

LOG_FLOOR = 1e-30


@dataclass(frozen=True)
class TrainConfig:
    n_tx: int = 4
    n_rx: int = 4
    k: int = 2
    T: int = 100
    beta_start: float | None = None
    beta_end: float | None = None
    d_hidden: int = 32
    n_layers: int = 6
    iterations: int = 5000
    batch_size: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 5e-5
    snr_range_db: tuple[float, float] = (24.0, 32.0)
    seed: int = 0
    checkpoint_interval: int = 1000
    literal_gate: bool = False

    def __post_init__(self) -> None:
        if self.snr_range_db[0] > self.snr_range_db[1]:
            raise ValueError("snr_range_db must be (lo, hi) with lo <= hi")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def schedule(self) -> NoiseSchedule:
        if self.beta_start is None or self.beta_end is None:
            base = default_schedule(self.k, self.T)
            return NoiseSchedule(
                T=self.T,
                beta_start=self.beta_start or base.beta_start,
                beta_end=self.beta_end or base.beta_end,
            )
        return NoiseSchedule(T=self.T, beta_start=self.beta_start, beta_end=self.beta_end)

    def resolved(self) -> "TrainConfig":
        """Config with the schedule endpoints made explicit."""
        sched = self.schedule()
        return replace(self, beta_start=sched.beta_start, beta_end=sched.beta_end)


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, n_params: int) -> "OptimizerState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params))


def loss_vb(true_post: np.ndarray, model_post: np.ndarray) -> float:
    """Sum over rows of KL(true || model), with 0 log 0 := 0 and the model
    probability floored at 1e-30 inside the log."""
    if true_post.shape != model_post.shape:
        raise ValueError("posterior shape mismatch")
    p = true_post
    q = np.maximum(model_post, LOG_FLOOR)
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def loss_ce(x0_states: np.ndarray, P: np.ndarray) -> float:
    """Negative log-likelihood of the clean states under P (0-based)."""
    x0_states = np.asarray(x0_states)
    picked = P[np.arange(x0_states.size), x0_states]
    return float(-np.sum(np.log(np.maximum(picked, LOG_FLOOR))))


def loss_grads(
    ts: TransitionSet,
    P: np.ndarray,
    x0_states: np.ndarray,
    xt_states: np.ndarray,
    t: int,
) -> tuple[float, float, np.ndarray]:
    """Per-instance losses and the gradient of their sum with respect to P.

    The variational term is KL(true posterior || model posterior); its
    gradient flows through the posterior construction
    q_j = Q_t[j, x_t] (P Qbar_{t-1})_j / (P Qbar_t)[x_t].
    """
    n, K = P.shape
    rows = np.arange(n)
    true_post = ts.true_posterior(x0_states, xt_states, t)
    a = ts.Q[t][:, xt_states].T
    m = P @ ts.Qbar[t - 1]
    Z = (P @ ts.Qbar[t])[rows, xt_states]
    q = a * m / Z[:, None]

    lvb = loss_vb(true_post, q)
    lce = loss_ce(x0_states, P)

    dq = np.where(q > LOG_FLOOR, -true_post / np.maximum(q, LOG_FLOOR), 0.0)
    dm = dq * a / Z[:, None]
    dZ = -(dq * q).sum(axis=1) / Z
    dP = dm @ ts.Qbar[t - 1].T + dZ[:, None] * ts.Qbar[t][:, xt_states].T

    picked = P[rows, x0_states]
    dP[rows, x0_states] += np.where(picked > LOG_FLOOR, -1.0 / np.maximum(picked, LOG_FLOOR), 0.0)
    return lvb, lce, dP


def adam_update(
    params: NetworkParams,
    opt: OptimizerState,
    grad: np.ndarray,
    lr: float,
    weight_decay: float,
) -> None:
    """In-place Adam step with decoupled weight decay."""
    opt.step += 1
    opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grad
    opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grad**2
    mh = opt.m / (1.0 - opt.beta1**opt.step)
    vh = opt.v / (1.0 - opt.beta2**opt.step)
    params.flat -= lr * (mh / (np.sqrt(vh) + opt.eps) + weight_decay * params.flat)


def train_step(
    params: NetworkParams,
    opt: OptimizerState,
    cfg: TrainConfig,
    ts: TransitionSet,
    iteration: int,
    fixed_instances: list | None = None,
) -> dict:
    """One batch: sample instances, corrupt, forward, loss, backward, Adam.

    fixed_instances overrides instance sampling (overfit smoke tests);
    the rest of the randomness (t, x_t, jitter) still flows per iteration.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, iteration]))
    B = cfg.batch_size
    n = 2 * cfg.n_tx
    K = 2**cfg.k

    ts_steps = np.empty(B, dtype=np.int64)
    x0 = np.empty((B, n), dtype=np.int64)
    xt = np.empty((B, n), dtype=np.int64)
    node_raw = np.empty((B, n, 3))
    edge_raw = np.empty((B, n, n, 2))
    for b in range(B):
        if fixed_instances is not None:
            inst = fixed_instances[b % len(fixed_instances)]
        else:
            snr = rng.uniform(cfg.snr_range_db[0], cfg.snr_range_db[1])
            inst = sample_instance(rng, cfg.n_tx, cfg.n_rx, cfg.k, snr)
        t_b = int(rng.integers(1, cfg.T + 1))
        ts_steps[b] = t_b
        x0[b] = inst.x_star - 1
        xt[b] = ts.forward_sample(x0[b], t_b, rng)
        feats = init_graph_features(canonical_scale(inst))
        node_raw[b] = feats.node_raw
        edge_raw[b] = feats.edge_raw

    P, cache = forward_batch(
        params,
        node_raw,
        edge_raw,
        xt + 1,
        ts_steps,
        cfg.k,
        train_mode=True,
        rng=rng,
        want_cache=True,
    )

    dP = np.empty((B, n, K))
    lvb_total = 0.0
    lce_total = 0.0
    for b in range(B):
        lvb, lce, dPb = loss_grads(ts, P[b], x0[b], xt[b], int(ts_steps[b]))
        lvb_total += lvb
        lce_total += lce
        dP[b] = dPb / B

    loss = (lvb_total + lce_total) / B
    if not np.isfinite(loss):
        raise FloatingPointError(
            f"non-finite loss at iteration {iteration}: "
            f"L_vb={lvb_total / B}, L_ce={lce_total / B}"
        )

    grad = backward_batch(params, cache, dP)
    adam_update(params, opt, grad, cfg.learning_rate, cfg.weight_decay)
    return {
        "iteration": iteration,
        "loss_vb": lvb_total / B,
        "loss_ce": lce_total / B,
        "loss": loss,
    }


def train(
    cfg: TrainConfig,
    params: NetworkParams | None = None,
    opt: OptimizerState | None = None,
    log_path: str | None = None,
    checkpoint_path: str | None = None,
    fixed_instances: list | None = None,
    start_iteration: int = 1,
) -> tuple[NetworkParams, OptimizerState, list[dict]]:
    """Run the training loop; returns params, optimizer state, and the
    per-iteration metric records."""
    from . import checkpoint as ckpt

    cfg = cfg.resolved()
    ts = TransitionSet(k=cfg.k, schedule=cfg.schedule())
    if params is None:
        init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2**32]))
        params = NetworkParams.init(
            cfg.d_hidden, cfg.n_layers, init_rng, literal_gate=cfg.literal_gate
        )
    if opt is None:
        opt = OptimizerState.init(params.n_params)

    log_file = None
    writer = None
    if log_path is not None:
        log_file = open(log_path, "a", newline="")
        writer = csv.writer(log_file)
        if log_file.tell() == 0:
            writer.writerow(["iteration", "loss_vb", "loss_ce", "wall_time"])

    history: list[dict] = []
    t0 = time.perf_counter()
    try:
        for it in range(start_iteration, start_iteration + cfg.iterations):
            metrics = train_step(params, opt, cfg, ts, it, fixed_instances=fixed_instances)
            history.append(metrics)
            if writer is not None:
                writer.writerow(
                    [
                        metrics["iteration"],
                        repr(metrics["loss_vb"]),
                        repr(metrics["loss_ce"]),
                        f"{time.perf_counter() - t0:.3f}",
                    ]
                )
            if (
                checkpoint_path is not None
                and cfg.checkpoint_interval > 0
                and (it - start_iteration + 1) % cfg.checkpoint_interval == 0
            ):
                ckpt.save_checkpoint(params, opt, cfg, checkpoint_path)
    finally:
        if log_file is not None:
            log_file.close()
    if checkpoint_path is not None:
        ckpt.save_checkpoint(params, opt, cfg, checkpoint_path)
    return params, opt, history
