"""Gated graph message-passing denoiser with a discretized-logistic head.

The network sees one fully connected graph (self-loops included) per
instance, one node per real symbol. It maps a noisy symbol vector and the
channel geometry to a per-node categorical distribution over the alphabet.
Gradients are computed by a hand-written reverse pass over the recorded
forward intermediates; no autodiff framework is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .instances import ProblemInstance, canonical_scale

__all__ = [
    "GraphFeatures",
    "NetworkParams",
    "init_graph_features",
    "normalize_symbols",
    "sinusoidal_embed",
    "forward",
    "forward_batch",
    "backward_batch",
    "eval_count",
    "reset_eval_count",
]

_eval_count = 0


def eval_count() -> int:
    """Number of per-instance network evaluations since the last reset."""
    return _eval_count


def reset_eval_count() -> None:
    global _eval_count
    _eval_count = 0


@dataclass(frozen=True)
class GraphFeatures:
    """Raw graph features of one instance.

    node_raw[i] = [y.h_i, h_i.h_i, sigma_n^2]; edge_raw[i, j] =
    [-h_i.h_j, sigma_n^2] for every ordered pair including self-loops.
    """

    node_raw: np.ndarray
    edge_raw: np.ndarray


def init_graph_features(inst: ProblemInstance) -> GraphFeatures:
    H = inst.H
    n = inst.n_symbols
    G = H.T @ H
    s2 = inst.sigma_n**2
    node = np.empty((n, 3))
    node[:, 0] = H.T @ inst.y
    node[:, 1] = np.diag(G)
    node[:, 2] = s2
    edge = np.empty((n, n, 2))
    edge[:, :, 0] = -G
    edge[:, :, 1] = s2
    return GraphFeatures(node_raw=node, edge_raw=edge)


def normalize_symbols(
    xt: np.ndarray,
    k: int,
    rng: np.random.Generator | None = None,
    train_mode: bool = False,
) -> np.ndarray:
    """Map symbols {1..2^k} to [-1, 1]; in train mode apply the small
    multiplicative jitter (1 + 0.05 eps), eps ~ N(0,1) per entry."""
    xt = np.asarray(xt)
    if np.any((xt < 1) | (xt > 2**k)):
        raise ValueError("symbols outside {1..2^k}")
    s = (2.0 * xt - 2.0) / (2**k - 1) - 1.0
    if train_mode:
        if rng is None:
            raise ValueError("train_mode needs an rng for the jitter")
        s = s * (1.0 + 0.05 * rng.standard_normal(s.shape))
    return s


def sinusoidal_embed(x: np.ndarray | float, d_model: int, tau: float = 10000.0) -> np.ndarray:
    """Sinusoidal embedding: component 2j-1 = sin(x / tau^(2j/D)),
    component 2j = cos(same), j = 1..D/2. Requires even D."""
    if d_model % 2 != 0:
        raise ValueError("embedding width must be even")
    x = np.asarray(x, dtype=np.float64)
    j = np.arange(1, d_model // 2 + 1)
    div = tau ** (2.0 * j / d_model)
    ang = x[..., None] / div
    out = np.empty(x.shape + (d_model,))
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    fan_out, fan_in = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def _block_specs(d_hidden: int, n_layers: int) -> list[tuple[str, tuple[int, ...]]]:
    D = d_hidden
    specs: list[tuple[str, tuple[int, ...]]] = [
        ("mlp2_w", (D, 3)),
        ("mlp2_b", (D,)),
        ("mlp1_w", (D, 2 * D)),
        ("mlp1_b", (D,)),
        ("edge_w", (D, 2)),
        ("edge_b", (D,)),
    ]
    for l in range(n_layers):
        specs += [
            (f"layer{l}_r_w", (D, 3 * D)),
            (f"layer{l}_r_b", (D,)),
            (f"layer{l}_w3_w", (D, D)),
            (f"layer{l}_w3_b", (D,)),
            (f"layer{l}_w4_w", (D, D)),
            (f"layer{l}_w4_b", (D,)),
            (f"layer{l}_t_w", (D, D)),
            (f"layer{l}_t_b", (D,)),
        ]
    specs += [("out_w", (2, D)), ("out_b", (2,))]
    return specs


class NetworkParams:
    """All weights, stored in one flat float64 vector with named views.

    Block order is fixed by _block_specs and shared with the checkpoint
    format. The named views alias the flat vector, so in-place optimizer
    updates on `flat` are visible through them.
    """

    def __init__(
        self,
        d_hidden: int,
        n_layers: int,
        flat: np.ndarray | None = None,
        literal_gate: bool = False,
    ) -> None:
        if d_hidden % 2 != 0 or d_hidden < 2:
            raise ValueError("d_hidden must be even and >= 2")
        if n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        self.d_hidden = d_hidden
        self.n_layers = n_layers
        self.literal_gate = literal_gate
        self.specs = _block_specs(d_hidden, n_layers)
        total = sum(int(np.prod(shape)) for _, shape in self.specs)
        if flat is None:
            self.flat = np.zeros(total)
        else:
            flat = np.ascontiguousarray(flat, dtype=np.float64)
            if flat.shape != (total,):
                raise ValueError(f"flat vector must have shape ({total},)")
            self.flat = flat
        self.blocks: dict[str, np.ndarray] = {}
        off = 0
        for name, shape in self.specs:
            size = int(np.prod(shape))
            self.blocks[name] = self.flat[off : off + size].reshape(shape)
            off += size

    @property
    def n_params(self) -> int:
        return self.flat.size

    @classmethod
    def init(
        cls,
        d_hidden: int,
        n_layers: int,
        rng: np.random.Generator,
        literal_gate: bool = False,
    ) -> "NetworkParams":
        p = cls(d_hidden, n_layers, literal_gate=literal_gate)
        # Each layer writes ReLU and step-conditioning branches into the
        # residual stream; damping those writes by 1/(2L) keeps activation
        # magnitudes depth-independent, so the tanh/exp output head starts
        # in its responsive regime instead of saturating.
        damp = 1.0 / (2.0 * n_layers)
        for name, shape in p.specs:
            if not name.endswith("_w"):
                continue
            w = _glorot(rng, shape)
            if name.startswith("layer"):
                w = w * damp
            p.blocks[name][...] = w  # type: ignore[arg-type]
        return p

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.d_hidden,
            self.n_layers,
            flat=self.flat.copy(),
            literal_gate=self.literal_gate,
        )


def _bins(k: int) -> tuple[np.ndarray, float]:
    K = 2**k
    centers = np.linspace(-1.0, 1.0, K)
    delta = 2.0 / (K - 1)
    return centers, delta


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite activations at {where}")


def forward_batch(
    params: NetworkParams,
    node_raw: np.ndarray,
    edge_raw: np.ndarray,
    xt: np.ndarray,
    t: np.ndarray,
    k: int,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    want_cache: bool = False,
):
    """Batched forward pass.

    node_raw (B,n,3), edge_raw (B,n,n,2), xt (B,n) in {1..2^k}, t (B,)
    diffusion steps. Returns P (B,n,2^k), plus the recorded intermediates
    when want_cache is set.
    """
    global _eval_count
    D = params.d_hidden
    L = params.n_layers
    blocks = params.blocks
    node_raw = np.asarray(node_raw, dtype=np.float64)
    edge_raw = np.asarray(edge_raw, dtype=np.float64)
    B, n, _ = node_raw.shape
    _eval_count += B

    s = normalize_symbols(xt, k, rng=rng, train_mode=train_mode)
    c = sinusoidal_embed(s, D)
    temb = sinusoidal_embed(np.asarray(t, dtype=np.float64), D)

    a2 = node_raw @ blocks["mlp2_w"].T + blocks["mlp2_b"]
    cat0 = np.concatenate([a2, c], axis=-1)
    V = cat0 @ blocks["mlp1_w"].T + blocks["mlp1_b"]
    E = edge_raw @ blocks["edge_w"].T + blocks["edge_b"]
    _check_finite(V, "input embedding")

    Vs = [V]
    As: list[np.ndarray] = []
    gs: list[np.ndarray] = []
    us: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    for l in range(L):
        A = np.concatenate(
            [
                E,
                np.broadcast_to(V[:, :, None, :], (B, n, n, D)),
                np.broadcast_to(V[:, None, :, :], (B, n, n, D)),
            ],
            axis=-1,
        )
        r = A.reshape(B * n * n, 3 * D) @ blocks[f"layer{l}_r_w"].T
        r = r.reshape(B, n, n, D) + blocks[f"layer{l}_r_b"]
        g = _sigmoid(r)
        u = V @ blocks[f"layer{l}_w4_w"].T + blocks[f"layer{l}_w4_b"]
        if params.literal_gate:
            agg = g.sum(axis=2) * u
        else:
            agg = np.einsum("bijd,bjd->bid", g, u, optimize=True)
        vhat = V @ blocks[f"layer{l}_w3_w"].T + blocks[f"layer{l}_w3_b"] + agg
        tproj = temb @ blocks[f"layer{l}_t_w"].T + blocks[f"layer{l}_t_b"]
        V = V + np.maximum(vhat, 0.0) + tproj[:, None, :]
        E = E + r
        _check_finite(V, f"layer {l}")
        if want_cache:
            As.append(A)
            gs.append(g)
            us.append(u)
            masks.append(vhat > 0)
            Vs.append(V)

    maskL = V > 0
    hL = np.maximum(V, 0.0)
    out = hL @ blocks["out_w"].T + blocks["out_b"]
    mu_hat = out[..., 0]
    rho = out[..., 1]
    mu = np.tanh(mu_hat + s)
    rho_c = np.clip(rho, -7.0, 2.0)
    sig = np.exp(rho_c)

    centers, delta = _bins(k)
    cuts = centers[:-1] + delta / 2.0
    zeta = (cuts - mu[..., None]) / sig[..., None]
    Fc = _sigmoid(zeta)
    P = np.concatenate(
        [
            Fc[..., :1],
            np.diff(Fc, axis=-1),
            np.maximum(1.0 - Fc[..., -1:], 0.0),
        ],
        axis=-1,
    )
    P[..., -1] = np.maximum(1.0 - P[..., :-1].sum(axis=-1), 0.0)
    _check_finite(P, "output head")

    if not want_cache:
        return P
    cache = {
        "node_raw": node_raw,
        "edge_raw": edge_raw,
        "s": s,
        "temb": temb,
        "a2": a2,
        "cat0": cat0,
        "Vs": Vs,
        "As": As,
        "gs": gs,
        "us": us,
        "masks": masks,
        "maskL": maskL,
        "hL": hL,
        "mu": mu,
        "rho": rho,
        "sig": sig,
        "zeta": zeta,
        "Fc": Fc,
        "k": k,
    }
    return P, cache


def backward_batch(params: NetworkParams, cache: dict, dP: np.ndarray) -> np.ndarray:
    """Gradient of sum(loss) with respect to the flat parameter vector,
    given the upstream gradient dP on the output probabilities."""
    D = params.d_hidden
    L = params.n_layers
    blocks = params.blocks
    grads = {name: np.zeros(shape) for name, shape in params.specs}

    Fc = cache["Fc"]
    zeta = cache["zeta"]
    sig = cache["sig"]
    mu = cache["mu"]
    rho = cache["rho"]
    s = cache["s"]
    temb = cache["temb"]

    # Head: P is the telescoped difference of the cut-point CDF values.
    dF = dP[..., :-1] - dP[..., 1:]
    dzeta = dF * Fc * (1.0 - Fc)
    dmu = -dzeta.sum(axis=-1) / sig
    dsig = -(dzeta * zeta).sum(axis=-1) / sig
    dmu_hat = dmu * (1.0 - mu**2)
    drho = dsig * sig * ((rho > -7.0) & (rho < 2.0))
    dout = np.stack([dmu_hat, drho], axis=-1)
    grads["out_w"] += np.einsum("bno,bnd->od", dout, cache["hL"])
    grads["out_b"] += dout.sum(axis=(0, 1))
    dV = (dout @ blocks["out_w"]) * cache["maskL"]
    B, n = dV.shape[0], dV.shape[1]
    dE = np.zeros((B, n, n, D))

    for l in range(L - 1, -1, -1):
        Vl = cache["Vs"][l]
        A = cache["As"][l]
        g = cache["gs"][l]
        u = cache["us"][l]
        mask = cache["masks"][l]

        dtproj = dV.sum(axis=1)
        grads[f"layer{l}_t_w"] += np.einsum("bo,bi->oi", dtproj, temb)
        grads[f"layer{l}_t_b"] += dtproj.sum(axis=0)

        dvhat = dV * mask
        grads[f"layer{l}_w3_w"] += np.einsum("bno,bni->oi", dvhat, Vl)
        grads[f"layer{l}_w3_b"] += dvhat.sum(axis=(0, 1))

        if params.literal_gate:
            dr_gate = (dvhat * u)[:, :, None, :]
            du = g.sum(axis=2) * dvhat
        else:
            dr_gate = np.einsum("bid,bjd->bijd", dvhat, u)
            du = np.einsum("bijd,bid->bjd", g, dvhat)
        grads[f"layer{l}_w4_w"] += np.einsum("bjo,bji->oi", du, Vl)
        grads[f"layer{l}_w4_b"] += du.sum(axis=(0, 1))

        dr = dE + dr_gate * g * (1.0 - g)
        Bnn = dr.shape[0] * dr.shape[1] * dr.shape[2]
        grads[f"layer{l}_r_w"] += dr.reshape(Bnn, D).T @ A.reshape(Bnn, 3 * D)
        grads[f"layer{l}_r_b"] += dr.sum(axis=(0, 1, 2))
        dA = (dr.reshape(Bnn, D) @ blocks[f"layer{l}_r_w"]).reshape(A.shape)

        dV = (
            dV
            + dvhat @ blocks[f"layer{l}_w3_w"]
            + du @ blocks[f"layer{l}_w4_w"]
            + dA[..., D : 2 * D].sum(axis=2)
            + dA[..., 2 * D :].sum(axis=1)
        )
        dE = dE + dA[..., :D]

    dE0 = dE
    er = cache["edge_raw"]
    grads["edge_w"] += np.einsum("bijd,bijc->dc", dE0, er)
    grads["edge_b"] += dE0.sum(axis=(0, 1, 2))

    grads["mlp1_w"] += np.einsum("bnd,bnc->dc", dV, cache["cat0"])
    grads["mlp1_b"] += dV.sum(axis=(0, 1))
    dcat0 = dV @ blocks["mlp1_w"]
    da2 = dcat0[..., :D]
    grads["mlp2_w"] += np.einsum("bnd,bnc->dc", da2, cache["node_raw"])
    grads["mlp2_b"] += da2.sum(axis=(0, 1))

    return np.concatenate([grads[name].ravel() for name, _ in params.specs])


def forward(
    params: NetworkParams,
    inst: ProblemInstance,
    xt: np.ndarray,
    t: int,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Single-instance forward pass through the compiled kernel path.

    Returns the (2N_t, 2^k) probability matrix. Used by inference; the
    batched python path (forward_batch) is the training/backward route.
    """
    global _eval_count
    D = params.d_hidden
    L = params.n_layers
    blocks = params.blocks
    # Canonical gauge keeps input features O(1) at any antenna count.
    feats = init_graph_features(canonical_scale(inst))
    _eval_count += 1

    s = normalize_symbols(np.asarray(xt), inst.k, rng=rng, train_mode=train_mode)
    c = sinusoidal_embed(s, D)
    temb = sinusoidal_embed(float(t), D)

    a2 = feats.node_raw @ blocks["mlp2_w"].T + blocks["mlp2_b"]
    V0 = np.concatenate([a2, c], axis=-1) @ blocks["mlp1_w"].T + blocks["mlp1_b"]
    E0 = feats.edge_raw @ blocks["edge_w"].T + blocks["edge_b"]
    tproj = np.stack(
        [
            temb @ blocks[f"layer{l}_t_w"].T + blocks[f"layer{l}_t_b"]
            for l in range(L)
        ]
    )
    Wr = np.stack([blocks[f"layer{l}_r_w"] for l in range(L)])
    br = np.stack([blocks[f"layer{l}_r_b"] for l in range(L)])
    W3 = np.stack([blocks[f"layer{l}_w3_w"] for l in range(L)])
    b3 = np.stack([blocks[f"layer{l}_w3_b"] for l in range(L)])
    W4 = np.stack([blocks[f"layer{l}_w4_w"] for l in range(L)])
    b4 = np.stack([blocks[f"layer{l}_w4_b"] for l in range(L)])
    VL = _kernels.mp_forward(V0, E0, tproj, Wr, br, W3, b3, W4, b4, params.literal_gate)
    _check_finite(VL, "message passing stack")

    hL = np.maximum(VL, 0.0)
    out = hL @ blocks["out_w"].T + blocks["out_b"]
    mu = np.tanh(out[..., 0] + s)
    sig = np.exp(np.clip(out[..., 1], -7.0, 2.0))
    centers, delta = _bins(inst.k)
    cuts = centers[:-1] + delta / 2.0
    Fc = _sigmoid((cuts - mu[..., None]) / sig[..., None])
    P = np.concatenate(
        [Fc[..., :1], np.diff(Fc, axis=-1), np.maximum(1.0 - Fc[..., -1:], 0.0)],
        axis=-1,
    )
    P[..., -1] = np.maximum(1.0 - P[..., :-1].sum(axis=-1), 0.0)
    _check_finite(P, "output head")
    return P
