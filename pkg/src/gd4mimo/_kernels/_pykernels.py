"""Pure-NumPy implementations of the hot kernels.

Mirrors the compiled extension in ``_ckernels.pyx``: same signatures, same
random-uniform consumption order, same tie-break rules. Selected automatically
when the extension is not built (see package ``__init__``).
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"

_BRUTE_CHUNK = 1 << 15


def babai_nearest(R, ybar, levels):
    """Box-constrained Babai point by back-substitution.

    At each level the unconstrained center is rounded half-to-even and
    clamped to {1, ..., levels}.
    """
    n = R.shape[0]
    x = np.zeros(n, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        c = (ybar[i] - R[i, i + 1 :] @ x[i + 1 :]) / R[i, i]
        x[i] = min(max(int(np.rint(c)), 1), levels)
    return x


def klein_samples(R, ybar, levels, sigma, U):
    """Randomized Klein-Babai samples.

    ``U`` has shape (n_samples, n); sample s consumes U[s, i] at level i
    (levels processed from n-1 down to 0). Level weights over the box are
    proportional to exp(-R_ii^2 (v - c_i)^2 / (2 sigma^2)). For
    sigma <= 1e-9 the draw degenerates to deterministic Babai rounding.
    """
    n = R.shape[0]
    n_samples = U.shape[0]
    out = np.zeros((n_samples, n), dtype=np.int64)
    vals = np.arange(1, levels + 1, dtype=np.float64)
    deterministic = sigma <= 1e-9
    for s in range(n_samples):
        x = out[s]
        for i in range(n - 1, -1, -1):
            c = (ybar[i] - R[i, i + 1 :] @ x[i + 1 :]) / R[i, i]
            if deterministic:
                x[i] = min(max(int(np.rint(c)), 1), levels)
                continue
            z = (R[i, i] * (vals - c)) ** 2 / (2.0 * sigma * sigma)
            w = np.exp(-(z - z.min()))
            cdf = np.cumsum(w)
            x[i] = 1 + int(np.searchsorted(cdf, U[s, i] * cdf[-1], side="right"))
            if x[i] > levels:
                x[i] = levels
    return out


def brute_force(H, y, levels):
    """Exhaustive integer least squares over {1, ..., levels}^n.

    Returns (argmin, residual_sq, n_candidates); ties resolve to the
    lexicographically first candidate.
    """
    n = H.shape[1]
    total = levels**n
    best_res = np.inf
    best_idx = -1
    # Decode linear indices into digits with the last coordinate fastest,
    # which is exactly lexicographic order of the candidate vectors.
    place = levels ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, _BRUTE_CHUNK):
        idx = np.arange(start, min(start + _BRUTE_CHUNK, total), dtype=np.int64)
        digits = (idx[:, None] // place[None, :]) % levels + 1
        res = np.sum((digits @ H.T - y) ** 2, axis=1)
        j = int(np.argmin(res))
        if res[j] < best_res:
            best_res = float(res[j])
            best_idx = start + j
    x = (best_idx // place) % levels + 1
    return x.astype(np.int64), best_res, total


def mp_forward(V0, E0, tproj, Wr, br, W3, b3, W4, b4, literal_gate):
    """Run the gated message-passing layer stack on one instance.

    V0: (n, D) node embeddings, E0: (n, n, D) edge embeddings,
    tproj: (L, D) per-layer step-conditioning vectors, Wr: (L, D, 3D),
    W3/W4: (L, D, D). Returns the final node embeddings (n, D).
    """
    n, D = V0.shape
    L = Wr.shape[0]
    V = V0.copy()
    E = E0.copy()
    for l in range(L):
        A = np.concatenate(
            [
                E,
                np.broadcast_to(V[:, None, :], (n, n, D)),
                np.broadcast_to(V[None, :, :], (n, n, D)),
            ],
            axis=2,
        )
        r = A @ Wr[l].T + br[l]
        g = np.empty_like(r)
        pos = r >= 0
        g[pos] = 1.0 / (1.0 + np.exp(-r[pos]))
        ex = np.exp(r[~pos])
        g[~pos] = ex / (1.0 + ex)
        u = V @ W4[l].T + b4[l]
        if literal_gate:
            agg = g.sum(axis=1) * u
        else:
            agg = np.einsum("ijd,jd->id", g, u)
        vhat = V @ W3[l].T + b3[l] + agg
        V = V + np.maximum(vhat, 0.0) + tproj[l]
        E = E + r
    return V
