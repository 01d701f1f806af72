"""Discrete-state forward noising chain and its posteriors.

States are 0-based indices into the shifted symbol alphabet: a symbol
x in {1, ..., 2^k} corresponds to state x - 1. Per-step transitions follow a
discretized Gaussian: probability mass falls off with squared symbol
distance, scaled so the amount of noise is comparable across alphabet sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NoiseSchedule",
    "TransitionSet",
    "default_schedule",
    "transition_matrix",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear noise schedule beta_1 ... beta_T."""

    T: int
    beta_start: float
    beta_end: float

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.beta_start <= 0 or self.beta_end <= 0:
            raise ValueError("beta endpoints must be positive")

    @property
    def betas(self) -> np.ndarray:
        return np.linspace(self.beta_start, self.beta_end, self.T)


def default_schedule(k: int, T: int = 100) -> NoiseSchedule:
    """Default schedule for alphabet size 2^k.

    Endpoints scale as 1/(2^k - 1)^2 so the per-step neighbor transition
    weight exp(-4 d^2 / ((2^k-1)^2 beta)) is alphabet-independent. The start
    is gentle enough that the expected flip rate after one step (about 3% for
    k=2) matches the error rate of a decent lattice detector, which is what a
    warm start feeds the chain; the end is large enough to mix essentially to
    uniform by t = T = 100.
    """
    denom = float((2**k - 1) ** 2)
    return NoiseSchedule(T=T, beta_start=1.05 / denom, beta_end=3.45 / denom)


def transition_matrix(k: int, beta: float) -> np.ndarray:
    """One-step transition matrix over 2^k states.

    Off-diagonal entries are exp(-4 (i-j)^2 / ((2^k-1)^2 beta)) divided by
    the two-sided normalizer sum_{n=-(K-1)}^{K-1} exp(-4 n^2 / ...); each
    diagonal entry absorbs the rest of its row. The result is symmetric and
    doubly stochastic with a strictly positive diagonal.
    """
    K = 2**k
    if K == 1:
        return np.ones((1, 1))
    scale = 4.0 / ((K - 1) ** 2 * beta)
    n = np.arange(-(K - 1), K)
    Z = float(np.sum(np.exp(-scale * n.astype(np.float64) ** 2)))
    idx = np.arange(K)
    d2 = (idx[:, None] - idx[None, :]).astype(np.float64) ** 2
    Q = np.exp(-scale * d2) / Z
    np.fill_diagonal(Q, 0.0)
    diag = 1.0 - Q.sum(axis=1)
    if np.any(diag <= 0.0):
        raise ValueError(
            f"transition diagonal not positive (k={k}, beta={beta}); "
            "beta too large for this alphabet"
        )
    np.fill_diagonal(Q, diag)
    return Q


@dataclass
class TransitionSet:
    """Per-step and cumulative transition matrices for one schedule.

    Q[t] is the step-t matrix (Q[0] = I unused placeholder), Qbar[t] the
    product Q[1] ... Q[t] with Qbar[0] = I.
    """

    k: int
    schedule: NoiseSchedule
    Q: np.ndarray = field(init=False, repr=False)
    Qbar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        K = 2**self.k
        T = self.schedule.T
        Q = np.empty((T + 1, K, K))
        Qbar = np.empty((T + 1, K, K))
        Q[0] = np.eye(K)
        Qbar[0] = np.eye(K)
        for t, beta in enumerate(self.schedule.betas, start=1):
            Q[t] = transition_matrix(self.k, float(beta))
            Qbar[t] = Qbar[t - 1] @ Q[t]
        self.Q = Q
        self.Qbar = Qbar
        self._skip_cache: dict[tuple[int, int], np.ndarray] = {}

    @property
    def n_states(self) -> int:
        return 2**self.k

    def _check_t(self, t: int) -> None:
        if not 0 <= t <= self.schedule.T:
            raise ValueError(f"t={t} outside [0, {self.schedule.T}]")

    def skip_product(self, t1: int, t2: int) -> np.ndarray:
        """Product Q[t1+1] ... Q[t2]; identity when t1 == t2.

        Computed by repeated multiplication, never via inverses, so it stays
        a proper stochastic matrix.
        """
        self._check_t(t1)
        self._check_t(t2)
        if t1 > t2:
            raise ValueError("skip_product requires t1 <= t2")
        key = (t1, t2)
        cached = self._skip_cache.get(key)
        if cached is None:
            out = np.eye(self.n_states)
            for s in range(t1 + 1, t2 + 1):
                out = out @ self.Q[s]
            cached = out
            self._skip_cache[key] = cached
        return cached

    def forward_sample(
        self, x0: np.ndarray, t: int, rng: np.random.Generator
    ) -> np.ndarray:
        """Sample x_t given clean states x0 (0-based, any shape)."""
        self._check_t(t)
        x0 = np.asarray(x0)
        rows = self.Qbar[t][x0.ravel()]
        cdf = np.cumsum(rows, axis=1)
        u = rng.random((rows.shape[0], 1))
        out = (cdf < u).sum(axis=1)
        return np.minimum(out, self.n_states - 1).reshape(x0.shape).astype(np.int64)

    def true_posterior(self, x0: np.ndarray, xt: np.ndarray, t: int) -> np.ndarray:
        """Posterior over x_{t-1} given known x0 and observed x_t.

        x0, xt are 0-based state arrays of shape (n,); returns (n, K) rows.
        """
        K = self.n_states
        P = np.zeros((np.asarray(x0).size, K))
        P[np.arange(P.shape[0]), np.asarray(x0).ravel()] = 1.0
        return self.model_posterior(P, xt, t)

    def model_posterior(self, P: np.ndarray, xt: np.ndarray, t: int) -> np.ndarray:
        """Posterior over x_{t-1} given a predicted distribution over x0.

        P has shape (n, K) with rows summing to 1, xt shape (n,). Row j of
        the result is Q_t[j, xt] * (P Qbar_{t-1})[j] / (P Qbar_t)[xt].
        """
        self._check_t(t)
        if t < 1:
            raise ValueError("posterior needs t >= 1")
        xt = np.asarray(xt).ravel()
        num = self.Q[t][:, xt].T * (P @ self.Qbar[t - 1])
        den = (P @ self.Qbar[t])[np.arange(xt.size), xt]
        return num / den[:, None]

    def skip_posterior(
        self, P: np.ndarray, xt2: np.ndarray, t1: int, t2: int
    ) -> np.ndarray:
        """Posterior over x_{t1} given x_{t2} and a distribution over x0.

        Generalizes the one-step posterior to a jump t2 -> t1 (t1 < t2):
        row j is Qskip[j, xt2] * (P Qbar_{t1})[j] / (P Qbar_{t2})[xt2].
        """
        if not 0 <= t1 < t2 <= self.schedule.T:
            raise ValueError("skip_posterior requires 0 <= t1 < t2 <= T")
        xt2 = np.asarray(xt2).ravel()
        Qskip = self.skip_product(t1, t2)
        num = Qskip[:, xt2].T * (P @ self.Qbar[t1])
        den = (P @ self.Qbar[t2])[np.arange(xt2.size), xt2]
        return num / den[:, None]

    def expected_forward_ser(self, t: int) -> float:
        """Probability the state at time t differs from the start state,
        averaged over a uniform start: 1 - trace(Qbar_t) / 2^k."""
        self._check_t(t)
        return float(1.0 - np.trace(self.Qbar[t]) / self.n_states)
