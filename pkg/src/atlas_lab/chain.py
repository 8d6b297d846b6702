"""Markov chains over POI tokens and their exponential tilts.

A tilted path measure has the form

    Q(x) ∝ initial(x_1) · Π_t transition(x_{t-1}, x_t) · exp(Σ_t unary[x_t] + Σ_t pairwise[x_{t-1}, x_t])

which is again a (position-inhomogeneous) Markov chain. Everything here is
computed exactly with forward/backward messages in log space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STOCHASTIC_TOL = 1e-12


def logsumexp(a, axis=None):
    # scipy.special.logsumexp has ~0.1 ms of dispatch overhead per call, which
    # dominates the O(V^2) messages at the sizes used here
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())


@dataclass(frozen=True, eq=False)
class BaseChain:
    """Time-homogeneous Markov chain with a fixed horizon of ``horizon`` tokens."""

    initial: np.ndarray
    transition: np.ndarray
    horizon: int

    def __post_init__(self):
        initial = np.asarray(self.initial, dtype=float)
        transition = np.asarray(self.transition, dtype=float)
        if initial.ndim != 1 or transition.shape != (initial.size, initial.size):
            raise ValueError(
                f"initial {initial.shape} and transition {transition.shape} do not conform"
            )
        if int(self.horizon) < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if (initial < 0).any() or (transition < 0).any():
            raise ValueError("chain probabilities must be nonnegative")
        if abs(initial.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValueError(f"initial sums to {initial.sum()!r}, not 1")
        row_err = np.abs(transition.sum(axis=1) - 1.0).max()
        if row_err > STOCHASTIC_TOL:
            raise ValueError(f"transition rows deviate from 1 by {row_err:.3g}")
        initial.setflags(write=False)
        transition.setflags(write=False)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def n_states(self) -> int:
        return self.initial.size

    def __eq__(self, other):
        if not isinstance(other, BaseChain):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.initial, other.initial)
            and np.array_equal(self.transition, other.transition)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ChainMarginals:
    """Exact marginals of a tilted chain.

    Attributes
    ----------
    position : (T, V) array
        ``position[t, v] = P(x_t = v)``.
    steps : (T-1, V, V) array
        Conditional transitions ``steps[t, u, v] = P(x_{t+1} = v | x_t = u)``
        of the tilted measure. Rows of unreachable states are uniform.
    log_z : float
        Log partition function of the tilt relative to the base chain.
    pair : (T-1, V, V) array or None
        ``pair[t, u, v] = P(x_t = u, x_{t+1} = v)``.
    """

    position: np.ndarray
    steps: np.ndarray
    log_z: float
    pair: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return self.position.shape[0]

    @property
    def n_states(self) -> int:
        return self.position.shape[1]

    def mean_occupancy(self) -> np.ndarray:
        """Expected normalized POI histogram, ``(1/T) Σ_t P(x_t = ·)``."""
        return self.position.mean(axis=0)


def _safe_log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def log_potentials(base: BaseChain, unary=None, pairwise=None):
    """Log weights ``(log_init, log_step)`` of the tilted path measure."""
    V = base.n_states
    unary = np.zeros(V) if unary is None else np.asarray(unary, dtype=float)
    if unary.shape != (V,):
        raise ValueError(f"unary tilt must have shape ({V},), got {unary.shape}")
    log_init = _safe_log(base.initial) + unary
    log_step = _safe_log(base.transition) + unary[None, :]
    if pairwise is not None:
        pairwise = np.asarray(pairwise, dtype=float)
        if pairwise.shape != (V, V):
            raise ValueError(f"pairwise tilt must have shape ({V}, {V}), got {pairwise.shape}")
        log_step = log_step + pairwise
    return log_init, log_step


def _forward(log_init, log_step, T):
    log_alpha = np.empty((T, log_init.size))
    log_alpha[0] = log_init
    for t in range(1, T):
        log_alpha[t] = logsumexp(log_alpha[t - 1][:, None] + log_step, axis=0)
    return log_alpha


def _backward(log_step, T, V):
    log_beta = np.zeros((T, V))
    for t in range(T - 2, -1, -1):
        log_beta[t] = logsumexp(log_step + log_beta[t + 1][None, :], axis=1)
    return log_beta


def _normalize_rows(logits):
    finite = np.isfinite(logits).any(axis=-1, keepdims=True)
    shift = np.where(finite, np.max(logits, axis=-1, keepdims=True), 0.0)
    w = np.exp(logits - shift)
    s = w.sum(axis=-1, keepdims=True)
    uniform = np.full_like(w, 1.0 / w.shape[-1])
    return np.where(s > 0, w / np.where(s > 0, s, 1.0), uniform)


def forward_log_partition(base: BaseChain, lam=None, pairwise=None, with_pairs: bool = True):
    """Log partition of the tilt and the exact marginals of the tilted chain.

    ``log_z = log Σ_x base(x) exp(Σ_t lam[x_t] + Σ_t pairwise[x_{t-1}, x_t])``,
    i.e. the log normalizer relative to the base chain (0 for a zero tilt).
    """
    T, V = base.horizon, base.n_states
    log_init, log_step = log_potentials(base, lam, pairwise)
    log_alpha = _forward(log_init, log_step, T)
    log_z = float(logsumexp(log_alpha[-1]))
    if not np.isfinite(log_z):
        raise ValueError("tilted measure has zero total mass")
    log_beta = _backward(log_step, T, V)

    position = np.exp(log_alpha + log_beta - log_z)
    position /= position.sum(axis=1, keepdims=True)
    # conditional steps: log_step(u, v) + log_beta_{t+1}(v) - log_beta_t(u)
    steps = _normalize_rows(log_step[None, :, :] + log_beta[1:, None, :])
    pair = None
    if with_pairs:
        pair = position[:-1, :, None] * steps
    return log_z, ChainMarginals(position=position, steps=steps, log_z=log_z, pair=pair)


def tilted_marginals(base: BaseChain, lam=None, pairwise=None, with_pairs: bool = True) -> ChainMarginals:
    """Forward-backward marginals of the tilted chain (see ``forward_log_partition``)."""
    return forward_log_partition(base, lam, pairwise, with_pairs=with_pairs)[1]


def chain_marginals(initial, transition, horizon: int) -> ChainMarginals:
    """Marginals of an untilted chain, without the log-space machinery."""
    initial = np.asarray(initial, dtype=float)
    transition = np.asarray(transition, dtype=float)
    position = np.empty((horizon, initial.size))
    position[0] = initial
    for t in range(1, horizon):
        position[t] = position[t - 1] @ transition
    steps = np.broadcast_to(transition, (max(horizon - 1, 0),) + transition.shape).copy()
    pair = position[:-1, :, None] * steps
    return ChainMarginals(position=position, steps=steps, log_z=0.0, pair=pair)


def count_covariance(marginals: ChainMarginals) -> np.ndarray:
    """Covariance of the POI visit-count vector under the tilted chain.

    ``Cov(c_u, c_v) = Σ_{s,t} [P(x_s=u, x_t=v) - P(x_s=u) P(x_t=v)]``. The
    cross-position joints are accumulated with the conditional step matrices:
    ``R_t = (R_{t-1} + diag(p_{t-1})) Q_{t-1}`` holds ``Σ_{s<t} P(x_s=·, x_t=·)``.
    """
    position, steps = marginals.position, marginals.steps
    T, V = position.shape
    total = position.sum(axis=0)
    cov = np.diag(total) - np.outer(total, total)
    running = np.zeros((V, V))
    for t in range(1, T):
        running = (running + np.diag(position[t - 1])) @ steps[t - 1]
        cov += running + running.T
    return cov


def sample_paths(marginals: ChainMarginals, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` exact samples from the tilted chain; returns an (n, T) int array."""
    T, V = marginals.position.shape
    out = np.empty((n, T), dtype=np.int64)
    if n == 0:
        return out
    out[:, 0] = _inverse_cdf(np.cumsum(marginals.position[0])[None, :], rng.random(n))
    cdfs = np.cumsum(marginals.steps, axis=2)
    for t in range(1, T):
        out[:, t] = _inverse_cdf(cdfs[t - 1][out[:, t - 1]], rng.random(n))
    return out


def _inverse_cdf(cdf, u):
    idx = (cdf < u[:, None] * cdf[:, -1:]).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)
