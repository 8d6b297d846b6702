"""Two-phase fitting on the Markov backbone.

Phase 1 estimates a base chain from unlabeled trajectories. Phase 2 recovers one
exponential tilt per demographic group from regional aggregates, either

* ``TWO_STAGE``: pseudoinverse recovery of the group means, then an I-projection
  of the base chain onto each group's moment constraint (convex dual), or
* ``DIRECT_L2``: joint minimization of the squared aggregate mismatch
  ``Σ_g ‖ν_λ(g) - v̂(g)‖²`` with exact gradients.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .chain import BaseChain, ChainMarginals, count_covariance, forward_log_partition, sample_paths
from .divergence import js_divergence, tv_distance
from .features import FeatureMap, FeatureMapKind
from .recovery import CLIP_FLOOR, DEFAULT_RCOND, RecoveryResult, clip_to_simplex, recover_group_means
from .world import TrajectorySet, as_token_array

log = logging.getLogger(__name__)


class FitMode(str, Enum):
    TWO_STAGE = "two_stage"
    DIRECT_L2 = "direct_l2"


class FittedBy(str, Enum):
    DUAL = "dual"
    DIRECT_L2 = "direct_l2"
    GROUND_TRUTH = "ground_truth"
    BASELINE = "baseline"


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 10_000
    armijo_c: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0
    max_backtracks: int = 60
    # "newton" (damped, exact Hessian) or "gd" for the dual; "gauss_newton" or "gd" for DirectL2
    method: str = "newton"
    clip_floor: float = CLIP_FLOOR
    rcond: float = DEFAULT_RCOND
    # gradient-norm tolerance of DirectL2; the aggregate loss is flat along weak directions of P
    l2_tol: float = 1e-12

    @classmethod
    def from_dict(cls, d: dict | None) -> "FitOptions":
        return cls(**(d or {}))


@dataclass
class FitReport:
    iterations: int = 0
    final_objective: float = float("nan")
    grad_norm: float = float("nan")
    converged: bool = False
    moment_error_l1: float = float("nan")
    clipped: bool = False
    aggregate_js: np.ndarray | None = None
    aggregate_tv: np.ndarray | None = None
    eps_opt: float = float("nan")
    objective_trace: list = field(default_factory=list)
    groups: list = field(default_factory=list)
    recovery: RecoveryResult | None = None
    message: str = ""

    def to_dict(self) -> dict:
        out = {
            "iterations": self.iterations,
            "final_objective": self.final_objective,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
            "moment_error_l1": self.moment_error_l1,
            "clipped": self.clipped,
            "eps_opt": self.eps_opt,
            "message": self.message,
        }
        if self.aggregate_js is not None:
            out["aggregate_js"] = self.aggregate_js.tolist()
            out["aggregate_tv"] = self.aggregate_tv.tolist()
        if self.groups:
            out["groups"] = [g.to_dict() for g in self.groups]
        if self.recovery is not None:
            out["recovery_residual_fro"] = self.recovery.residual_fro
            out["recovery_rank"] = self.recovery.rank
        return out


@dataclass(frozen=True, eq=False)
class TiltParams:
    """Per-group natural parameters over the feature space of ``feature_map``."""

    lambdas: np.ndarray  # (K, m)
    base: BaseChain
    feature_map: FeatureMap
    fitted_by: FittedBy = FittedBy.DUAL

    def __post_init__(self):
        lambdas = np.atleast_2d(np.asarray(self.lambdas, dtype=float))
        if lambdas.shape[1] != self.feature_map.m or not np.isfinite(lambdas).all():
            raise ValueError(f"lambdas must be a finite (K, {self.feature_map.m}) array")
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "fitted_by", FittedBy(self.fitted_by))

    @property
    def K(self) -> int:
        return self.lambdas.shape[0]

    def marginals(self, group: int) -> ChainMarginals:
        unary, pairwise = self.feature_map.expand(self.lambdas[group])
        return forward_log_partition(self.base, unary, pairwise)[1]

    def poi_means(self) -> np.ndarray:
        """(K, V) expected normalized POI histograms."""
        return np.stack([self.marginals(d).mean_occupancy() for d in range(self.K)])

    def feature_means(self) -> np.ndarray:
        return np.stack([self.feature_map.expected(self.marginals(d)) for d in range(self.K)])

    def sample(self, group: int, n: int, rng) -> TrajectorySet:
        return TrajectorySet(sample_paths(self.marginals(group), n, rng), np.full(n, group))

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas.tolist(),
            "feature_map": self.feature_map.kind.value,
            "fitted_by": self.fitted_by.value,
            "base": {
                "initial": self.base.initial.tolist(),
                "transition": self.base.transition.tolist(),
                "horizon": self.base.horizon,
            },
        }

    @classmethod
    def from_dict(cls, d: dict, categories, n_categories: int) -> "TiltParams":
        fmap = FeatureMap(FeatureMapKind(d["feature_map"]), np.asarray(categories), n_categories)
        return cls(np.array(d["lambdas"]), BaseChain(**d["base"]), fmap, d["fitted_by"])


def poi_feature_map(V: int) -> FeatureMap:
    return FeatureMap(FeatureMapKind.POI_HISTOGRAM, np.zeros(V, dtype=np.int64), 1)


def baseline_params(base: BaseChain, K: int, feature_map: FeatureMap | None = None) -> TiltParams:
    """K copies of the untilted base chain."""
    fmap = feature_map or poi_feature_map(base.n_states)
    return TiltParams(np.zeros((K, fmap.m)), base, fmap, FittedBy.BASELINE)


# ---------------------------------------------------------------------------
# phase 1


def fit_base_chain(trajectories, V: int, smoothing_eps: float = 0.0) -> BaseChain:
    """Smoothed maximum-likelihood Markov chain from unlabeled trajectories."""
    tokens = as_token_array(trajectories)
    if tokens.size == 0 or tokens.shape[0] == 0:
        raise ValueError("need at least one trajectory")
    if tokens.min() < 0 or tokens.max() >= V:
        raise ValueError(f"token out of range for V={V}")
    if smoothing_eps < 0:
        raise ValueError("smoothing_eps must be nonnegative")
    n, T = tokens.shape
    first = np.bincount(tokens[:, 0], minlength=V).astype(float)
    bigram = np.zeros((V, V))
    if T > 1:
        np.add.at(bigram, (tokens[:, :-1].ravel(), tokens[:, 1:].ravel()), 1.0)
    initial = (first + smoothing_eps) / (n + V * smoothing_eps)
    from_counts = bigram.sum(axis=1, keepdims=True) + V * smoothing_eps
    # rows never left (and unsmoothed) fall back to uniform
    transition = np.where(from_counts > 0, (bigram + smoothing_eps) / np.where(from_counts > 0, from_counts, 1), 1.0 / V)
    return BaseChain(initial, transition, T)


# ---------------------------------------------------------------------------
# dual (I-projection) fit


def dual_objective(base: BaseChain, feature_map: FeatureMap, params, mu_target):
    """``f(λ) = log Z(λ) - ⟨λ, s·μ_target⟩`` and its gradient ``s·(μ_λ - μ_target)``.

    ``s`` is the number of count slots (T, or T-1 for bigram features).
    Returns ``(f, grad, marginals)``.
    """
    scale = feature_map.count_scale(base.horizon)
    unary, pairwise = feature_map.expand(params)
    log_z, marg = forward_log_partition(base, unary, pairwise)
    mu = feature_map.expected(marg)
    f = log_z - scale * float(np.dot(params, mu_target))
    return f, scale * (mu - mu_target), marg


def dual_hessian(base: BaseChain, feature_map: FeatureMap, params, marginals: ChainMarginals, mu_target):
    """Hessian of the dual: covariance of the feature counts."""
    if feature_map.kind is FeatureMapKind.POI_HISTOGRAM:
        return count_covariance(marginals)
    if feature_map.kind is FeatureMapKind.CATEGORY_HISTOGRAM:
        onehot = np.eye(feature_map.n_categories)[feature_map.categories]
        return onehot.T @ count_covariance(marginals) @ onehot
    # bigram counts: central differences of the analytic gradient
    m = feature_map.m
    h = 1e-5
    H = np.empty((m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        gp = dual_objective(base, feature_map, params + e, mu_target)[1]
        gm = dual_objective(base, feature_map, params - e, mu_target)[1]
        H[:, j] = (gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


def _newton_direction(H, g):
    w, U = np.linalg.eigh(H)
    keep = w > 1e-12 * max(w.max(), 1e-300)
    return -(U[:, keep] / w[keep]) @ (U[:, keep].T @ g)


def _armijo(fun, x, f0, g, direction, step, opts):
    slope = float(np.dot(g, direction))
    if slope >= 0:
        direction, slope = -g, -float(np.dot(g, g))
    slack = 1e-13 * max(1.0, abs(f0))
    for _ in range(opts.max_backtracks):
        x_new = x + step * direction
        f_new = fun(x_new)
        if np.isfinite(f_new) and f_new <= f0 + opts.armijo_c * step * slope + slack:
            return x_new, f_new, step
        step *= opts.shrink
    return None, f0, 0.0


def _center(x):
    return x - x.mean()


def fit_tilt_dual(base: BaseChain, mu_target, opts: FitOptions | None = None,
                  feature_map: FeatureMap | None = None, init=None):
    """I-projection of ``base`` onto ``{Q : E_Q[φ] = mu_target}``.

    Minimizes the convex dual; converged when ``‖μ_λ - μ_target‖₁ < opts.tol``.
    Returns ``(lambda, FitReport)``. ``lambda`` is mean-centred (gauge fixed).
    """
    opts = opts or FitOptions()
    fmap = feature_map or poi_feature_map(base.n_states)
    mu_target = np.asarray(mu_target, dtype=float)
    if mu_target.shape != (fmap.m,):
        raise ValueError(f"target must have length {fmap.m}")
    report = FitReport()
    if (mu_target <= 0).any() or abs(mu_target.sum() - 1) > 1e-9:
        mu_target = clip_to_simplex(mu_target, opts.clip_floor)
        report.clipped = True
    scale = fmap.count_scale(base.horizon)

    lam = np.zeros(fmap.m) if init is None else _center(np.asarray(init, dtype=float))
    fun = lambda x: dual_objective(base, fmap, x, mu_target)[0]
    f, g, marg = dual_objective(base, fmap, lam, mu_target)
    for it in range(opts.max_iter + 1):
        err = float(np.abs(g).sum()) / scale
        report.objective_trace.append(f)
        if err < opts.tol:
            report.converged = True
            break
        if it == opts.max_iter:
            break
        if opts.method == "newton":
            direction = _newton_direction(dual_hessian(base, fmap, lam, marg, mu_target), g)
        elif opts.method == "gd":
            direction = -g
        else:
            raise ValueError(f"unknown method {opts.method!r}")
        lam_new, f_new, step = _armijo(fun, lam, f, g, direction, opts.initial_step, opts)
        if lam_new is None:
            report.message = "line search failed"
            break
        lam = _center(lam_new)
        f, g, marg = dual_objective(base, fmap, lam, mu_target)
    report.iterations = it
    report.final_objective = f
    report.grad_norm = float(np.linalg.norm(g))
    report.moment_error_l1 = float(np.abs(g).sum()) / scale
    if not report.converged:
        report.message = report.message or "iteration limit reached"
        log.warning("dual fit did not converge: moment error %.3g", report.moment_error_l1)
    return lam, report


# ---------------------------------------------------------------------------
# DirectL2


def _feature_jacobian(feature_map: FeatureMap, marg: ChainMarginals, T: int):
    """∂μ/∂λ for unary feature maps: Cov(counts) / T pooled to the feature space."""
    cov = count_covariance(marg) / T
    if feature_map.kind is FeatureMapKind.POI_HISTOGRAM:
        return cov
    onehot = np.eye(feature_map.n_categories)[feature_map.categories]
    return onehot.T @ cov @ onehot


def direct_l2_objective(base: BaseChain, composition, aggregates, lambdas,
                        feature_map: FeatureMap | None = None, with_jacobians: bool = True):
    """``L = Σ_g ‖Σ_d P[g,d] μ_{λ_d} - v̂(g)‖²`` with its exact gradient.

    Returns ``(L, grad (K, m), residual (G, m), jacobians list or None, means (K, m))``.
    """
    fmap = feature_map or poi_feature_map(base.n_states)
    if fmap.is_pairwise:
        raise ValueError("DirectL2 supports unigram feature maps only")
    P = np.asarray(getattr(composition, "P", composition), dtype=float)
    V_hat = np.asarray(getattr(aggregates, "values", aggregates), dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    K = P.shape[1]
    means, jacs = np.empty((K, fmap.m)), []
    for d in range(K):
        unary, _ = fmap.expand(lambdas[d])
        marg = forward_log_partition(base, unary, None, with_pairs=False)[1]
        means[d] = fmap.expected(marg)
        if with_jacobians:
            jacs.append(_feature_jacobian(fmap, marg, base.horizon))
    resid = P @ means - V_hat
    L = float(np.sum(resid ** 2))
    if not with_jacobians:
        return L, None, resid, None, means
    back = 2.0 * P.T @ resid  # (K, m)
    grad = np.stack([jacs[d] @ back[d] for d in range(K)])
    return L, grad, resid, jacs, means


def _gauss_newton_direction(P, jacs, resid, damping=0.0, rcond=1e-12):
    """Levenberg-Marquardt step: least squares on the stacked Jacobian plus ``√damping·I``.

    Working on J itself avoids squaring its condition number; the damping keeps
    the step from running off along the weak directions of P when the
    aggregates are noisy and cannot be matched exactly.
    """
    G, K, m = P.shape[0], len(jacs), jacs[0].shape[0]
    J = np.zeros((G * m + (K * m if damping > 0 else 0), K * m))
    for g in range(G):
        for d in range(K):
            if P[g, d] != 0:
                J[g * m:(g + 1) * m, d * m:(d + 1) * m] = P[g, d] * jacs[d]
    rhs = -resid.reshape(-1)
    if damping > 0:
        J[G * m:] = np.sqrt(damping) * np.eye(K * m)
        rhs = np.concatenate([rhs, np.zeros(K * m)])
    step = np.linalg.lstsq(J, rhs, rcond=rcond)[0]
    return step.reshape(K, m)


def fit_direct_l2(base: BaseChain, composition, aggregates, opts: FitOptions | None = None,
                  feature_map: FeatureMap | None = None, init=None):
    """Joint aggregate-loss minimization over all K tilts; converged when ‖∇L‖ < opts.l2_tol."""
    opts = opts or FitOptions(method="gauss_newton")
    fmap = feature_map or poi_feature_map(base.n_states)
    P = np.asarray(getattr(composition, "P", composition), dtype=float)
    K = P.shape[1]
    lambdas = np.zeros((K, fmap.m)) if init is None else np.array(init, dtype=float)
    report = FitReport()

    def fun(flat):
        return direct_l2_objective(base, P, aggregates, flat.reshape(K, -1), fmap, with_jacobians=False)[0]

    L, grad, resid, jacs, _ = direct_l2_objective(base, P, aggregates, lambdas, fmap)
    damping = 1e-8
    for it in range(opts.max_iter + 1):
        report.objective_trace.append(L)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < opts.l2_tol:
            report.converged = True
            break
        if it == opts.max_iter:
            break
        if opts.method == "gauss_newton":
            direction = _gauss_newton_direction(P, jacs, resid, damping)
        elif opts.method == "gd":
            direction = -grad
        else:
            raise ValueError(f"unknown method {opts.method!r}")
        new, L_new, step = _armijo(fun, lambdas.reshape(-1), L, grad.reshape(-1),
                                   direction.reshape(-1), opts.initial_step, opts)
        if new is None:
            report.message = "line search failed"
            break
        if opts.method == "gauss_newton":
            # full steps relax the damping, cut-back steps stiffen it
            damping = max(damping / 10, 1e-30) if step == opts.initial_step else min(damping * 10, 1e6)
        lambdas = new.reshape(K, -1)
        lambdas -= lambdas.mean(axis=1, keepdims=True)
        L, grad, resid, jacs, _ = direct_l2_objective(base, P, aggregates, lambdas, fmap)
    report.iterations = it
    report.final_objective = L
    report.grad_norm = float(np.linalg.norm(grad))
    if not report.converged:
        report.message = report.message or "iteration limit reached"
        log.warning("DirectL2 fit did not converge: |grad| = %.3g", report.grad_norm)
    return lambdas, report


# ---------------------------------------------------------------------------
# phase 2 driver


def aggregate_losses(composition, model_means, aggregates):
    """Per-region (JS, TV) between model-implied and observed aggregates."""
    P = np.asarray(getattr(composition, "P", composition), dtype=float)
    V_hat = np.asarray(getattr(aggregates, "values", aggregates), dtype=float)
    V_model = P @ model_means
    js = np.array([js_divergence(a, b) for a, b in zip(V_model, np.maximum(V_hat, 0))])
    tv = np.array([tv_distance(a, b) for a, b in zip(V_model, np.maximum(V_hat, 0))])
    return js, tv, float(np.linalg.norm(V_model - V_hat))


def atlas_fit(base: BaseChain, composition, aggregates, mode=FitMode.TWO_STAGE,
              opts: FitOptions | None = None, feature_map: FeatureMap | None = None):
    """Fit K group tilts of ``base`` from regional aggregates; returns ``(TiltParams, FitReport)``."""
    mode = FitMode(mode)
    fmap = feature_map or poi_feature_map(base.n_states)
    P = np.asarray(getattr(composition, "P", composition), dtype=float)
    V_hat = np.asarray(getattr(aggregates, "values", aggregates), dtype=float)
    if (P < 0).any() or np.abs(P.sum(axis=1) - 1).max() > 1e-9:
        raise ValueError("composition rows must lie in the simplex")
    if V_hat.shape != (P.shape[0], fmap.m):
        raise ValueError(f"aggregates must be ({P.shape[0]}, {fmap.m}), got {V_hat.shape}")

    if mode is FitMode.TWO_STAGE:
        opts = opts or FitOptions()
        recovery = recover_group_means(P, V_hat, opts.rcond)
        targets = clip_to_simplex(recovery.M_hat, opts.clip_floor)
        lambdas, reports = [], []
        for d in range(P.shape[1]):
            lam, rep = fit_tilt_dual(base, targets[d], opts, fmap)
            lambdas.append(lam)
            reports.append(rep)
        params = TiltParams(np.stack(lambdas), base, fmap, FittedBy.DUAL)
        report = FitReport(
            iterations=max(r.iterations for r in reports),
            final_objective=float(sum(r.final_objective for r in reports)),
            grad_norm=float(max(r.grad_norm for r in reports)),
            converged=all(r.converged for r in reports),
            moment_error_l1=float(max(r.moment_error_l1 for r in reports)),
            clipped=bool(np.any(recovery.M_hat < opts.clip_floor)),
            groups=reports,
            recovery=recovery,
        )
    else:
        opts = opts or FitOptions(method="gauss_newton")
        if opts.method == "newton":
            opts = replace(opts, method="gauss_newton")
        lambdas, report = fit_direct_l2(base, P, V_hat, opts, fmap)
        params = TiltParams(lambdas, base, fmap, FittedBy.DIRECT_L2)
    report.aggregate_js, report.aggregate_tv, report.eps_opt = aggregate_losses(
        P, params.feature_means(), V_hat
    )
    return params, report
