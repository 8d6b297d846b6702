"""Recovering group feature means from regional aggregates, and the error bounds."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

DEFAULT_RCOND = 1e-8


class RankDeficientError(ValueError):
    """The composition matrix lacks full column rank where the result requires it."""


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    M_hat: np.ndarray  # (K, m), row d is the recovered mean of group d
    residual_fro: float
    sigma_min_used: float
    rank: int

    def to_dict(self) -> dict:
        return {
            "M_hat": self.M_hat.tolist(),
            "residual_fro": self.residual_fro,
            "sigma_min_used": self.sigma_min_used,
            "rank": self.rank,
        }


@dataclass(frozen=True)
class BoundReport:
    eps_samp: float
    eps_opt: float
    sigma_min: float
    total_bound: float
    delta: float
    B: float
    m: int
    G: int
    n_min: int

    def to_dict(self) -> dict:
        return asdict(self)


def _as_matrix(x):
    return np.asarray(getattr(x, "P", getattr(x, "values", x)), dtype=float)


def _truncated_svd(P, rcond):
    U, s, Vt = np.linalg.svd(P, full_matrices=False)
    keep = s > rcond * s[0] if s.size and s[0] > 0 else np.zeros(s.size, dtype=bool)
    return U, s, Vt, keep


def pseudo_inverse(P, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Moore-Penrose pseudoinverse with singular values below ``rcond * σ_max`` dropped."""
    U, s, Vt, keep = _truncated_svd(_as_matrix(P), rcond)
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def recover_group_means(composition, aggregates, rcond: float = DEFAULT_RCOND,
                        clip: bool = False) -> RecoveryResult:
    """Least-squares group means ``M̂ = P⁺ V`` (rows are groups).

    The raw minimum-norm solution is returned; ``clip=True`` floors entries at
    ``CLIP_FLOOR`` and renormalizes rows, for feeding into tilt fitting.
    """
    P = _as_matrix(composition)
    V = _as_matrix(aggregates)
    if V.ndim != 2 or V.shape[0] != P.shape[0]:
        raise ValueError(f"aggregates need {P.shape[0]} rows, got shape {V.shape}")
    U, s, Vt, keep = _truncated_svd(P, rcond)
    M_hat = (Vt[keep].T / s[keep]) @ (U[:, keep].T @ V)
    residual = float(np.linalg.norm(P @ M_hat - V))
    sigma_min = float(s[-1]) if P.shape[0] >= P.shape[1] else 0.0
    if clip:
        M_hat = clip_to_simplex(M_hat)
    return RecoveryResult(M_hat, residual, sigma_min, int(keep.sum()))


CLIP_FLOOR = 1e-9


def clip_to_simplex(M, floor: float = CLIP_FLOOR) -> np.ndarray:
    M = np.maximum(np.asarray(M, dtype=float), floor)
    return M / M.sum(axis=-1, keepdims=True)


def stability_check(composition, V1, V2, rcond: float = DEFAULT_RCOND):
    """Both sides of ``‖M₁ - M₂‖_F <= ‖V₁ - V₂‖_F / σ_min(P)``."""
    P = _as_matrix(composition)
    s = np.linalg.svd(P, compute_uv=False)
    if P.shape[0] < P.shape[1] or s[-1] <= rcond * s[0]:
        raise RankDeficientError("stability bound needs a full-column-rank composition matrix")
    M1 = recover_group_means(P, V1, rcond).M_hat
    M2 = recover_group_means(P, V2, rcond).M_hat
    lhs = float(np.linalg.norm(M1 - M2))
    rhs = float(np.linalg.norm(_as_matrix(V1) - _as_matrix(V2)) / s[-1])
    return lhs, rhs


def finite_sample_bound(B: float, m: int, G: int, n_min: int, delta: float) -> float:
    """Sampling term ``ε_samp = B(√m + √(2 ln(G/δ))) / √n_min · √G``.

    Divide by σ_min(P) (see ``overall_bound``) to get the bound on the group means.
    """
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if n_min < 1:
        raise ValueError("n_min must be >= 1")
    if B <= 0 or m < 1 or G < 1:
        raise ValueError("need B > 0, m >= 1, G >= 1")
    return B * (math.sqrt(m) + math.sqrt(2.0 * math.log(G / delta))) / math.sqrt(n_min) * math.sqrt(G)


def overall_bound(eps_opt: float, eps_samp: float, sigma_min: float) -> float:
    if eps_opt < 0 or eps_samp < 0 or sigma_min < 0:
        raise ValueError("bound inputs must be nonnegative")
    if sigma_min == 0:
        return math.inf
    return (eps_opt + eps_samp) / sigma_min


def bound_report(composition, n_per_region, m: int, delta: float, eps_opt: float = 0.0,
                 B: float = 1.0, rank_tol: float = DEFAULT_RCOND) -> BoundReport:
    """Sampling term, σ_min and the overall bound for a partition.

    A σ_min below ``rank_tol * σ_max`` is round-off on a rank-deficient matrix and
    is reported as 0, making the bound infinite.
    """
    P = _as_matrix(composition)
    n_min = int(np.min(n_per_region))
    eps_samp = finite_sample_bound(B, m, P.shape[0], n_min, delta)
    s = np.linalg.svd(P, compute_uv=False)
    sigma_min = float(s[-1]) if P.shape[0] >= P.shape[1] else 0.0
    if sigma_min <= rank_tol * s[0]:
        sigma_min = 0.0
    return BoundReport(
        eps_samp=eps_samp,
        eps_opt=float(eps_opt),
        sigma_min=sigma_min,
        total_bound=overall_bound(eps_opt, eps_samp, sigma_min),
        delta=delta,
        B=B,
        m=m,
        G=P.shape[0],
        n_min=n_min,
    )


def phi_ipm(mu1, mu2) -> float:
    """Feature-induced IPM: sup over unit w of |⟨w, μ₁ - μ₂⟩| = ‖μ₁ - μ₂‖₂."""
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    if mu1.shape != mu2.shape:
        raise ValueError(f"dimension mismatch {mu1.shape} vs {mu2.shape}")
    return float(np.linalg.norm(mu1 - mu2))
