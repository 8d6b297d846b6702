"""Demographic composition matrices and their conditioning diagnostics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

SIMPLEX_TOL = 1e-12
DEFAULT_RANK_TOL = 1e-8

# age x gender bins, in the column order used by all per-group tables
GROUP_LABELS = ("<30M", "<30F", "30-40M", "30-40F", "40-50M", "40-50F", ">50M", ">50F")


class Provenance(str, Enum):
    DEMO_GROUPS = "demogroups"
    FULL_RANK = "fullrank"
    RANK_DEF = "rankdef"
    MESSY = "messy"
    FROM_COUNTS = "fromcounts"
    CUSTOM = "custom"


FIXED_KINDS = (Provenance.DEMO_GROUPS, Provenance.FULL_RANK, Provenance.RANK_DEF, Provenance.MESSY)

# Row-normalized proportions as printed (6 decimals); rows are re-normalized on load.
_FULL_RANK = [
    [0.000000, 0.000000, 0.000000, 0.500101, 0.499899, 0.000000, 0.000000, 0.000000],
    [0.000000, 0.000000, 0.500101, 0.000000, 0.000000, 0.000000, 0.000000, 0.499899],
    [0.000000, 0.500101, 0.000000, 0.000000, 0.000000, 0.000000, 0.499899, 0.000000],
    [0.500101, 0.000000, 0.000000, 0.000000, 0.000000, 0.499899, 0.000000, 0.000000],
    [0.500101, 0.000000, 0.000000, 0.499899, 0.000000, 0.000000, 0.000000, 0.000000],
    [0.000000, 0.000000, 0.500101, 0.000000, 0.000000, 0.499899, 0.000000, 0.000000],
    [0.000000, 0.500101, 0.000000, 0.000000, 0.499899, 0.000000, 0.000000, 0.000000],
    [0.000000, 0.000000, 0.000000, 0.000000, 0.000000, 0.000000, 0.500101, 0.499899],
]
_RANK_DEF = [
    [0.500000, 0.000000, 0.000000, 0.500000, 0.000000, 0.000000, 0.000000, 0.000000],
    [0.000000, 0.500000, 0.000000, 0.000000, 0.500000, 0.000000, 0.000000, 0.000000],
    [0.000000, 0.000000, 0.500000, 0.000000, 0.000000, 0.000000, 0.000000, 0.500000],
    [0.000000, 0.000000, 0.000000, 0.000000, 0.000000, 0.500000, 0.500000, 0.000000],
    [0.500000, 0.000000, 0.000000, 0.000000, 0.000000, 0.500000, 0.000000, 0.000000],
    [0.000000, 0.000000, 0.000000, 0.500000, 0.000000, 0.000000, 0.500000, 0.000000],
    [0.125130, 0.125130, 0.125130, 0.125130, 0.124870, 0.124870, 0.124870, 0.124870],
    [0.299948, 0.100156, 0.000000, 0.250000, 0.099896, 0.150104, 0.099896, 0.000000],
]
_MESSY = [
    [0.250000, 0.250000, 0.250000, 0.250000, 0.000000, 0.000000, 0.000000, 0.000000],
    [0.200000, 0.000000, 0.200000, 0.200000, 0.200000, 0.200000, 0.000000, 0.000000],
    [0.000000, 0.000000, 0.000000, 0.250000, 0.250000, 0.250000, 0.250000, 0.000000],
    [0.000000, 0.200000, 0.200000, 0.000000, 0.000000, 0.200000, 0.200000, 0.200000],
    [0.225000, 0.125000, 0.225000, 0.225000, 0.100000, 0.100000, 0.000000, 0.000000],
    [0.000000, 0.100000, 0.100000, 0.125000, 0.125000, 0.225000, 0.225000, 0.100000],
    [0.140000, 0.060000, 0.200000, 0.140000, 0.140000, 0.200000, 0.060000, 0.060000],
    [0.150000, 0.150000, 0.150000, 0.250000, 0.100000, 0.100000, 0.100000, 0.000000],
]


@dataclass(frozen=True, eq=False)
class CompositionMatrix:
    """G x K row-stochastic matrix; row g is the demographic mix p(.|g) of region g."""

    P: np.ndarray
    provenance: Provenance = Provenance.CUSTOM

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or min(P.shape) < 1:
            raise ValueError(f"composition must be a nonempty 2-D matrix, got shape {P.shape}")
        if (P < 0).any():
            raise ValueError("composition entries must be nonnegative")
        err = np.abs(P.sum(axis=1) - 1.0).max()
        if err > SIMPLEX_TOL:
            raise ValueError(f"composition rows must sum to 1 (max deviation {err:.3g})")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def G(self) -> int:
        return self.P.shape[0]

    @property
    def K(self) -> int:
        return self.P.shape[1]


@dataclass(frozen=True)
class PartitionDiagnostics:
    sigma_min: float
    rank: int
    condition_number: float
    singular_values: tuple

    def to_dict(self) -> dict:
        return {
            "sigma_min": self.sigma_min,
            "rank": self.rank,
            "condition_number": self.condition_number,
            "singular_values": list(self.singular_values),
        }


def _row_normalize(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    return counts / counts.sum(axis=1, keepdims=True)


def build_paper_partition(kind, K: int = 8) -> CompositionMatrix:
    """The four 8-group partitions (DemoGroups, FullRank, RankDef, Messy)."""
    if not isinstance(kind, Provenance):
        kind = Provenance(str(kind).lower().replace("-", "").replace("_", ""))
    if K != 8:
        raise ValueError("the fixed partitions are defined for K = 8 groups only")
    if kind is Provenance.DEMO_GROUPS:
        return CompositionMatrix(np.eye(8), kind)
    tables = {Provenance.FULL_RANK: _FULL_RANK, Provenance.RANK_DEF: _RANK_DEF, Provenance.MESSY: _MESSY}
    if kind not in tables:
        raise ValueError(f"unsupported partition kind {kind.value!r}")
    return CompositionMatrix(_row_normalize(tables[kind]), kind)


def build_from_counts(counts) -> CompositionMatrix:
    """Row-normalize an integer region-by-group count matrix."""
    counts = np.asarray(counts)
    if counts.ndim != 2:
        raise ValueError("counts must be a 2-D matrix")
    if (counts < 0).any():
        raise ValueError("counts must be nonnegative")
    sums = counts.sum(axis=1)
    if (sums <= 0).any():
        raise ValueError(f"rows {np.flatnonzero(sums <= 0).tolist()} have no individuals")
    return CompositionMatrix(_row_normalize(counts), Provenance.FROM_COUNTS)


def random_composition(G: int, K: int, rng, concentration: float = 1.0) -> CompositionMatrix:
    """Dirichlet rows; full column rank with probability one when G >= K."""
    return CompositionMatrix(rng.dirichlet(np.full(K, concentration), size=G), Provenance.CUSTOM)


def diagnostics(composition, rank_tol: float = DEFAULT_RANK_TOL) -> PartitionDiagnostics:
    P = np.asarray(getattr(composition, "P", composition), dtype=float)
    s = np.linalg.svd(P, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return PartitionDiagnostics(0.0, 0, float("inf"), tuple(s.tolist()))
    rank = int((s > rank_tol * s[0]).sum())
    # σ_min over the K columns: zero when G < K
    sigma_min = float(s[-1]) if P.shape[0] >= P.shape[1] else 0.0
    cond = float(s[0] / sigma_min) if rank == P.shape[1] and sigma_min > 0 else float("inf")
    return PartitionDiagnostics(sigma_min, rank, cond, tuple(s.tolist()))


def save_composition_csv(composition: CompositionMatrix, path=None, labels=None) -> str:
    labels = list(labels) if labels is not None else (
        list(GROUP_LABELS) if composition.K == len(GROUP_LABELS) else [f"g{d}" for d in range(composition.K)]
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["region"] + labels)
    for g, row in enumerate(composition.P):
        writer.writerow([g] + [f"{v:.17g}" for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def parse_composition_csv(text: str, normalize: bool = False) -> CompositionMatrix:
    """Read a composition (or raw counts when ``normalize``) written by ``save_composition_csv``."""
    rows = list(csv.reader(io.StringIO(text)))
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:] if r])
    if normalize:
        return build_from_counts(values)
    return CompositionMatrix(values, Provenance.CUSTOM)


def load_composition_csv(path, normalize: bool = False) -> CompositionMatrix:
    return parse_composition_csv(Path(path).read_text(encoding="utf-8"), normalize)
