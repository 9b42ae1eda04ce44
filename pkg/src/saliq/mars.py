"""One-dimensional hinge regression (MARS) for metric-to-MOS basis functions.

Each distortion metric gets its own basis function: a piecewise-linear map
built from mirrored hinge pairs placed at observed metric values, grown
greedily by squared-error reduction and pruned back by generalized
cross-validation. No interactions inside a basis function; combining
metrics is the scoring layer's job.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InsufficientDataError

MOS_MIN = 0.0
MOS_MAX = 100.0

#: minimum rows to fit, per the training-table contract
MIN_ROWS = 10


@dataclass(frozen=True)
class HingeTerm:
    """One hinge: direction +1 is max(0, x - knot), -1 is max(0, knot - x)."""

    coefficient: float
    knot: float
    direction: int

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError(f"direction must be +1 or -1, got {self.direction}")

    def evaluate(self, x):
        if self.direction > 0:
            return self.coefficient * np.maximum(0.0, x - self.knot)
        return self.coefficient * np.maximum(0.0, self.knot - x)


@dataclass(frozen=True)
class FitStats:
    rmse: float
    gcv: float
    n_terms: int
    n_rows: int


@dataclass(frozen=True)
class BasisFunction:
    """Piecewise-linear map from one distortion metric to the MOS scale."""

    dm_name: str
    intercept: float
    terms: tuple[HingeTerm, ...]
    fit_stats: FitStats

    @property
    def n_terms(self) -> int:
        # intercept counts as a term
        return 1 + len(self.terms)

    def lipschitz_bound(self) -> float:
        return float(sum(abs(t.coefficient) for t in self.terms))


@dataclass(frozen=True)
class TrainingTable:
    """Per-condition training rows for one distortion metric."""

    dm_values: np.ndarray
    mos: np.ndarray
    signal_ids: tuple = ()
    treatment_ids: tuple = ()

    def __post_init__(self):
        x = np.asarray(self.dm_values, dtype=np.float64)
        y = np.asarray(self.mos, dtype=np.float64)
        object.__setattr__(self, "dm_values", x)
        object.__setattr__(self, "mos", y)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("dm_values and mos must be equal-length 1-D arrays")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("training values must be finite")
        if np.any((y < MOS_MIN) | (y > MOS_MAX)):
            raise ValueError("mos values must lie in [0, 100]")

    def __len__(self) -> int:
        return len(self.dm_values)


def _design(x: np.ndarray, hinges: list[tuple[float, int]]) -> np.ndarray:
    cols = [np.ones_like(x)]
    for knot, direction in hinges:
        if direction > 0:
            cols.append(np.maximum(0.0, x - knot))
        else:
            cols.append(np.maximum(0.0, knot - x))
    return np.stack(cols, axis=1)


def _lstsq_sse(design: np.ndarray, y: np.ndarray):
    coefs, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coefs
    return coefs, float(resid @ resid)


def _gcv(sse: float, n: int, n_terms: int, n_knots: int, penalty: float) -> float:
    # effective parameters: model terms plus a penalty per knot
    c_eff = n_terms + penalty * n_knots
    denom = 1.0 - c_eff / n
    if denom <= 0.0:
        return float("inf")
    return (sse / n) / denom**2


def fit_bf(
    table: TrainingTable,
    dm_name: str = "",
    max_terms: int = 8,
    penalty: float = 3.0,
) -> BasisFunction:
    """Fit a basis function by forward hinge growth and GCV pruning.

    The forward pass adds mirrored hinge pairs at observed metric values,
    picking the pair with the largest squared-error reduction (ties broken
    by the lowest knot value) until adding a pair would exceed max_terms
    total terms. The backward pass deletes one hinge at a time, keeping
    whichever model along the deletion path has the lowest generalized
    cross-validation score. Deterministic for identical inputs.
    """
    x, y = table.dm_values, table.mos
    n = len(x)
    if n < MIN_ROWS:
        raise InsufficientDataError(f"{n} rows, need at least {MIN_ROWS}")
    if float(np.ptp(x)) == 0.0:
        raise DegenerateInputError("all metric values identical, cannot place knots")

    candidates = np.unique(x)
    hinges: list[tuple[float, int]] = []
    coefs, sse = _lstsq_sse(_design(x, hinges), y)

    while (1 + len(hinges)) + 2 <= max_terms:
        best = None
        for knot in candidates:
            trial = hinges + [(float(knot), 1), (float(knot), -1)]
            _, trial_sse = _lstsq_sse(_design(x, trial), y)
            # strict < keeps the lowest knot on ties (candidates ascend)
            if best is None or trial_sse < best[1]:
                best = (float(knot), trial_sse)
        if best is None or best[1] >= sse:
            break
        hinges.extend([(best[0], 1), (best[0], -1)])
        coefs, sse = _lstsq_sse(_design(x, hinges), y)

    def model_gcv(h: list[tuple[float, int]], sse_h: float) -> float:
        return _gcv(sse_h, n, 1 + len(h), len({k for k, _ in h}), penalty)

    best_hinges = list(hinges)
    best_coefs, best_sse = coefs, sse
    best_score = model_gcv(hinges, sse)
    current = list(hinges)
    while current:
        step_best = None
        for i in range(len(current)):
            trial = current[:i] + current[i + 1 :]
            trial_coefs, trial_sse = _lstsq_sse(_design(x, trial), y)
            score = model_gcv(trial, trial_sse)
            if step_best is None or score < step_best[0]:
                step_best = (score, trial, trial_coefs, trial_sse)
        current = step_best[1]
        if step_best[0] <= best_score:
            best_score = step_best[0]
            best_hinges = step_best[1]
            best_coefs, best_sse = step_best[2], step_best[3]

    terms = tuple(
        HingeTerm(coefficient=float(c), knot=k, direction=d)
        for c, (k, d) in zip(best_coefs[1:], best_hinges)
    )
    stats = FitStats(
        rmse=float(np.sqrt(best_sse / n)),
        gcv=float(best_score),
        n_terms=1 + len(terms),
        n_rows=n,
    )
    return BasisFunction(
        dm_name=dm_name, intercept=float(best_coefs[0]), terms=terms, fit_stats=stats
    )


def eval_bf(bf: BasisFunction, dm_value):
    """Evaluate a basis function, linear extrapolation then [0,100] clamp."""
    x = np.asarray(dm_value, dtype=np.float64)
    out = np.full_like(x, bf.intercept)
    for term in bf.terms:
        out = out + term.evaluate(x)
    out = np.clip(out, MOS_MIN, MOS_MAX)
    return float(out) if np.isscalar(dm_value) or x.ndim == 0 else out


def bf_to_dict(bf: BasisFunction) -> dict:
    return {
        "dm_name": bf.dm_name,
        "intercept": bf.intercept,
        "terms": [
            {"coefficient": t.coefficient, "knot": t.knot, "direction": t.direction}
            for t in bf.terms
        ],
        "fit_stats": {
            "rmse": bf.fit_stats.rmse,
            "gcv": bf.fit_stats.gcv,
            "n_terms": bf.fit_stats.n_terms,
            "n_rows": bf.fit_stats.n_rows,
        },
    }


def bf_from_dict(doc: dict) -> BasisFunction:
    stats = doc.get("fit_stats", {})
    return BasisFunction(
        dm_name=doc["dm_name"],
        intercept=float(doc["intercept"]),
        terms=tuple(
            HingeTerm(float(t["coefficient"]), float(t["knot"]), int(t["direction"]))
            for t in doc["terms"]
        ),
        fit_stats=FitStats(
            rmse=float(stats.get("rmse", float("nan"))),
            gcv=float(stats.get("gcv", float("nan"))),
            n_terms=int(stats.get("n_terms", 0)),
            n_rows=int(stats.get("n_rows", 0)),
        ),
    )


def save_bf_set(path, bfs: dict[str, BasisFunction]) -> None:
    """Write a set of basis functions as stable-ordered readable JSON.

    The mapping key is authoritative for dm_name so a model fitted without
    a name can still be filed under its metric.
    """
    docs = []
    for name in sorted(bfs):
        doc = bf_to_dict(bfs[name])
        doc["dm_name"] = name
        docs.append(doc)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"basis_functions": docs}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bf_set(path) -> dict[str, BasisFunction]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    bfs = [bf_from_dict(doc) for doc in payload["basis_functions"]]
    return {bf.dm_name: bf for bf in bfs}
