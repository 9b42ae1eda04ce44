"""Salience, logistic detection-probability weights, and their optimizer.

Salience measures how strongly one distortion dimension drives perceived
quality for a signal: the Pearson correlation, over that signal's
treatments, between a basis function's outputs and the MOS. A cognitive
effect metric interacts with a distortion metric when the per-signal CEM
values correlate with the per-signal salience; the interaction cost is
that correlation. The optimizer shapes the CEM through a two-parameter
logistic (maximum fixed at 1) and exhaustively searches steepness and
midpoint, for both the plain and the complemented (INV) curve, maximizing
the absolute cost. Product weights carry their structural orientation in
the candidates themselves, so their search maximizes the signed cost
instead.
"""
from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllUndefinedError,
    DegenerateGridError,
    ZeroVarianceError,
)

#: output clip keeping weights strictly inside (0, 1)
_DPW_MIN = 1e-300
_DPW_MAX = 1.0 - 2.0**-53
#: logistic argument clip preventing overflow
_Z_CLIP = 500.0


def pearson(a, b) -> float:
    """Plain Pearson correlation of two equal-length 1-D vectors.

    Raises ZeroVarianceError when either vector is constant. Summation is
    plain elementwise-product-then-sum so independent reimplementations
    agree to near machine precision.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("pearson needs two equal-length 1-D vectors")
    if len(a) < 3:
        raise ValueError("need at least 3 points for a meaningful correlation")
    ac = a - a.mean()
    bc = b - b.mean()
    var_a = float((ac * ac).sum())
    var_b = float((bc * bc).sum())
    if var_a == 0.0 or var_b == 0.0:
        raise ZeroVarianceError("constant vector has no defined correlation")
    return float((ac * bc).sum() / np.sqrt(var_a * var_b))


@dataclass(frozen=True)
class SalienceVector:
    """Per-signal salience of one distortion metric.

    Undefined entries (zero variance over a signal's treatments) are
    carried as NaN holes and excluded pairwise from cost sums.
    """

    dm_name: str
    values: np.ndarray
    signal_ids: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "signal_ids", tuple(self.signal_ids))
        if v.ndim != 1 or len(v) != len(self.signal_ids):
            raise ValueError("one salience value per signal id required")
        finite = v[np.isfinite(v)]
        if np.any((finite < -1.0) | (finite > 1.0)):
            raise ValueError("salience values must lie in [-1, 1]")

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.values)


def salience(mos, bf_values, dm_name: str = "", signal_id=None) -> float:
    """Per-signal salience: Pearson over treatments of BF output vs MOS.

    Raises ZeroVarianceError when either side is constant over the
    treatments; callers store the hole as NaN in a SalienceVector.
    """
    mos = np.asarray(mos, dtype=np.float64)
    bf_values = np.asarray(bf_values, dtype=np.float64)
    if len(mos) < 3:
        raise ValueError("need at least 3 treatments per signal")
    if not (np.all(np.isfinite(mos)) and np.all(np.isfinite(bf_values))):
        raise ValueError("salience inputs must be finite")
    return pearson(mos, bf_values)


@dataclass(frozen=True)
class LogisticParams:
    """Two-parameter logistic weight curve; maximum fixed at 1."""

    steepness: float
    midpoint: float
    inverted: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.steepness) and self.steepness > 0):
            raise ValueError("steepness must be a positive finite scalar")
        if not (np.isfinite(self.midpoint) and 0.0 <= self.midpoint <= 1.0):
            raise ValueError("midpoint must lie in [0, 1]")


def _sigmoid(z):
    z = np.clip(z, -_Z_CLIP, _Z_CLIP)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def dpw(cem_value, params: LogisticParams):
    """Detection probability weight L(x) = 1 / (1 + exp(-k (x - x0))).

    The inverted variant is the complement 1 - L(x), computed directly as
    L(-(x - x0) k) so tiny complements keep full relative precision.
    Outputs are clipped to stay strictly inside (0, 1); at the midpoint
    both variants return exactly 0.5.
    """
    x = np.asarray(cem_value, dtype=np.float64)
    z = params.steepness * (x - params.midpoint)
    if params.inverted:
        z = -z
    out = np.clip(_sigmoid(z), _DPW_MIN, _DPW_MAX)
    return float(out) if x.ndim == 0 else out


def interaction_cost(salience_vec: SalienceVector, weights) -> float:
    """Signed interaction cost: Pearson across signals of salience vs weight.

    NaN holes on either side are dropped pairwise. Raises
    ZeroVarianceError when the surviving weights (or saliences) are
    constant, and ValueError when fewer than 3 defined pairs remain.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != salience_vec.values.shape:
        raise ValueError("one weight per signal required")
    keep = salience_vec.defined & np.isfinite(w)
    if int(keep.sum()) < 3:
        raise ValueError("fewer than 3 signals with defined salience and weight")
    return pearson(salience_vec.values[keep], w[keep])


def _default_steepness() -> np.ndarray:
    return np.geomspace(0.5, 200.0, 61)


def _default_midpoints() -> np.ndarray:
    return np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class SearchGrid:
    """Exhaustive search grid over logistic parameters.

    Defaults: steepness log-spaced over [0.5, 200] in 61 steps (the low
    end is quasi-linear over [0,1], so the optimized cost can never fall
    meaningfully below the raw-CEM cost), midpoint linear over [0, 1] in
    101 steps, both plain and inverted variants.
    """

    steepness: np.ndarray = field(default_factory=_default_steepness)
    midpoints: np.ndarray = field(default_factory=_default_midpoints)
    include_inverted: bool = True

    def __post_init__(self):
        k = np.asarray(self.steepness, dtype=np.float64)
        x0 = np.asarray(self.midpoints, dtype=np.float64)
        object.__setattr__(self, "steepness", k)
        object.__setattr__(self, "midpoints", x0)
        if len(k) == 0 or len(x0) == 0:
            raise DegenerateGridError("search grid has no candidates")
        if np.any(k <= 0):
            raise DegenerateGridError("steepness grid must be positive")

    @property
    def n_candidates(self) -> int:
        return len(self.steepness) * len(self.midpoints) * (2 if self.include_inverted else 1)


DEFAULT_GRID = SearchGrid()
#: per-factor grid for product (composite) weights, coarser to bound cost
PRODUCT_GRID = SearchGrid(
    steepness=np.geomspace(0.5, 200.0, 21),
    midpoints=np.linspace(0.0, 1.0, 21),
)


@dataclass(frozen=True)
class InteractionEntry:
    """One CEM-to-DM interaction picked by the optimizer."""

    cem_name: str
    dm_name: str
    params: LogisticParams
    c_raw: float
    c_opt: float
    accepted: bool


def _candidate_weights(cem: np.ndarray, grid: SearchGrid) -> tuple[np.ndarray, list[LogisticParams]]:
    """Non-inverted candidate weight rows, ordered (k asc, x0 asc).

    The ordering realizes the documented tie-break: with a
    first-occurrence argmax over this enumeration, equal costs resolve to
    the smaller steepness, then the smaller midpoint. Inverted variants
    are not materialized: the complement identity corr(s, 1-w) =
    -corr(s, w) holds exactly, so each inverted candidate ties its plain
    partner in |cost| and the non-inverted tie-break always prefers the
    partner. Evaluating complements numerically instead would let
    floating-point asymmetry break the mathematical tie at random.
    """
    params: list[LogisticParams] = []
    rows = np.empty((len(grid.steepness) * len(grid.midpoints), len(cem)))
    i = 0
    for k in grid.steepness:
        for x0 in grid.midpoints:
            p = LogisticParams(float(k), float(x0), False)
            rows[i] = dpw(cem, p)
            params.append(p)
            i += 1
    return rows, params


def _masked_costs(sal: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Signed Pearson of each weight row against the salience values.

    Zero-variance rows come back NaN. Uses the same mean/sum arithmetic
    as :func:`pearson` so a scalar re-evaluation reproduces each value.
    """
    sc = sal - sal.mean()
    var_s = float((sc * sc).sum())
    if var_s == 0.0:
        return np.full(len(rows), np.nan)
    rc = rows - rows.mean(axis=1, keepdims=True)
    var_r = (rc * rc).sum(axis=1)
    cov = (rc * sc).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = cov / np.sqrt(var_r * var_s)
    c[var_r == 0.0] = np.nan
    return c


def optimize_dpw(
    salience_vec: SalienceVector,
    cem_values,
    grid: SearchGrid = DEFAULT_GRID,
    cem_name: str = "",
    accept_threshold: float = 0.5,
) -> InteractionEntry:
    """Exhaustive search for the logistic weight maximizing |cost|.

    Every (steepness, midpoint) pair on the grid is evaluated for both the
    plain and the inverted curve; the entry with the largest absolute
    signed cost wins, ties broken by smaller steepness, then smaller
    midpoint, then the non-inverted variant. Because the complement
    identity corr(s, 1-w) = -corr(s, w) is exact, every inverted candidate
    ties its plain partner in |cost| and loses the final tie-break, so the
    returned params always have inverted=False and c_opt carries the
    direction in its sign; whether the scoring table applies the weight or
    its complement is a structural choice made there. c_raw is the cost of
    the untransformed CEM values. Raises AllUndefinedError when no
    candidate has a defined cost (e.g. constant salience).
    """
    cem = np.asarray(cem_values, dtype=np.float64)
    if cem.shape != salience_vec.values.shape:
        raise ValueError("one CEM value per signal required")
    keep = salience_vec.defined & np.isfinite(cem)
    if int(keep.sum()) < 3:
        raise ValueError("fewer than 3 signals with defined salience and CEM")
    sal = salience_vec.values[keep]
    cem_kept = cem[keep]

    try:
        c_raw = pearson(sal, cem_kept)
    except ZeroVarianceError:
        c_raw = float("nan")

    rows, params = _candidate_weights(cem_kept, grid)
    costs = _masked_costs(sal, rows)
    score = np.abs(costs)
    score[~np.isfinite(score)] = -np.inf
    if not np.any(score > -np.inf):
        raise AllUndefinedError("every grid candidate has undefined cost")
    best = int(np.argmax(score))
    return InteractionEntry(
        cem_name=cem_name,
        dm_name=salience_vec.dm_name,
        params=params[best],
        c_raw=c_raw,
        c_opt=float(costs[best]),
        accepted=bool(abs(costs[best]) >= accept_threshold),
    )


@dataclass(frozen=True)
class ProductEntry:
    """A composite weight: the product of two logistic factors."""

    cem_names: tuple[str, str]
    dm_name: str
    params: tuple[LogisticParams, LogisticParams]
    c_raw: float
    c_opt: float
    accepted: bool


def optimize_product_dpw(
    salience_vec: SalienceVector,
    cem_a,
    cem_b,
    inverted: tuple[bool, bool],
    grid: SearchGrid = PRODUCT_GRID,
    cem_names: tuple[str, str] = ("", ""),
    accept_threshold: float = 0.5,
) -> ProductEntry:
    """Joint search for a two-factor product weight.

    The inversion flags are structural (fixed by the interaction table,
    e.g. "streaming boosts, masking suppresses") and are not searched.
    Because the candidates already carry the structural orientation, the
    search maximizes the signed cost: a product weight validates its
    hypothesis only by tracking salience positively, and the strongest
    anti-tracking candidate is evidence against the rule, not a fit.
    Both factors share the per-factor grid; every parameter combination is
    evaluated jointly, ties broken lexicographically by (k_a, x0_a, k_b,
    x0_b). c_raw is the cost of the raw product with the structural
    inversions applied to the untransformed CEM values.
    """
    a = np.asarray(cem_a, dtype=np.float64)
    b = np.asarray(cem_b, dtype=np.float64)
    if a.shape != salience_vec.values.shape or b.shape != salience_vec.values.shape:
        raise ValueError("one CEM value per signal required for each factor")
    keep = salience_vec.defined & np.isfinite(a) & np.isfinite(b)
    if int(keep.sum()) < 3:
        raise ValueError("fewer than 3 signals with defined salience and CEMs")
    sal = salience_vec.values[keep]
    a_kept, b_kept = a[keep], b[keep]

    raw_a = 1.0 - a_kept if inverted[0] else a_kept
    raw_b = 1.0 - b_kept if inverted[1] else b_kept
    try:
        c_raw = pearson(sal, raw_a * raw_b)
    except ZeroVarianceError:
        c_raw = float("nan")

    ks = grid.steepness
    x0s = grid.midpoints
    factor_params: list[LogisticParams] = []
    rows_a = []
    rows_b = []
    for k in ks:
        for x0 in x0s:
            rows_a.append(dpw(a_kept, LogisticParams(float(k), float(x0), inverted[0])))
            rows_b.append(dpw(b_kept, LogisticParams(float(k), float(x0), inverted[1])))
            factor_params.append(LogisticParams(float(k), float(x0)))
    rows_a = np.asarray(rows_a)
    rows_b = np.asarray(rows_b)
    # joint product grid: index = ia * n + ib, realizing the lexicographic
    # (k_a, x0_a, k_b, x0_b) tie-break under first-occurrence argmax
    n = len(factor_params)
    prod = rows_a[:, None, :] * rows_b[None, :, :]
    costs = _masked_costs(sal, prod.reshape(n * n, -1))
    score = np.where(np.isfinite(costs), costs, -np.inf)
    if not np.any(score > -np.inf):
        raise AllUndefinedError("every product candidate has undefined cost")
    best = int(np.argmax(score))
    ia, ib = divmod(best, n)
    pa = LogisticParams(factor_params[ia].steepness, factor_params[ia].midpoint, inverted[0])
    pb = LogisticParams(factor_params[ib].steepness, factor_params[ib].midpoint, inverted[1])
    return ProductEntry(
        cem_names=cem_names,
        dm_name=salience_vec.dm_name,
        params=(pa, pb),
        c_raw=c_raw,
        c_opt=float(costs[best]),
        accepted=bool(costs[best] >= accept_threshold),
    )


def load_salience_fixture():
    """Load the bundled 24-signal regression fixture.

    Returns (signal_names, salience_values, prob_speech_values,
    reference_weights) as a tuple of a list and three float arrays.
    """
    text = (
        importlib.resources.files("saliq.data")
        .joinpath("salience_fixture.tsv")
        .read_text(encoding="utf-8")
    )
    names: list[str] = []
    cols: list[list[float]] = [[], [], []]
    header_seen = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            header_seen = True
            continue
        parts = line.split("\t")
        names.append(parts[0])
        for i in range(3):
            cols[i].append(float(parts[i + 1]))
    return names, np.array(cols[0]), np.array(cols[1]), np.array(cols[2])
