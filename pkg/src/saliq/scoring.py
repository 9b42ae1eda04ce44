"""Weighted combination of basis-function outputs into one quality score.

Each distortion metric's basis function output is weighted by detection
probability weights derived from the cognitive effect metrics through an
interaction table. A table rule targets one distortion metric with a
product of factors; each factor is a CEM passed through a logistic curve
(or taken raw when no curve has been fitted), optionally complemented
(INV) when the cognitive effect suppresses rather than boosts salience.
Distortion metrics without any rule contribute in equal parts. Weights
are normalized to sum to 1 per excerpt so CEM levels change the score's
composition, not its scale (documented interpretation).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cognitive import CEM_NAMES, CemRecord
from .errors import InvalidSpecError, MissingBfError
from .interaction import LogisticParams, dpw
from .mars import BasisFunction, eval_bf
from .perceptual import DM_NAMES, DmRecord


@dataclass(frozen=True)
class WeightFactor:
    """One multiplicative factor of a rule: a (possibly complemented) CEM.

    With params, the factor is the logistic weight L(cem; k, x0) or its
    complement. Without params, the raw CEM value (or 1 - value) stands
    in, which is the unoptimized variant of the model. param_source names
    another rule whose fitted curve this factor mirrors (used by the
    complement-of-another-weight construction); resolution is one level
    deep and uses that rule's first factor.
    """

    cem_name: str
    inverted: bool = False
    params: LogisticParams | None = None
    param_source: str | None = None


@dataclass(frozen=True)
class WeightRule:
    """One interaction-table row: a product of factors targeting one DM."""

    label: str
    dm_name: str
    factors: tuple[WeightFactor, ...]
    c_raw: float | None = None
    c_opt: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise InvalidSpecError(f"rule {self.label}: no factors")


@dataclass(frozen=True)
class InteractionTable:
    """All CEM-to-DM weight rules plus the DM universe they act on."""

    rules: tuple[WeightRule, ...] = ()
    dm_universe: tuple[str, ...] = DM_NAMES
    version: str = "1"

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "dm_universe", tuple(self.dm_universe))
        labels = [r.label for r in self.rules]
        if len(set(labels)) != len(labels):
            raise InvalidSpecError("duplicate rule labels")
        by_label = {r.label: r for r in self.rules}
        for rule in self.rules:
            if rule.dm_name not in self.dm_universe:
                raise InvalidSpecError(f"rule {rule.label}: unknown DM {rule.dm_name!r}")
            for f in rule.factors:
                if f.cem_name not in CEM_NAMES:
                    raise InvalidSpecError(f"rule {rule.label}: unknown CEM {f.cem_name!r}")
                if f.param_source is not None:
                    src = by_label.get(f.param_source)
                    if src is None:
                        raise InvalidSpecError(
                            f"rule {rule.label}: param_source {f.param_source!r} not found"
                        )
                    if any(g.param_source is not None for g in src.factors):
                        raise InvalidSpecError(
                            f"rule {rule.label}: param_source chains are not allowed"
                        )

    def rule(self, label: str) -> WeightRule:
        for r in self.rules:
            if r.label == label:
                return r
        raise KeyError(label)


def default_interaction_table(
    fitted: dict[str, LogisticParams] | None = None,
) -> InteractionTable:
    """The shipped default table structure.

    Five weights: speech likeness suppresses linear-distortion salience
    and boosts added-noise salience (its complement covers missing
    components, reusing the same fitted curve); perceptual streaming
    suppresses linear-distortion salience; and streaming and informational
    masking act as competing effects on the segmental NMR via a product.
    Modulation difference and harmonic error structure carry no rule and
    fall back to equal-parts weighting.

    ``fitted`` maps weight labels (DPW1, DPW2, DPW4) and the product
    factors (DPW5_EPN, DPW5_PDEV) to logistic parameters; omitted labels
    use the raw CEM value, which is the unoptimized model variant.
    """
    fitted = fitted or {}

    def p(label: str) -> LogisticParams | None:
        return fitted.get(label)

    rules = (
        WeightRule(
            label="DPW1",
            dm_name="lin_dist",
            factors=(WeightFactor("prob_speech", inverted=True, params=p("DPW1")),),
        ),
        WeightRule(
            label="DPW2",
            dm_name="noise_loudness",
            factors=(WeightFactor("prob_speech", inverted=False, params=p("DPW2")),),
        ),
        WeightRule(
            label="DPW3",
            dm_name="missing_components",
            factors=(
                WeightFactor("prob_speech", inverted=True, param_source="DPW2"),
            ),
        ),
        WeightRule(
            label="DPW4",
            dm_name="lin_dist",
            factors=(WeightFactor("epn", inverted=True, params=p("DPW4")),),
        ),
        WeightRule(
            label="DPW5",
            dm_name="seg_nmr",
            factors=(
                WeightFactor("epn", inverted=False, params=p("DPW5_EPN")),
                WeightFactor("pdev", inverted=True, params=p("DPW5_PDEV")),
            ),
        ),
    )
    return InteractionTable(rules=rules)


@dataclass(frozen=True)
class WeightVector:
    """Normalized per-DM weights plus the fallback flag."""

    values: np.ndarray
    dm_names: tuple[str, ...]
    uniform_fallback: bool = False

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.dm_names, self.values)}


def _factor_value(factor: WeightFactor, cem: CemRecord, table: InteractionTable) -> float:
    x = float(getattr(cem, factor.cem_name))
    params = factor.params
    if params is None and factor.param_source is not None:
        params = table.rule(factor.param_source).factors[0].params
    if params is None:
        return 1.0 - x if factor.inverted else x
    curve = LogisticParams(params.steepness, params.midpoint, factor.inverted)
    return dpw(x, curve)


def compute_weights(cem: CemRecord, table: InteractionTable) -> WeightVector:
    """Per-DM weights: product of rule expressions, normalized to sum 1.

    A DM without rules keeps the neutral factor 1 (equal parts). If every
    weight underflows to zero the uniform weighting is substituted and a
    warning emitted.
    """
    names = table.dm_universe
    raw = np.ones(len(names))
    index = {n: i for i, n in enumerate(names)}
    for rule in table.rules:
        value = 1.0
        for factor in rule.factors:
            value *= _factor_value(factor, cem, table)
        raw[index[rule.dm_name]] *= value
    total = float(raw.sum())
    if total <= 0.0:
        warnings.warn(
            "all interaction weights underflowed to zero; using uniform weights",
            RuntimeWarning,
            stacklevel=2,
        )
        n = len(names)
        return WeightVector(np.full(n, 1.0 / n), names, uniform_fallback=True)
    return WeightVector(raw / total, names, uniform_fallback=False)


@dataclass(frozen=True)
class QualityScore:
    """Objective score plus its full provenance breakdown."""

    value: float
    contributions: tuple  # (dm_name, bf_value, weight) triples
    cem_snapshot: CemRecord
    uniform_fallback: bool = False

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "contributions": [
                {"dm_name": n, "bf_value": b, "weight": w}
                for n, b, w in self.contributions
            ],
            "cem": self.cem_snapshot.as_dict(),
            "uniform_fallback": self.uniform_fallback,
        }


def score(
    dm: DmRecord,
    cem: CemRecord,
    bfs: dict[str, BasisFunction],
    table: InteractionTable,
) -> QualityScore:
    """Weighted sum of BF outputs: the final objective quality score.

    The result is a convex combination of the basis-function outputs, so
    it always lies between their minimum and maximum.
    """
    missing = [n for n in table.dm_universe if n not in bfs]
    if missing:
        raise MissingBfError(f"no basis function for: {', '.join(missing)}")
    bf_values = np.array(
        [eval_bf(bfs[n], float(getattr(dm, n))) for n in table.dm_universe]
    )
    weights = compute_weights(cem, table)
    value = float(np.dot(weights.values, bf_values))
    contributions = tuple(
        (n, float(b), float(w))
        for n, b, w in zip(table.dm_universe, bf_values, weights.values)
    )
    return QualityScore(
        value=value,
        contributions=contributions,
        cem_snapshot=cem,
        uniform_fallback=weights.uniform_fallback,
    )


def _params_to_dict(p: LogisticParams | None):
    if p is None:
        return None
    return {"steepness": p.steepness, "midpoint": p.midpoint}


def _params_from_dict(doc) -> LogisticParams | None:
    if doc is None:
        return None
    return LogisticParams(float(doc["steepness"]), float(doc["midpoint"]))


def table_to_dict(table: InteractionTable) -> dict:
    return {
        "version": table.version,
        "dm_universe": list(table.dm_universe),
        "rules": [
            {
                "label": r.label,
                "dm_name": r.dm_name,
                "c_raw": r.c_raw,
                "c_opt": r.c_opt,
                "factors": [
                    {
                        "cem_name": f.cem_name,
                        "inverted": f.inverted,
                        "params": _params_to_dict(f.params),
                        "param_source": f.param_source,
                    }
                    for f in r.factors
                ],
            }
            for r in table.rules
        ],
    }


def table_from_dict(doc: dict) -> InteractionTable:
    rules = tuple(
        WeightRule(
            label=r["label"],
            dm_name=r["dm_name"],
            factors=tuple(
                WeightFactor(
                    cem_name=f["cem_name"],
                    inverted=bool(f["inverted"]),
                    params=_params_from_dict(f.get("params")),
                    param_source=f.get("param_source"),
                )
                for f in r["factors"]
            ),
            c_raw=r.get("c_raw"),
            c_opt=r.get("c_opt"),
        )
        for r in doc["rules"]
    )
    return InteractionTable(
        rules=rules,
        dm_universe=tuple(doc.get("dm_universe", DM_NAMES)),
        version=str(doc.get("version", "1")),
    )


def save_interaction_table(path, table: InteractionTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table_to_dict(table), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_interaction_table(path) -> InteractionTable:
    with open(path, encoding="utf-8") as fh:
        return table_from_dict(json.load(fh))


def _factor_expr(factor: WeightFactor) -> str:
    if factor.params is not None:
        inner = f"L({factor.cem_name}; k={factor.params.steepness:.3g}, x0={factor.params.midpoint:.3g})"
    elif factor.param_source is not None:
        inner = f"L({factor.cem_name}; params of {factor.param_source})"
    else:
        inner = factor.cem_name
    return f"(1 - {inner})" if factor.inverted else inner


def render_table(table: InteractionTable) -> str:
    """Human-readable report: weight, CEM, target DM, costs, equation."""
    header = ("Weight", "CEM", "Target DM", "C raw/opt", "Equation")
    rows = [header]
    for r in table.rules:
        cems = "+".join(dict.fromkeys(f.cem_name for f in r.factors))
        costs = "-"
        if r.c_raw is not None or r.c_opt is not None:
            fmt = lambda v: "n/a" if v is None else f"{v:.2f}"
            costs = f"{fmt(r.c_raw)} / {fmt(r.c_opt)}"
        expr = " * ".join(_factor_expr(f) for f in r.factors)
        rows.append((r.label, cems, r.dm_name, costs, f"{r.label} = {expr}"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
