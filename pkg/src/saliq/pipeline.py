"""Dataset-level orchestration: feature tables, model fitting, experiments.

Stages communicate through small columnar tables (one row per scored
condition) so each can run and be tested on its own: analyze a manifest
into a feature table, fit per-metric basis functions, fit the
interaction table on per-signal salience, score, and evaluate. The
module also hosts the seeded end-to-end experiment used for validation
at desk scale, which streams generated audio instead of touching disk.
"""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field, replace

import numpy as np

from .audio_io import AudioPair, load_pair, segment
from .cognitive import CEM_NAMES, CemRecord, compute_epn, compute_pdev, compute_prob_speech
from .errors import SchemaError, ZeroVarianceError
from .evalmetrics import AnnConfig, AnnModel, EvalReport, evaluate, train_ann
from .interaction import (
    DEFAULT_GRID,
    PRODUCT_GRID,
    InteractionEntry,
    ProductEntry,
    SalienceVector,
    dpw,
    interaction_cost,
    optimize_dpw,
    optimize_product_dpw,
    salience,
)
from .mars import BasisFunction, TrainingTable, eval_bf, fit_bf
from .perceptual import DM_NAMES, DmRecord, analyze_frames, compute_dm
from .scoring import (
    InteractionTable,
    QualityScore,
    default_interaction_table,
    score,
)
from .synthdata import (
    TRAIN_TREATMENTS,
    VALIDATION_TREATMENTS,
    DatasetManifest,
    SyntheticSpec,
    iter_conditions,
)

FEATURE_NAMES = DM_NAMES + CEM_NAMES
_TABLE_SCHEMA = "saliq-features-1"
#: a fitted gate must spread its weight at least this far across the
#: training signals to count as a real interaction
MIN_GATE_SPAN = 0.5


@dataclass(frozen=True)
class FeatureTable:
    """One row per (signal, treatment) condition: MOS plus all metrics."""

    signal_ids: tuple[str, ...]
    treatment_ids: tuple[str, ...]
    mos: np.ndarray
    ci95: np.ndarray
    features: dict[str, np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "signal_ids", tuple(self.signal_ids))
        object.__setattr__(self, "treatment_ids", tuple(self.treatment_ids))
        object.__setattr__(self, "mos", np.asarray(self.mos, dtype=np.float64))
        object.__setattr__(self, "ci95", np.asarray(self.ci95, dtype=np.float64))
        n = len(self.signal_ids)
        if len(self.treatment_ids) != n or len(self.mos) != n or len(self.ci95) != n:
            raise ValueError("all columns must have one entry per row")
        cols = {}
        for name in FEATURE_NAMES:
            if name not in self.features:
                raise SchemaError(f"feature column {name!r} missing")
            col = np.asarray(self.features[name], dtype=np.float64)
            if col.shape != (n,):
                raise ValueError(f"column {name!r} has wrong length")
            cols[name] = col
        object.__setattr__(self, "features", cols)

    @property
    def n_rows(self) -> int:
        return len(self.signal_ids)

    def unique_signals(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for s in self.signal_ids:
            seen.setdefault(s)
        return tuple(seen)

    def rows_of(self, signal_id: str) -> np.ndarray:
        return np.flatnonzero(np.array(self.signal_ids) == signal_id)

    def matrix(self, names=FEATURE_NAMES) -> np.ndarray:
        return np.column_stack([self.features[n] for n in names])


def save_feature_table(table: FeatureTable, path: str) -> None:
    """Write the table as TSV with full-precision floats."""
    cols = ["signal", "treatment", "mos", "ci95", *FEATURE_NAMES]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema: {_TABLE_SCHEMA}\n")
        fh.write("\t".join(cols) + "\n")
        for i in range(table.n_rows):
            row = [table.signal_ids[i], table.treatment_ids[i],
                   repr(float(table.mos[i])), repr(float(table.ci95[i]))]
            row += [repr(float(table.features[n][i])) for n in FEATURE_NAMES]
            fh.write("\t".join(row) + "\n")


def load_feature_table(path: str) -> FeatureTable:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != f"# schema: {_TABLE_SCHEMA}":
        raise SchemaError(f"{path} is not a {_TABLE_SCHEMA} table")
    header = lines[1].split("\t")
    expected = ["signal", "treatment", "mos", "ci95", *FEATURE_NAMES]
    if header != expected:
        raise SchemaError(f"{path}: unexpected columns {header}")
    sig, tre, mos, ci = [], [], [], []
    cols: dict[str, list[float]] = {n: [] for n in FEATURE_NAMES}
    for row_no, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(expected):
            raise SchemaError(f"{path} line {row_no}: {len(parts)} fields, expected {len(expected)}")
        sig.append(parts[0])
        tre.append(parts[1])
        try:
            mos.append(float(parts[2]))
            ci.append(float(parts[3]))
            for name, value in zip(FEATURE_NAMES, parts[4:]):
                cols[name].append(float(value))
        except ValueError as exc:
            raise SchemaError(f"{path} line {row_no}: {exc}") from exc
    return FeatureTable(
        signal_ids=tuple(sig),
        treatment_ids=tuple(tre),
        mos=np.array(mos),
        ci95=np.array(ci),
        features={n: np.array(v) for n, v in cols.items()},
    )


def analyze_pair(pair: AudioPair, prob_speech: float | None = None) -> dict[str, float]:
    """All nine per-excerpt metrics for one reference/sut pair.

    ``prob_speech`` may be passed in when the caller has already computed
    it for this reference (it depends on the reference alone).
    """
    frames = analyze_frames(pair)
    plan = segment(pair)
    dm = compute_dm(frames, plan)
    out = dm.as_dict()
    out["epn"] = compute_epn(frames)
    out["pdev"] = compute_pdev(frames)
    out["prob_speech"] = (
        compute_prob_speech(pair) if prob_speech is None else float(prob_speech)
    )
    return out


def analyze_manifest(
    manifest: DatasetManifest, jobs: int = 1, progress=None
) -> FeatureTable:
    """Analyze every condition of a file-backed dataset.

    Rows keep manifest order regardless of the worker count.
    """
    refs = dict(manifest.signals)

    def one(cond) -> dict[str, float]:
        pair = load_pair(manifest.resolve(refs[cond.signal_id]), manifest.resolve(cond.sut_path))
        return analyze_pair(pair)

    conditions = manifest.conditions
    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, conditions))
    else:
        results = []
        for i, cond in enumerate(conditions):
            results.append(one(cond))
            if progress is not None:
                progress(i + 1, len(conditions))
    return _rows_to_table(
        [(c.signal_id, c.treatment_id, c.mos, c.ci95, r) for c, r in zip(conditions, results)]
    )


def analyze_spec(spec: SyntheticSpec) -> FeatureTable:
    """Generate and analyze a synthetic test fully in memory."""
    rows = []
    ps_cache: dict[str, float] = {}
    for rec in iter_conditions(spec):
        pair = AudioPair(rec.reference, rec.sut, spec.sample_rate)
        if rec.signal_id not in ps_cache:
            ps_cache[rec.signal_id] = compute_prob_speech(pair)
        feats = analyze_pair(pair, prob_speech=ps_cache[rec.signal_id])
        rows.append((rec.signal_id, rec.treatment.treatment_id, rec.mos, rec.ci95, feats))
    return _rows_to_table(rows)


def _rows_to_table(rows) -> FeatureTable:
    return FeatureTable(
        signal_ids=tuple(r[0] for r in rows),
        treatment_ids=tuple(r[1] for r in rows),
        mos=np.array([r[2] for r in rows]),
        ci95=np.array([r[3] for r in rows]),
        features={n: np.array([r[4][n] for r in rows]) for n in FEATURE_NAMES},
    )


def fit_basis_functions(table: FeatureTable) -> dict[str, BasisFunction]:
    """One fitted basis function per distortion metric."""
    return {
        name: fit_bf(
            TrainingTable(
                dm_values=table.features[name],
                mos=table.mos,
                signal_ids=table.signal_ids,
                treatment_ids=table.treatment_ids,
            ),
            dm_name=name,
        )
        for name in DM_NAMES
    }


@dataclass(frozen=True)
class SalienceTable:
    """Per-signal salience for each DM plus per-signal mean CEM values."""

    signal_ids: tuple[str, ...]
    by_dm: dict[str, SalienceVector]
    cem_by_signal: dict[str, np.ndarray]


def salience_table(table: FeatureTable, bfs: dict[str, BasisFunction]) -> SalienceTable:
    """Salience of every DM for every signal, over that signal's treatments.

    A signal whose BF outputs or MOS are constant over its treatments
    carries a NaN hole for that DM. CEM values are averaged over each
    signal's conditions (prob_speech is constant per signal already).
    """
    signals = table.unique_signals()
    sal: dict[str, list[float]] = {n: [] for n in DM_NAMES}
    cems: dict[str, list[float]] = {n: [] for n in CEM_NAMES}
    for sid in signals:
        idx = table.rows_of(sid)
        for dm_name in DM_NAMES:
            bf_out = eval_bf(bfs[dm_name], table.features[dm_name][idx])
            try:
                value = salience(table.mos[idx], bf_out, dm_name=dm_name, signal_id=sid)
            except ZeroVarianceError:
                value = float("nan")
            sal[dm_name].append(value)
        for cem_name in CEM_NAMES:
            cems[cem_name].append(float(np.mean(table.features[cem_name][idx])))
    return SalienceTable(
        signal_ids=signals,
        by_dm={
            n: SalienceVector(dm_name=n, values=np.array(sal[n]), signal_ids=signals)
            for n in DM_NAMES
        },
        cem_by_signal={n: np.array(cems[n]) for n in CEM_NAMES},
    )


@dataclass(frozen=True)
class InteractionFit:
    """A fitted interaction table plus the optimizer evidence behind it."""

    table: InteractionTable
    entries: dict[str, InteractionEntry | ProductEntry]
    salience: SalienceTable


def fit_interaction_table(
    table: FeatureTable,
    bfs: dict[str, BasisFunction],
    grid=DEFAULT_GRID,
    product_grid=PRODUCT_GRID,
    accept_threshold: float = 0.5,
) -> InteractionFit:
    """Fit every parameterized weight of the default interaction table.

    The table structure (which CEM gates which DM, and whether the weight
    or its complement applies) is fixed; the optimizer only supplies the
    logistic curve per rule. The third weight reuses the second one's
    curve through param_source, so only four searches run.

    A rule is kept only when its optimized cost is strong in the
    direction the structure hypothesizes: negative against the plain
    logistic for complemented rules (DPW1, DPW4), positive for the others.
    A strong cost of the wrong sign means the hypothesized gating would
    route weight away from where the metric helps, so the rule is removed
    and its metric falls back to the equal-parts default. A kept rule must
    also discriminate: its fitted weight has to span at least half the
    unit interval across the training signals, since a gate that assigns
    nearly the same weight everywhere is no interaction at all, whatever
    its correlation score.
    """
    st = salience_table(table, bfs)
    ps = st.cem_by_signal["prob_speech"]
    epn = st.cem_by_signal["epn"]
    pdev = st.cem_by_signal["pdev"]

    e1 = optimize_dpw(st.by_dm["lin_dist"], ps, grid, cem_name="prob_speech",
                      accept_threshold=accept_threshold)
    e2 = optimize_dpw(st.by_dm["noise_loudness"], ps, grid, cem_name="prob_speech",
                      accept_threshold=accept_threshold)
    e4 = optimize_dpw(st.by_dm["lin_dist"], epn, grid, cem_name="epn",
                      accept_threshold=accept_threshold)
    e5 = optimize_product_dpw(
        st.by_dm["seg_nmr"], epn, pdev, inverted=(False, True), grid=product_grid,
        cem_names=("epn", "pdev"), accept_threshold=accept_threshold,
    )

    def established(entry, complemented: bool, weights: np.ndarray) -> bool:
        c = entry.c_opt
        if not (entry.accepted and np.isfinite(c)):
            return False
        if not (c < 0.0 if complemented else c > 0.0):
            return False
        return float(weights.max() - weights.min()) >= MIN_GATE_SPAN

    w5 = dpw(epn, e5.params[0]) * dpw(pdev, e5.params[1])
    keep = {
        "DPW1": established(e1, complemented=True, weights=dpw(ps, e1.params)),
        "DPW2": established(e2, complemented=False, weights=dpw(ps, e2.params)),
        # the third weight is the complement of the second one's curve, so
        # it stands or falls with it
        "DPW3": established(e2, complemented=False, weights=dpw(ps, e2.params)),
        "DPW4": established(e4, complemented=True, weights=dpw(epn, e4.params)),
        # the product optimizer applies the structural inversions itself
        "DPW5": established(e5, complemented=False, weights=w5),
    }
    fitted = {}
    if keep["DPW1"]:
        fitted["DPW1"] = e1.params
    if keep["DPW2"]:
        fitted["DPW2"] = e2.params
    if keep["DPW4"]:
        fitted["DPW4"] = e4.params
    if keep["DPW5"]:
        fitted["DPW5_EPN"], fitted["DPW5_PDEV"] = e5.params
    itable = default_interaction_table(fitted)
    itable = InteractionTable(
        rules=tuple(r for r in itable.rules if keep.get(r.label, True)),
        dm_universe=itable.dm_universe,
        version=itable.version,
    )

    # diagnostics for the reused complement rule, measured against its own DM
    mc = st.by_dm["missing_components"]
    c3_raw = _complement_cost(mc, 1.0 - ps)
    c3_opt = _complement_cost(mc, 1.0 - dpw(ps, e2.params))
    diag = {"DPW1": e1, "DPW2": e2, "DPW4": e4, "DPW5": e5}
    rules = []
    for rule in itable.rules:
        if rule.label in ("DPW1", "DPW2", "DPW4", "DPW5"):
            entry = diag[rule.label]
            rules.append(replace(rule, c_raw=entry.c_raw, c_opt=entry.c_opt))
        elif rule.label == "DPW3":
            rules.append(replace(rule, c_raw=c3_raw, c_opt=c3_opt))
        else:
            rules.append(rule)
    itable = InteractionTable(rules=tuple(rules), dm_universe=itable.dm_universe,
                              version=itable.version)
    return InteractionFit(table=itable, entries=diag, salience=st)


def _complement_cost(sal_vec: SalienceVector, weights: np.ndarray) -> float | None:
    try:
        return interaction_cost(sal_vec, weights)
    except (ZeroVarianceError, ValueError):
        return None


def score_table(
    table: FeatureTable,
    bfs: dict[str, BasisFunction],
    itable: InteractionTable,
) -> tuple[np.ndarray, list[QualityScore]]:
    """Score every row of a feature table; order preserved."""
    details = []
    for i in range(table.n_rows):
        dm = DmRecord(
            **{n: float(table.features[n][i]) for n in DM_NAMES},
            per_segment=np.zeros((0, len(DM_NAMES))),
        )
        cem = CemRecord(
            epn=float(table.features["epn"][i]),
            pdev=float(table.features["pdev"][i]),
            prob_speech=float(table.features["prob_speech"][i]),
        )
        details.append(score(dm, cem, bfs, itable))
    return np.array([d.value for d in details]), details


SYSTEM_ANN = "DM+CEM (ANN)"
SYSTEM_RAW = "PROPOSED"
SYSTEM_OPT = "PROPOSED (Opt.)"


@dataclass(frozen=True)
class ExperimentResult:
    """Everything one seeded synthetic experiment produced."""

    seed: int
    reports: dict[str, EvalReport]
    fit: InteractionFit
    bfs: dict[str, BasisFunction]
    ann: AnnModel
    train_rows: int
    validation_rows: int

    def ordered(self) -> bool:
        """True when the optimized variant beats both baselines on R and RMSE*."""
        opt = self.reports[SYSTEM_OPT]
        return all(
            opt.r > other.r and opt.rmse_star < other.rmse_star
            for other in (self.reports[SYSTEM_ANN], self.reports[SYSTEM_RAW])
        )


def run_experiment(
    seed: int,
    n_signals: int = 24,
    class_dependent: bool = True,
    ann_config: AnnConfig = AnnConfig(),
) -> ExperimentResult:
    """Train on one synthetic test, validate on a second with unseen
    treatments, and compare the three system variants."""
    train_spec = SyntheticSpec(
        n_signals=n_signals, treatments=TRAIN_TREATMENTS, seed=seed,
        class_dependent=class_dependent,
    )
    val_spec = SyntheticSpec(
        n_signals=n_signals, treatments=VALIDATION_TREATMENTS, seed=seed,
        class_dependent=class_dependent,
    )
    train = analyze_spec(train_spec)
    val = analyze_spec(val_spec)

    bfs = fit_basis_functions(train)
    fit = fit_interaction_table(train, bfs)

    ann = train_ann(train.matrix(), train.mos, config=ann_config)
    pred_ann = ann.predict(val.matrix())
    pred_raw, _ = score_table(val, bfs, default_interaction_table(None))
    pred_opt, _ = score_table(val, bfs, fit.table)

    reports = {
        SYSTEM_ANN: evaluate(SYSTEM_ANN, pred_ann, val.mos, val.ci95),
        SYSTEM_RAW: evaluate(SYSTEM_RAW, pred_raw, val.mos, val.ci95),
        SYSTEM_OPT: evaluate(SYSTEM_OPT, pred_opt, val.mos, val.ci95),
    }
    return ExperimentResult(
        seed=seed, reports=reports, fit=fit, bfs=bfs, ann=ann,
        train_rows=train.n_rows, validation_rows=val.n_rows,
    )


def null_control_entry(seed: int, n_signals: int = 24) -> InteractionEntry:
    """The speech-likeness / linear-distortion optimizer entry when the
    latent class-dependent salience rule is disabled.

    With no real interaction present, |c_opt| should stay below the
    acceptance threshold for most seeds.
    """
    spec = SyntheticSpec(
        n_signals=n_signals, treatments=TRAIN_TREATMENTS, seed=seed,
        class_dependent=False,
    )
    train = analyze_spec(spec)
    bfs = fit_basis_functions(train)
    st = salience_table(train, bfs)
    return optimize_dpw(
        st.by_dm["lin_dist"], st.cem_by_signal["prob_speech"],
        cem_name="prob_speech",
    )
