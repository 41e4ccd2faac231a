"""The five evaluation quantities comparing a real and a synthetic table:
per-feature Wasserstein distance and Jensen-Shannon divergence, pairwise
correlation-matrix discrepancy, distance to closest record, and
machine-learning efficacy of a workload regressor. Degenerate inputs produce
flagged conventional values, never silent NaN.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, gbdt
from .preprocess import TableEncoder
from .tables import CATEGORICAL, Table


class MetricsError(ValueError):
    pass


class DegenerateSampleError(MetricsError):
    pass


# -- scalar metrics -----------------------------------------------------------

def wasserstein_1d(real_values, synth_values) -> float:
    """Exact 1-Wasserstein distance between the empirical distributions after
    min-max normalization by the real sample's range."""
    r = np.asarray(real_values, dtype=np.float64)
    s = np.asarray(synth_values, dtype=np.float64)
    if r.size == 0 or s.size == 0:
        raise MetricsError("empty sample")
    lo, hi = float(r.min()), float(r.max())
    if hi == lo:
        raise DegenerateSampleError("real sample is constant; min-max scale undefined")
    a = np.sort((r - lo) / (hi - lo))
    b = np.sort((s - lo) / (hi - lo))
    pooled = np.sort(np.concatenate([a, b]), kind="mergesort")
    deltas = np.diff(pooled)
    ca = np.searchsorted(a, pooled[:-1], side="right") / a.size
    cb = np.searchsorted(b, pooled[:-1], side="right") / b.size
    return float(np.sum(np.abs(ca - cb) * deltas))


def jsd(real_counts, synth_counts) -> float:
    """Jensen-Shannon divergence (log base 2, bounded by 1) over the union
    support of two category->count mappings."""
    np_tot = float(sum(real_counts.values()))
    nq_tot = float(sum(synth_counts.values()))
    if np_tot <= 0 or nq_tot <= 0:
        raise MetricsError("count totals must be positive")
    acc_p = 0.0
    acc_q = 0.0
    for cat in set(real_counts) | set(synth_counts):
        p = real_counts.get(cat, 0) / np_tot
        q = synth_counts.get(cat, 0) / nq_tot
        m = 0.5 * (p + q)
        if p > 0:
            acc_p += real_counts.get(cat, 0) * np.log2(p / m)
        if q > 0:
            acc_q += synth_counts.get(cat, 0) * np.log2(q / m)
    return 0.5 * acc_p / np_tot + 0.5 * acc_q / nq_tot


def pearson(x, y, flags=None, label="") -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise MetricsError("need equal-length samples of size >= 2")
    sx = x - x.mean()
    sy = y - y.mean()
    vx = float(sx @ sx)
    vy = float(sy @ sy)
    if vx == 0.0 or vy == 0.0:
        if flags is not None:
            flags.append(f"pearson:{label}:degenerate_constant_input")
        return 0.0
    r = float(sx @ sy) / np.sqrt(vx * vy)
    return float(np.clip(r, -1.0, 1.0))


def correlation_ratio(categories, values, flags=None, label="") -> float:
    """eta = sqrt(SS_between / SS_total) for a categorical/numeric pair."""
    values = np.asarray(values, dtype=np.float64)
    cats = np.asarray([str(c) for c in categories], dtype=object)
    if cats.shape[0] != values.shape[0] or values.size == 0:
        raise MetricsError("need equal-length non-empty samples")
    mean = values.mean()
    ss_total = float(np.sum((values - mean) ** 2))
    if ss_total == 0.0:
        if flags is not None:
            flags.append(f"correlation_ratio:{label}:degenerate_constant_values")
        return 0.0
    _, inv = np.unique(cats, return_inverse=True)
    counts = np.bincount(inv)
    sums = np.bincount(inv, weights=values)
    ss_between = float(np.sum(counts * (sums / counts - mean) ** 2))
    return float(np.clip(np.sqrt(ss_between / ss_total), 0.0, 1.0))


def _entropy_from_counts(counts):
    c = np.asarray(counts, dtype=np.float64)
    c = c[c > 0]
    n = c.sum()
    p = c / n
    return float(-np.sum(p * np.log(p)))


def theils_u(x, y, flags=None, label="") -> float:
    """Uncertainty coefficient U(x|y) = (H(x) - H(x|y)) / H(x), natural log,
    plug-in entropies. Asymmetric in its arguments."""
    xs = [str(v) for v in x]
    ys = [str(v) for v in y]
    if len(xs) != len(ys) or not xs:
        raise MetricsError("need equal-length non-empty samples")
    n = len(xs)
    hx = _entropy_from_counts(list(Counter(xs).values()))
    if hx == 0.0:
        if flags is not None:
            flags.append(f"theils_u:{label}:degenerate_constant_x")
        return 1.0
    hxy = 0.0
    by_y = Counter(ys)
    joint = Counter(zip(xs, ys))
    for yv, ny in by_y.items():
        sub = [c for (xv, yy), c in joint.items() if yy == yv]
        hxy += (ny / n) * _entropy_from_counts(sub)
    return float(np.clip((hx - hxy) / hx, 0.0, 1.0))


# -- correlation matrices -----------------------------------------------------

PEARSON = "pearson"
CORRELATION_RATIO = "correlation-ratio"
THEILS_U = "theils-u"


@dataclass
class CorrelationMatrix:
    features: list
    methods: list  # n x n method tags
    values: np.ndarray
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {"features": list(self.features), "methods": [list(r) for r in self.methods],
                "values": [[float(v) for v in row] for row in self.values]}


def correlation_matrix(table: Table) -> CorrelationMatrix:
    """Pairwise association over all features: Pearson for numeric pairs,
    correlation ratio for mixed pairs, Theil's U(row|column) for categorical
    pairs. The numeric diagonal is definitionally 1."""
    if table.n_rows == 0:
        raise MetricsError("empty table")
    feats = list(table.schema)
    k = len(feats)
    values = np.zeros((k, k))
    methods = [[None] * k for _ in range(k)]
    flags = []
    for i, fi in enumerate(feats):
        for j, fj in enumerate(feats):
            label = f"{fi.name}~{fj.name}"
            cat_i = fi.kind == CATEGORICAL
            cat_j = fj.kind == CATEGORICAL
            if not cat_i and not cat_j:
                methods[i][j] = PEARSON
                if i == j:
                    values[i, j] = 1.0
                else:
                    values[i, j] = pearson(table[fi.name], table[fj.name], flags, label)
            elif cat_i and cat_j:
                methods[i][j] = THEILS_U
                values[i, j] = theils_u(table[fi.name], table[fj.name], flags, label)
            else:
                methods[i][j] = CORRELATION_RATIO
                if cat_i:
                    values[i, j] = correlation_ratio(table[fi.name], table[fj.name], flags, label)
                else:
                    values[i, j] = correlation_ratio(table[fj.name], table[fi.name], flags, label)
    return CorrelationMatrix([f.name for f in feats], methods, values, flags)


def diff_corr(real_m: CorrelationMatrix, synth_m: CorrelationMatrix) -> float:
    """Root-mean-square difference over off-diagonal cells."""
    if real_m.features != synth_m.features or real_m.methods != synth_m.methods:
        raise MetricsError("correlation matrices have different layouts")
    a, b = real_m.values, synth_m.values
    mask = ~np.eye(a.shape[0], dtype=bool)
    d = (a - b)[mask]
    return float(np.sqrt(np.mean(d * d)))


def dcr(train_encoded, synth_encoded) -> float:
    """Mean distance from each synthetic row to its exact nearest training
    row, in the encoded space, scaled by 1/sqrt(dim)."""
    tr = train_encoded.data if hasattr(train_encoded, "data") else np.asarray(train_encoded)
    sy = synth_encoded.data if hasattr(synth_encoded, "data") else np.asarray(synth_encoded)
    if tr.ndim != 2 or sy.ndim != 2 or tr.shape[1] != sy.shape[1]:
        raise MetricsError("encoded matrices disagree on layout")
    if tr.shape[0] == 0 or sy.shape[0] == 0:
        raise MetricsError("empty encoded matrix")
    dists = _kernels.min_dists(sy, tr)
    return float(np.mean(dists) / np.sqrt(tr.shape[1]))


def mlef(train_table: Table, test_table: Table, reg_cfg=None, target="workload",
         flags=None) -> float:
    """Test-set MSE of a boosted-tree regressor trained to predict ln(target)
    from the remaining features (quantile + one-hot encoders fitted on the
    training argument). Non-positive-target rows are excluded and flagged;
    unseen test categories encode to all-zero blocks."""
    if tuple(train_table.schema) != tuple(test_table.schema):
        raise MetricsError("train/test schema mismatch")
    if reg_cfg is None:
        reg_cfg = gbdt.GbdtConfig.desk_scale()
    sub_schema = tuple(f for f in train_table.schema if f.name != target)
    if len(sub_schema) == len(train_table.schema):
        raise MetricsError(f"target feature {target!r} not in schema")

    def prep(table, tag):
        w = np.asarray(table[target], dtype=np.float64)
        keep = w > 0
        dropped = int(table.n_rows - keep.sum())
        if dropped and flags is not None:
            flags.append(f"mlef:{tag}:excluded_nonpositive_target={dropped}")
        kept = table.take(np.flatnonzero(keep))
        feats = Table(sub_schema, {f.name: kept[f.name] for f in sub_schema})
        return feats, np.log(np.asarray(kept[target], dtype=np.float64))

    train_f, y_train = prep(train_table, "train")
    test_f, y_test = prep(test_table, "test")
    if train_f.n_rows < 2 or test_f.n_rows == 0:
        raise MetricsError("not enough rows with positive target")
    enc = TableEncoder.fit(train_f)
    x_train = enc.encode(train_f).data
    enc_test = enc.encode(test_f, unknown="zeros")
    if enc_test.unknown_count and flags is not None:
        flags.append(f"mlef:test:unknown_categories={enc_test.unknown_count}")
    model = gbdt.fit(x_train, y_train, reg_cfg)
    return gbdt.mse(model.predict(enc_test.data), y_test)


# -- report assembly ----------------------------------------------------------

@dataclass
class EvaluateConfig:
    gbdt: gbdt.GbdtConfig = field(default_factory=gbdt.GbdtConfig.desk_scale)
    histogram_bins: int = 64
    top_categories: int = 5
    target: str = "workload"


@dataclass
class MetricsReport:
    wd: dict
    jsd: dict
    corr_real: CorrelationMatrix
    corr_synth: CorrelationMatrix
    diff_corr: float
    dcr: float
    mlef_train: float
    mlef_synthetic: float
    histograms: dict
    flags: list

    @property
    def diff_mlef(self) -> float:
        return self.mlef_synthetic - self.mlef_train

    def to_dict(self):
        return {
            "wd": self.wd,
            "jsd": self.jsd,
            "corr_real": self.corr_real.to_dict(),
            "corr_synth": self.corr_synth.to_dict(),
            "diff_corr": self.diff_corr,
            "dcr": self.dcr,
            "mlef": {"train": self.mlef_train, "synthetic": self.mlef_synthetic,
                     "diff": self.diff_mlef},
            "histograms": self.histograms,
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _histograms(train, synth, bins, top_k):
    out = {"numeric": {}, "categorical": {}}
    for f in train.schema:
        if f.kind == CATEGORICAL:
            rc = Counter(str(v) for v in train[f.name])
            sc = Counter(str(v) for v in synth[f.name])
            top = sorted(rc, key=lambda c: (-rc[c], c))[:top_k]
            n_r = sum(rc.values())
            n_s = max(sum(sc.values()), 1)
            out["categorical"][f.name] = {
                "categories": top,
                "real": [rc[c] / n_r for c in top],
                "synth": [sc.get(c, 0) / n_s for c in top],
            }
        else:
            rv = np.asarray(train[f.name], dtype=np.float64)
            sv = np.asarray(synth[f.name], dtype=np.float64)
            lo, hi = float(rv.min()), float(rv.max())
            if hi == lo:
                hi = lo + 1.0
            edges = np.linspace(lo, hi, bins + 1)
            rh, _ = np.histogram(rv, bins=edges)
            sh, _ = np.histogram(np.clip(sv, lo, hi), bins=edges)
            out["numeric"][f.name] = {
                "edges": [float(e) for e in edges],
                "real": (rh / max(rv.size, 1)).tolist(),
                "synth": (sh / max(sv.size, 1)).tolist(),
            }
    return out


def evaluate(train: Table, synth: Table, test: Table, cfg: EvaluateConfig | None = None) -> MetricsReport:
    """Populate the full report comparing synthetic data against the real
    train/test split."""
    if cfg is None:
        cfg = EvaluateConfig()
    if not (tuple(train.schema) == tuple(synth.schema) == tuple(test.schema)):
        raise MetricsError("train/synth/test schemas differ")
    flags = []

    wd = {}
    for f in train.numeric_features:
        wd[f.name] = wasserstein_1d(train[f.name], synth[f.name])
    wd["mean"] = float(np.mean([wd[f.name] for f in train.numeric_features]))

    jsd_out = {}
    for f in train.categorical_features:
        jsd_out[f.name] = jsd(Counter(map(str, train[f.name])), Counter(map(str, synth[f.name])))
    jsd_out["mean"] = float(np.mean([jsd_out[f.name] for f in train.categorical_features]))

    corr_real = correlation_matrix(train)
    corr_synth = correlation_matrix(synth)
    flags.extend(f"corr_real:{x}" for x in corr_real.flags)
    flags.extend(f"corr_synth:{x}" for x in corr_synth.flags)
    dc = diff_corr(corr_real, corr_synth)

    enc = TableEncoder.fit(train)
    enc_train = enc.encode(train)
    enc_synth = enc.encode(synth, unknown="zeros")
    if enc_synth.unknown_count:
        flags.append(f"encode:synth:unknown_categories={enc_synth.unknown_count}")
    dcr_value = dcr(enc_train, enc_synth)

    mlef_train = mlef(train, test, cfg.gbdt, target=cfg.target, flags=flags)
    mlef_synth = mlef(synth, test, cfg.gbdt, target=cfg.target, flags=flags)

    return MetricsReport(
        wd=wd, jsd=jsd_out, corr_real=corr_real, corr_synth=corr_synth,
        diff_corr=dc, dcr=dcr_value, mlef_train=mlef_train, mlef_synthetic=mlef_synth,
        histograms=_histograms(train, synth, cfg.histogram_bins, cfg.top_categories),
        flags=flags)


def shuffle_columns(table: Table, seed) -> Table:
    """Independent-marginal baseline: permute every column independently,
    destroying all cross-feature structure while keeping each marginal."""
    rng = np.random.default_rng(seed)
    cols = {}
    for f in table.schema:
        cols[f.name] = table[f.name][rng.permutation(table.n_rows)]
    return Table(table.schema, cols)
