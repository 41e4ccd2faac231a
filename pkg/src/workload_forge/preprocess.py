"""Reversible table encoders: Gaussian quantile transform for numeric features,
one-hot for categorical features. Numeric blocks lead the encoded matrix."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .tables import CATEGORICAL, Feature, Table

DEFAULT_CLAMP = 5.2
MAX_QUANTILES = 1000


class PreprocessError(ValueError):
    pass


class DegenerateFeatureError(PreprocessError):
    pass


class UnknownCategoryError(PreprocessError):
    pass


class QuantileTransformer:
    """Rank-based map of a numeric feature to a standard normal through a
    piecewise-linear empirical CDF; tied reference values collapse to their
    midrank so integer-heavy features stay centered."""

    def __init__(self, references, name="", clamp=DEFAULT_CLAMP):
        refs = np.asarray(references, dtype=np.float64)
        if refs.size < 2:
            raise PreprocessError("need at least 2 reference quantiles")
        if np.any(np.diff(refs) < 0):
            raise PreprocessError("reference quantiles must be non-decreasing")
        if clamp <= 0:
            raise PreprocessError("clamp bound must be positive")
        self.references = refs
        self.name = name
        self.clamp = float(clamp)
        self.eps = float(ndtr(-self.clamp))

        levels = np.linspace(0.0, 1.0, refs.size)
        vals, first = np.unique(refs, return_index=True)
        if vals.size < 2:
            raise DegenerateFeatureError(f"feature {name!r} is constant at fit time")
        last = np.append(first[1:], refs.size) - 1
        self._values = vals
        # tied references collapse to the midrank of their plateau
        self._levels = 0.5 * (levels[first] + levels[last])

    @classmethod
    def fit(cls, values, q=None, name="", clamp=DEFAULT_CLAMP) -> "QuantileTransformer":
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise PreprocessError(f"no values to fit feature {name!r}")
        if not np.all(np.isfinite(values)):
            raise PreprocessError(f"non-finite values in feature {name!r}")
        if q is None:
            q = min(MAX_QUANTILES, values.size)
        q = max(int(q), 2)
        refs = np.quantile(values, np.linspace(0.0, 1.0, q))
        return cls(refs, name=name, clamp=clamp)

    def transform(self, v):
        v = np.asarray(v, dtype=np.float64)
        u = np.interp(v, self._values, self._levels, left=0.0, right=1.0)
        z = ndtri(np.clip(u, self.eps, 1.0 - self.eps))
        # saturated ranks sit exactly on the clamp so inverse() can snap back
        z = np.where(u >= 1.0 - self.eps, self.clamp, z)
        z = np.where(u <= self.eps, -self.clamp, z)
        return z if z.ndim else float(z)

    def inverse(self, z):
        z = np.asarray(z, dtype=np.float64)
        zc = np.clip(z, -self.clamp, self.clamp)
        v = np.interp(ndtr(zc), self._levels, self._values)
        # at the clamp bound the rank is saturated; snap to the range endpoint
        v = np.where(zc >= self.clamp, self._values[-1], v)
        v = np.where(zc <= -self.clamp, self._values[0], v)
        return v if v.ndim else float(v)


def fit_quantile(values, q, name="", clamp=DEFAULT_CLAMP) -> QuantileTransformer:
    return QuantileTransformer.fit(values, q=q, name=name, clamp=clamp)


def transform_quantile(t, v):
    return t.transform(v)


def inverse_quantile(t, z):
    return t.inverse(z)


class OneHotEncoder:
    """Fixed vocabulary in descending-count order, ties broken lexicographically."""

    def __init__(self, vocabulary, name=""):
        vocab = [str(v) for v in vocabulary]
        if len(set(vocab)) != len(vocab):
            raise PreprocessError(f"duplicate vocabulary entries for {name!r}")
        if not vocab:
            raise PreprocessError(f"empty vocabulary for {name!r}")
        self.vocabulary = vocab
        self.name = name
        self._index = {v: i for i, v in enumerate(vocab)}

    @classmethod
    def fit(cls, values, name="") -> "OneHotEncoder":
        values = [str(v) for v in values]
        if not values:
            raise PreprocessError(f"no values to fit feature {name!r}")
        counts = Counter(values)
        vocab = sorted(counts, key=lambda v: (-counts[v], v))
        return cls(vocab, name=name)

    def indices(self, values, unknown="error"):
        """Vocabulary index per value; unknown values give -1 under unknown='zeros'."""
        out = np.empty(len(values), dtype=np.int64)
        misses = 0
        for i, v in enumerate(values):
            j = self._index.get(str(v), -1)
            if j < 0:
                if unknown == "error":
                    raise UnknownCategoryError(
                        f"value {v!r} not in the fitted vocabulary of {self.name!r}")
                misses += 1
            out[i] = j
        return out, misses


def fit_onehot(values, name="") -> OneHotEncoder:
    return OneHotEncoder.fit(values, name=name)


@dataclass(frozen=True)
class Block:
    name: str
    kind: str  # table feature kind: int / float / categorical
    offset: int
    width: int


class Layout:
    """Column layout of the encoded matrix: numeric block first, then one
    one-hot block per categorical feature."""

    def __init__(self, blocks):
        self.blocks = tuple(blocks)
        self.numeric = [b for b in self.blocks if b.kind != CATEGORICAL]
        self.categorical = [b for b in self.blocks if b.kind == CATEGORICAL]
        self.numeric_dim = len(self.numeric)
        self.dim = sum(b.width for b in self.blocks)

    @property
    def cat_sizes(self):
        return [b.width for b in self.categorical]

    def describe(self):
        return [{"name": b.name, "kind": b.kind, "offset": b.offset, "width": b.width}
                for b in self.blocks]

    def schema_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.describe(), sort_keys=True).encode()).hexdigest()


@dataclass
class EncodedMatrix:
    data: np.ndarray
    layout: Layout

    @property
    def n_rows(self):
        return self.data.shape[0]


class TableEncoder:
    """Per-feature transforms for one table schema, fitted once and immutable."""

    def __init__(self, schema, quantiles, onehots, clamp=DEFAULT_CLAMP):
        self.schema = tuple(schema)
        self.quantiles = dict(quantiles)
        self.onehots = dict(onehots)
        self.clamp = clamp
        blocks = []
        offset = 0
        for f in self.schema:
            if f.kind != CATEGORICAL:
                blocks.append(Block(f.name, f.kind, offset, 1))
                offset += 1
        for f in self.schema:
            if f.kind == CATEGORICAL:
                width = len(self.onehots[f.name].vocabulary)
                blocks.append(Block(f.name, f.kind, offset, width))
                offset += width
        self.layout = Layout(blocks)

    @classmethod
    def fit(cls, table: Table, q=None, clamp=DEFAULT_CLAMP) -> "TableEncoder":
        if table.n_rows == 0:
            raise PreprocessError("cannot fit an encoder on an empty table")
        quantiles = {}
        onehots = {}
        for f in table.schema:
            col = table[f.name]
            if f.kind == CATEGORICAL:
                onehots[f.name] = OneHotEncoder.fit(col, name=f.name)
            else:
                quantiles[f.name] = QuantileTransformer.fit(col, q=q, name=f.name, clamp=clamp)
        return cls(table.schema, quantiles, onehots, clamp=clamp)

    def encode(self, table: Table, unknown="error") -> EncodedMatrix:
        if tuple(table.schema) != self.schema:
            raise PreprocessError("table schema does not match the fitted encoder")
        n = table.n_rows
        out = np.zeros((n, self.layout.dim), dtype=np.float64)
        unknown_count = 0
        for b in self.layout.blocks:
            col = table[b.name]
            if b.kind == CATEGORICAL:
                idx, misses = self.onehots[b.name].indices(col, unknown=unknown)
                unknown_count += misses
                known = idx >= 0
                out[np.flatnonzero(known), b.offset + idx[known]] = 1.0
            else:
                out[:, b.offset] = self.quantiles[b.name].transform(col)
        m = EncodedMatrix(out, self.layout)
        m.unknown_count = unknown_count
        return m

    def decode(self, encoded) -> Table:
        data = encoded.data if isinstance(encoded, EncodedMatrix) else np.asarray(encoded)
        if data.ndim != 2 or data.shape[1] != self.layout.dim:
            raise PreprocessError(
                f"encoded width {data.shape} does not match layout dim {self.layout.dim}")
        if not np.all(np.isfinite(data)):
            raise PreprocessError("non-finite entries in encoded matrix")
        cols = {}
        for b in self.layout.blocks:
            if b.kind == CATEGORICAL:
                vocab = np.asarray(self.onehots[b.name].vocabulary, dtype=object)
                idx = np.argmax(data[:, b.offset:b.offset + b.width], axis=1)
                cols[b.name] = vocab[idx]
            else:
                v = self.quantiles[b.name].inverse(data[:, b.offset])
                cols[b.name] = np.rint(v).astype(np.int64) if b.kind == "int" else v
        return Table(self.schema, cols)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        feats = []
        for f in self.schema:
            if f.kind == CATEGORICAL:
                feats.append({"name": f.name, "kind": f.kind,
                              "vocab": self.onehots[f.name].vocabulary})
            else:
                feats.append({"name": f.name, "kind": f.kind,
                              "references": self.quantiles[f.name].references.tolist()})
        return json.dumps({"version": 1, "clamp": self.clamp, "features": feats}, indent=2)

    @classmethod
    def from_json(cls, text) -> "TableEncoder":
        obj = json.loads(text)
        clamp = obj.get("clamp", DEFAULT_CLAMP)
        schema = []
        quantiles = {}
        onehots = {}
        for fo in obj["features"]:
            f = Feature(fo["name"], fo["kind"])
            schema.append(f)
            if f.kind == CATEGORICAL:
                onehots[f.name] = OneHotEncoder(fo["vocab"], name=f.name)
            else:
                quantiles[f.name] = QuantileTransformer(fo["references"], name=f.name, clamp=clamp)
        return cls(schema, quantiles, onehots, clamp=clamp)

    @classmethod
    def load(cls, path) -> "TableEncoder":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
