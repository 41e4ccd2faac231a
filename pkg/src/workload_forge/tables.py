"""Column-oriented tables with a fixed (name, kind) schema and canonical CSV I/O."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

# feature kinds
INT = "int"
FLOAT = "float"
CATEGORICAL = "categorical"

_KINDS = (INT, FLOAT, CATEGORICAL)


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise SchemaError(f"unknown feature kind {self.kind!r} for {self.name!r}")


# The nine derived job features. Order here is the canonical column order of the
# job-table CSV format.
JOB_SCHEMA = (
    Feature("creationtime", INT),
    Feature("computingsite", CATEGORICAL),
    Feature("project", CATEGORICAL),
    Feature("prodstep", CATEGORICAL),
    Feature("datatype", CATEGORICAL),
    Feature("jobstatus", CATEGORICAL),
    Feature("nfiles", INT),
    Feature("size", INT),
    Feature("workload", FLOAT),
)


class Table:
    """Immutable-by-convention column store. Numeric columns are numpy arrays
    (int64 or float64), categorical columns are numpy object arrays of str."""

    def __init__(self, schema, columns):
        self.schema = tuple(schema)
        names = [f.name for f in self.schema]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature names")
        if set(columns) != set(names):
            raise SchemaError(f"columns {sorted(columns)} do not match schema {names}")
        self.columns = {}
        n = None
        for f in self.schema:
            col = columns[f.name]
            if f.kind == INT:
                arr = np.asarray(col, dtype=np.int64)
            elif f.kind == FLOAT:
                arr = np.asarray(col, dtype=np.float64)
            else:
                arr = np.asarray(col, dtype=object)
            if arr.ndim != 1:
                raise SchemaError(f"column {f.name!r} is not 1-D")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise SchemaError(f"column {f.name!r} has length {arr.shape[0]}, expected {n}")
            self.columns[f.name] = arr
        self.n_rows = 0 if n is None else int(n)

    def __len__(self):
        return self.n_rows

    def __getitem__(self, name):
        return self.columns[name]

    def feature(self, name) -> Feature:
        for f in self.schema:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def numeric_features(self):
        return [f for f in self.schema if f.kind != CATEGORICAL]

    @property
    def categorical_features(self):
        return [f for f in self.schema if f.kind == CATEGORICAL]

    def take(self, indices) -> "Table":
        idx = np.asarray(indices)
        return Table(self.schema, {f.name: self.columns[f.name][idx] for f in self.schema})

    def equals(self, other: "Table") -> bool:
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        for f in self.schema:
            a, b = self.columns[f.name], other.columns[f.name]
            if f.kind == CATEGORICAL:
                if not all(x == y for x, y in zip(a, b)):
                    return False
            elif not np.array_equal(a, b):
                return False
        return True

    # -- canonical CSV format ------------------------------------------------

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            self.dump_csv(fh)

    def dump_csv(self, fh):
        fh.write(",".join(f.name for f in self.schema) + "\n")
        cols = [self.columns[f.name] for f in self.schema]
        kinds = [f.kind for f in self.schema]
        for i in range(self.n_rows):
            parts = []
            for kind, col in zip(kinds, cols):
                v = col[i]
                if kind == INT:
                    parts.append(str(int(v)))
                elif kind == FLOAT:
                    parts.append(format(float(v), ".17g"))
                else:
                    parts.append(str(v))
            fh.write(",".join(parts) + "\n")

    @classmethod
    def read_csv(cls, path, schema) -> "Table":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return cls.load_csv(fh, schema)

    @classmethod
    def load_csv(cls, fh, schema) -> "Table":
        schema = tuple(schema)
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty csv: missing header")
        expected = [f.name for f in schema]
        if header != expected:
            raise SchemaError(f"csv header {header} does not match schema {expected}")
        raw = {f.name: [] for f in schema}
        for row in reader:
            if not row:
                continue
            if len(row) != len(schema):
                raise SchemaError(f"row has {len(row)} fields, expected {len(schema)}: {row!r}")
            for f, v in zip(schema, row):
                raw[f.name].append(v)
        cols = {}
        for f in schema:
            if f.kind == INT:
                cols[f.name] = np.array([int(v) for v in raw[f.name]], dtype=np.int64)
            elif f.kind == FLOAT:
                cols[f.name] = np.array([float(v) for v in raw[f.name]], dtype=np.float64)
            else:
                cols[f.name] = np.array(raw[f.name], dtype=object)
        return cls(schema, cols)

    def to_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        self.dump_csv(buf)
        return buf.getvalue().encode("utf-8")


def job_table(columns) -> Table:
    """Build a job table and enforce the job-record invariants."""
    t = Table(JOB_SCHEMA, columns)
    if t.n_rows:
        if np.any(t["nfiles"] < 0):
            raise SchemaError("nfiles must be non-negative")
        if np.any(t["size"] < 0):
            raise SchemaError("size must be non-negative")
        if np.any(t["workload"] < 0):
            raise SchemaError("workload must be non-negative")
        for dt in t["datatype"]:
            if not str(dt).startswith("DAOD"):
                raise SchemaError(f"datatype {dt!r} does not start with DAOD")
    return t
