"""Nearest-neighbor interpolation generator over the encoded training matrix.

Each synthetic row is x_b + lambda * (x_n - x_b) for a uniformly drawn base
row b, a uniform pick x_n among its k exact nearest neighbors, and one
lambda ~ U(0,1) shared by all columns, one-hot blocks included. Neighbor
search is exact; approximate indexes are not allowed here.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from . import _kernels
from .preprocess import EncodedMatrix

DEFAULT_K = 5

_MAGIC = b"SMTE"
_HEADER = struct.Struct("<4sqi")  # magic, row count, column count: 16 bytes


class SmoteError(ValueError):
    pass


class SmoteModel:
    def __init__(self, matrix, k, neighbors=None, layout=None):
        X = np.ascontiguousarray(matrix, dtype=np.float64)
        if X.ndim != 2:
            raise SmoteError("encoded matrix must be 2-D")
        if X.shape[0] < k + 1:
            raise SmoteError(f"need at least k+1={k + 1} rows, got {X.shape[0]}")
        if k < 1:
            raise SmoteError("k must be >= 1")
        self.matrix = X
        self.k = int(k)
        self.layout = layout
        self._neighbors = neighbors  # (n, k) exact kNN table, built lazily

    @property
    def neighbors(self):
        if self._neighbors is None:
            self._neighbors = _kernels.knn_all(self.matrix, self.k)
        return self._neighbors

    def knn(self, row_index, k=None):
        """Exact k nearest training rows to row_index (itself excluded),
        ascending by (distance, index)."""
        k = self.k if k is None else k
        if k == self.k and self._neighbors is not None:
            return self._neighbors[row_index].copy()
        return _kernels.knn_of_row(self.matrix, row_index, k)

    def sample(self, n, seed) -> EncodedMatrix:
        if n < 1:
            raise SmoteError("n must be >= 1")
        rng = np.random.default_rng(seed)
        nb = self.neighbors
        base = rng.integers(0, self.matrix.shape[0], size=n)
        pick = rng.integers(0, self.k, size=n)
        lam = rng.random(n)
        xb = self.matrix[base]
        xn = self.matrix[nb[base, pick]]
        out = xb + lam[:, None] * (xn - xb)
        return EncodedMatrix(out, self.layout)


def fit(encoded, k=DEFAULT_K) -> SmoteModel:
    layout = encoded.layout if isinstance(encoded, EncodedMatrix) else None
    data = encoded.data if isinstance(encoded, EncodedMatrix) else encoded
    model = SmoteModel(data, k, layout=layout)
    model.neighbors  # build the exact kNN table now; fit is the slow step
    return model


def save_matrix(matrix, path):
    """Row-major float64 dump with a 16-byte SMTE header."""
    X = np.ascontiguousarray(matrix, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, X.shape[0], X.shape[1]))
        fh.write(X.tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise SmoteError(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise SmoteError(f"{path}: bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype=np.float64)
    if data.size != rows * cols:
        raise SmoteError(f"{path}: expected {rows}x{cols} values, got {data.size}")
    return data.reshape(rows, cols).copy()


def save(model, matrix_path, meta_path, encoder_path):
    save_matrix(model.matrix, matrix_path)
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump({"type": "smote", "k": model.k,
                   "matrix": str(matrix_path), "encoder": str(encoder_path)}, fh, indent=2)


def load(meta_path, layout=None) -> SmoteModel:
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("type") != "smote":
        raise SmoteError(f"{meta_path}: not a smote model file")
    matrix = load_matrix(meta["matrix"])
    return SmoteModel(matrix, meta["k"], layout=layout)
