"""The student architecture: ReLU MLP embedding followed by linear attention.

Prediction: <Gamma * sigma(W X + b 1^T) y / N, sigma(W x + b)>. The attention
matrix Gamma supports three storage layouts (dense, diagonal, low-rank factor)
behind one forward contract. The block-structured full attention is kept only
to validate that its read-out entry equals the simplified forward.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .tasks import Prompt

_MAGIC = b"ICLM"
_VERSION = 1
_LAYOUT_TAGS = {"dense": 0, "diag": 1, "lowrank": 2}
_TAG_LAYOUTS = {v: k for k, v in _LAYOUT_TAGS.items()}


@dataclass(frozen=True)
class Gamma:
    """Attention matrix in one of three layouts.

    dense: data is the full m x m matrix.
    diag: data is the m-vector of diagonal entries.
    lowrank: data is an m x k factor A, Gamma = A A^T.
    """

    layout: str
    data: np.ndarray

    def __post_init__(self):
        if self.layout not in _LAYOUT_TAGS:
            raise ValueError(f"unknown layout {self.layout!r}")
        expect_ndim = 1 if self.layout == "diag" else 2
        if self.data.ndim != expect_ndim:
            raise ValueError("layout/data shape mismatch")
        if self.layout == "dense" and self.data.shape[0] != self.data.shape[1]:
            raise ValueError("dense Gamma must be square")

    @property
    def m(self) -> int:
        return self.data.shape[0]

    def matvec(self, u: np.ndarray) -> np.ndarray:
        if self.layout == "dense":
            return self.data @ u
        if self.layout == "diag":
            return self.data * u
        return self.data @ (self.data.T @ u)

    def quad(self, V: np.ndarray, u: np.ndarray) -> np.ndarray:
        """v^T Gamma u for each column v of V (m x q); avoids dense outer products."""
        return V.T @ self.matvec(u)

    def dense(self) -> np.ndarray:
        if self.layout == "dense":
            return self.data
        if self.layout == "diag":
            return np.diag(self.data)
        return self.data @ self.data.T

    def frobenius_norm(self) -> float:
        if self.layout == "lowrank":
            g = self.data.T @ self.data  # k x k
            return float(np.sqrt(np.sum(g * g)))
        return float(np.linalg.norm(self.data if self.layout == "dense" else self.data))


@dataclass(frozen=True)
class ModelParams:
    W: np.ndarray  # m x d, rows w_j
    b: np.ndarray  # m biases
    gamma: Gamma

    def __post_init__(self):
        m = self.W.shape[0]
        if self.b.shape != (m,) or self.gamma.m != m:
            raise ValueError("inconsistent parameter dimensions")

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def embed(params: ModelParams, prompt: Prompt) -> np.ndarray:
    """The (m+1) x (N+1) token matrix: features on top, labels in the last row,
    query in the last column with its label masked to 0."""
    feats_ctx = relu(params.W @ prompt.X + params.b[:, None])
    feats_query = relu(params.W @ prompt.query_x + params.b)
    top = np.hstack([feats_ctx, feats_query[:, None]])
    bottom = np.concatenate([prompt.y, [0.0]])
    return np.vstack([top, bottom])


def context_feature_average(params: ModelParams, X: np.ndarray,
                            y: np.ndarray) -> np.ndarray:
    """u = sigma(W X + b 1^T) y / N."""
    N = X.shape[1]
    if N < 1:
        raise ValueError("context must contain at least one example")
    return relu(params.W @ X + params.b[:, None]) @ y / N


def query_features(params: ModelParams, queries: np.ndarray) -> np.ndarray:
    """sigma(W x + b) for each column of queries (d x q)."""
    return relu(params.W @ queries + params.b[:, None])


def forward(params: ModelParams, prompt: Prompt) -> float:
    u = context_feature_average(params, prompt.X, prompt.y)
    v = query_features(params, prompt.query_x[:, None])
    return float(params.gamma.quad(v, u)[0])


def predict_queries(params: ModelParams, X: np.ndarray, y: np.ndarray,
                    queries: np.ndarray) -> np.ndarray:
    """Forward pass for many queries sharing one context; queries is d x q."""
    u = context_feature_average(params, X, y)
    V = query_features(params, queries)
    return params.gamma.quad(V, u)


def full_attention_forward(v: float, K: np.ndarray, W: np.ndarray,
                           b: np.ndarray, prompt: Prompt) -> float:
    """Bottom-right entry of the block-structured linear attention output,
    residual stream excluded. The unconstrained blocks of the merged
    projection/key-query matrices are fixed to zero; they cannot reach the
    read-out entry."""
    m = W.shape[0]
    if K.shape != (m, m) or b.shape != (m,):
        raise ValueError("inconsistent dimensions")
    params = ModelParams(W=W, b=b, gamma=Gamma("dense", np.zeros((m, m))))
    E = embed(params, prompt)
    N = prompt.N
    W_pv = np.zeros((m + 1, m + 1))
    W_pv[m, m] = v
    W_kq = np.zeros((m + 1, m + 1))
    W_kq[:m, :m] = K
    out = W_pv @ E @ (E.T @ W_kq @ E) / N
    return float(out[m, N])


# Checkpoint format, little-endian:
#   magic "ICLM" | u32 version | u64 m | u64 d | u8 layout tag
#   | u64 gamma trailing dim (columns for dense/lowrank, 0 for diag)
#   | W row-major f64 | b f64 | gamma payload f64
def save_params(params: ModelParams, path) -> None:
    tag = _LAYOUT_TAGS[params.gamma.layout]
    gcols = 0 if params.gamma.layout == "diag" else params.gamma.data.shape[1]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQQBQ", _VERSION, params.m, params.d, tag, gcols))
        fh.write(np.ascontiguousarray(params.W, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.b, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.gamma.data, dtype="<f8").tobytes())


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a model checkpoint (bad magic)")
        version, m, d, tag, gcols = struct.unpack("<IQQBQ", fh.read(29))
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        layout = _TAG_LAYOUTS[tag]
        W = np.frombuffer(fh.read(8 * m * d), dtype="<f8").reshape(m, d).copy()
        b = np.frombuffer(fh.read(8 * m), dtype="<f8").copy()
        if layout == "diag":
            gdata = np.frombuffer(fh.read(8 * m), dtype="<f8").copy()
        else:
            gdata = np.frombuffer(fh.read(8 * m * gcols), dtype="<f8").reshape(m, gcols).copy()
    return ModelParams(W=W, b=b, gamma=Gamma(layout, gdata))
