"""Graph-convolution building blocks.

Two flavors of convolution over a dense weighted adjacency:

* ``EdgeGcn`` — every positive edge weight is fed through a small filter
  network that emits an edge-specific (d_out, d_in) weight matrix governing
  the message along that edge. Messages are mean-aggregated over the
  strictly-positive neighborhood; isolated nodes keep only the self term.
* ``NodeGcn`` — symmetric-normalized propagation with self-loops,
  D^{-1/2} (A + I) D^{-1/2} X W + b.

``resolution_map`` turns an n x d embedding into a valid d x d graph, which
is what shifts graph resolution between the stairs.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, ShapeError

LEAKY_SLOPE = 0.1
FILTER_HIDDEN = 8
BN_EPS = 1e-5


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    return rng.normal(scale=np.sqrt(2.0 / (fan_in + fan_out)), size=shape)


class EdgeGcn:
    """Edge-conditioned graph convolution with a per-edge dynamic filter."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 hidden: int = FILTER_HIDDEN):
        self.d_in = d_in
        self.d_out = d_out
        # filter network: edge weight (scalar) -> flattened (d_out, d_in) matrix
        self.filter_w1 = ad.parameter(glorot(rng, 1, hidden, (hidden, 1)))
        self.filter_b1 = ad.parameter(np.zeros((1, hidden)))
        self.filter_w2 = ad.parameter(glorot(rng, hidden, d_out * d_in, (d_out * d_in, hidden)))
        self.filter_b2 = ad.parameter(np.zeros((1, d_out * d_in)))
        self.self_weight = ad.parameter(glorot(rng, d_in, d_out, (d_out, d_in)))
        self.bias = ad.parameter(np.zeros((1, d_out)))

    def parameters(self) -> dict[str, Tensor]:
        return {"filter_w1": self.filter_w1, "filter_b1": self.filter_b1,
                "filter_w2": self.filter_w2, "filter_b2": self.filter_b2,
                "self_weight": self.self_weight, "bias": self.bias}

    def edge_filter(self, weights: Tensor) -> Tensor:
        """Map an E x 1 column of edge weights to E x (d_out * d_in) filters."""
        e = weights.shape[0]
        h = ad.tanh(ad.add(ad.matmul(weights, ad.transpose(self.filter_w1)),
                           ad.broadcast_rows(self.filter_b1, e)))
        return ad.add(ad.matmul(h, ad.transpose(self.filter_w2)),
                      ad.broadcast_rows(self.filter_b2, e))

    def forward(self, x: Tensor, adj: Tensor) -> Tensor:
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise ShapeError(f"edge_gcn: adjacency must be square, got {adj.shape}")
        if x.shape[0] != n:
            raise ShapeError(f"edge_gcn: features have {x.shape[0]} rows for {n} nodes")
        if x.shape[1] != self.d_in:
            raise ShapeError(f"edge_gcn: features have {x.shape[1]} columns, layer expects {self.d_in}")
        out = ad.add(ad.matmul(x, ad.transpose(self.self_weight)),
                     ad.broadcast_rows(self.bias, n))
        dst, src = np.nonzero(adj.value > 0.0)
        if dst.size:
            weights = ad.gather_rows(ad.reshape(adj, n * n, 1), dst * n + src)
            filters = self.edge_filter(weights)
            messages = ad.edge_matvec(filters, ad.gather_rows(x, src), self.d_out)
            summed = ad.scatter_add_rows(messages, dst, n)
            counts = np.bincount(dst, minlength=n).astype(np.float64)
            inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0).reshape(n, 1)
            neighbor = ad.mul(summed, ad.broadcast_cols(Tensor(inv), self.d_out))
            out = ad.add(out, neighbor)
        return out

    __call__ = forward


class NodeGcn:
    """Symmetric-normalized graph convolution with self-loops."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.d_in = d_in
        self.d_out = d_out
        self.weight = ad.parameter(glorot(rng, d_in, d_out, (d_in, d_out)))
        self.bias = ad.parameter(np.zeros((1, d_out)))

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x: Tensor, adj: Tensor) -> Tensor:
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise ShapeError(f"node_gcn: adjacency must be square, got {adj.shape}")
        if x.shape[0] != n:
            raise ShapeError(f"node_gcn: features have {x.shape[0]} rows for {n} nodes")
        if x.shape[1] != self.d_in:
            raise ShapeError(f"node_gcn: features have {x.shape[1]} columns, layer expects {self.d_in}")
        a_tilde = ad.add(adj, Tensor(np.eye(n)))
        degree = ad.matmul(a_tilde, Tensor(np.ones((n, 1))))
        inv_sqrt = ad.divide(Tensor(np.ones((n, 1))), ad.sqrt(degree))
        norm = ad.mul(ad.mul(a_tilde, ad.broadcast_cols(inv_sqrt, n)),
                      ad.broadcast_rows(ad.transpose(inv_sqrt), n))
        return ad.add(ad.matmul(ad.matmul(norm, x), self.weight),
                      ad.broadcast_rows(self.bias, n))

    __call__ = forward


class NormDrop:
    """Per-feature batch normalization followed by dropout.

    Train mode standardizes with batch statistics over the node rows and
    updates running statistics; eval mode is deterministic, using running
    statistics and no masking.
    """

    def __init__(self, dim: int, rate: float = 0.2, momentum: float = 0.1,
                 eps: float = BN_EPS):
        if not 0.0 <= rate < 1.0:
            raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
        self.dim = dim
        self.rate = rate
        self.momentum = momentum
        self.eps = eps
        self.gain = ad.parameter(np.ones((1, dim)))
        self.shift = ad.parameter(np.zeros((1, dim)))
        self.running_mean = np.zeros((1, dim))
        self.running_var = np.ones((1, dim))

    def parameters(self) -> dict[str, Tensor]:
        return {"gain": self.gain, "shift": self.shift}

    def buffers(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        self.running_mean = np.array(buffers["running_mean"], dtype=np.float64)
        self.running_var = np.array(buffers["running_var"], dtype=np.float64)

    def forward(self, x: Tensor, mode: str, rng: np.random.Generator | None = None) -> Tensor:
        n, d = x.shape
        if d != self.dim:
            raise ShapeError(f"norm_drop: got {d} features, configured for {self.dim}")
        if mode == "train":
            if n < 2:
                raise ContractError("norm_drop: train mode needs at least 2 rows for batch statistics")
            ones_col = Tensor(np.ones((n, 1)))
            mu = ad.scale(ad.matmul(ad.transpose(ones_col), x), 1.0 / n)
            centered = ad.sub(x, ad.broadcast_rows(mu, n))
            var = ad.scale(ad.matmul(ad.transpose(ones_col), ad.mul(centered, centered)), 1.0 / n)
            std = ad.sqrt(ad.add_scalar(var, self.eps))
            normed = ad.divide(centered, ad.broadcast_rows(std, n))
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mu.value
            self.running_var = (1 - m) * self.running_var + m * var.value
        elif mode == "eval":
            mu = Tensor(self.running_mean)
            std = Tensor(np.sqrt(self.running_var + self.eps))
            normed = ad.divide(ad.sub(x, ad.broadcast_rows(mu, n)), ad.broadcast_rows(std, n))
        else:
            raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
        out = ad.add(ad.mul(normed, ad.broadcast_rows(self.gain, n)),
                     ad.broadcast_rows(self.shift, n))
        if mode == "train" and self.rate > 0.0:
            if rng is None:
                raise ContractError("norm_drop: train mode with dropout needs an RNG")
            out = ad.dropout(out, self.rate, rng)
        return out

    __call__ = forward


class Dense:
    """Plain affine map on node rows: X W + b."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = ad.parameter(glorot(rng, d_in, d_out, (d_in, d_out)))
        self.bias = ad.parameter(np.zeros((1, d_out))) if bias else None

    def parameters(self) -> dict[str, Tensor]:
        params = {"weight": self.weight}
        if self.bias is not None:
            params["bias"] = self.bias
        return params

    def forward(self, x: Tensor) -> Tensor:
        out = ad.matmul(x, self.weight)
        if self.bias is not None:
            out = ad.add(out, ad.broadcast_rows(self.bias, x.shape[0]))
        return out

    __call__ = forward


def resolution_map(z: Tensor) -> Tensor:
    """Turn an n x d embedding into a d x d graph: Z^T Z, symmetrized,
    diagonal zeroed, negatives clamped, rescaled by the max off-diagonal
    entry so every output satisfies the connectivity-matrix invariants."""
    d = z.shape[1]
    gram = ad.matmul(ad.transpose(z), z)
    gram = ad.scale(ad.add(gram, ad.transpose(gram)), 0.5)
    off = ad.mul(gram, Tensor(1.0 - np.eye(d)))
    clamped = ad.leaky_relu(off, slope=0.0)
    peak = ad.amax(clamped)
    if peak.value[0, 0] > 0.0:
        return ad.divide(clamped, peak)
    return clamped
