"""Weighted-graph centralities, correlation, the composite generator loss,
and the evaluation metrics.

Centralities follow connectomics conventions: edge distance is 1/weight for
positive weights (no edge otherwise). Betweenness uses Brandes' accumulation
over Dijkstra shortest paths; closeness uses the reachable-count rescale on
disconnected graphs. Eigenvector centrality is power iteration with a
diagonal shift so graphs with a bipartite-symmetric spectrum (e.g. paths)
still converge; the shift scales with the matrix, leaving the eigenvector
and scale-invariance untouched.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, ConvergenceError

EC_TOL = 1e-10
EC_MAX_ITER = 10_000
EC_TRAIN_UNROLL = 50


def _check_centrality_input(adj: np.ndarray, allow_zero: bool = False) -> np.ndarray:
    adj = np.asarray(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ContractError(f"centrality: expected square matrix, got {adj.shape}")
    if not np.isfinite(adj).all():
        raise ContractError("centrality: non-finite entries")
    if np.abs(adj - adj.T).max() > 1e-9:
        raise ContractError("centrality: matrix must be symmetric")
    if adj.min() < 0:
        raise ContractError("centrality: negative weights are not supported")
    if not allow_zero and adj.max() == 0.0:
        raise ContractError("centrality: undefined for the all-zero graph")
    return adj


def eigenvector_centrality(adj: np.ndarray, tol: float = EC_TOL,
                           max_iter: int = EC_MAX_ITER) -> np.ndarray:
    """L2-normalized leading-eigenvector scores by shifted power iteration
    from the uniform vector."""
    adj = _check_centrality_input(adj)
    n = adj.shape[0]
    shifted = adj + adj.max() * np.eye(n)
    x = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(max_iter):
        y = shifted @ x
        y /= np.linalg.norm(y)
        residual = np.linalg.norm(y - x)
        x = y
        if residual < tol:
            return x
    raise ConvergenceError(
        f"eigenvector centrality did not converge in {max_iter} iterations "
        f"(residual {residual:.3g}, tol {tol:.3g})")


def eigenvector_centrality_node(adj: Tensor, iters: int = EC_TRAIN_UNROLL) -> Tensor:
    """Differentiable fixed-depth unrolled power iteration (n x 1 column)."""
    n = adj.shape[0]
    if adj.value.max() <= 0.0:
        raise ContractError("centrality: undefined for the all-zero graph")
    peak = ad.amax(adj)
    shifted = ad.add(adj, ad.mul(Tensor(np.eye(n)),
                                 ad.broadcast_cols(ad.broadcast_rows(peak, n), n)))
    x = Tensor(np.full((n, 1), 1.0 / np.sqrt(n)))
    for _ in range(iters):
        y = ad.matmul(shifted, x)
        norm = ad.sqrt(ad.total(ad.mul(y, y)))
        x = ad.divide(y, norm)
    return x


def _adjacency_lists(adj: np.ndarray) -> list[list[tuple[int, float]]]:
    n = adj.shape[0]
    lists: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    rows, cols = np.nonzero(adj > 0)
    for r, c in zip(rows, cols):
        lists[r].append((int(c), 1.0 / adj[r, c]))
    return lists


def _dijkstra(neighbors, source: int, n: int):
    """Shortest paths from `source`: finalized order, path counts,
    predecessor lists, distances."""
    dist = np.full(n, np.inf)
    sigma = np.zeros(n)
    preds: list[list[int]] = [[] for _ in range(n)]
    done = [False] * n
    dist[source] = 0.0
    sigma[source] = 1.0
    order: list[int] = []
    heap = [(0.0, source)]
    while heap:
        d, v = heapq.heappop(heap)
        if done[v] or d > dist[v]:
            continue
        done[v] = True
        order.append(v)
        for w, step in neighbors[v]:
            nd = dist[v] + step
            if nd < dist[w]:
                dist[w] = nd
                sigma[w] = sigma[v]
                preds[w] = [v]
                heapq.heappush(heap, (nd, w))
            elif nd == dist[w] and not done[w]:
                sigma[w] += sigma[v]
                preds[w].append(v)
    return order, sigma, preds, dist


def betweenness_centrality(adj: np.ndarray) -> np.ndarray:
    """Brandes betweenness, normalized by (n-1)(n-2)/2 for undirected graphs."""
    adj = _check_centrality_input(adj, allow_zero=True)
    n = adj.shape[0]
    if n < 3:
        return np.zeros(n)
    neighbors = _adjacency_lists(adj)
    bc = np.zeros(n)
    for s in range(n):
        order, sigma, preds, _ = _dijkstra(neighbors, s, n)
        delta = np.zeros(n)
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    # ordered pairs counted twice on undirected graphs
    return bc / ((n - 1) * (n - 2))


def closeness_centrality(adj: np.ndarray) -> np.ndarray:
    """(n-1)/sum-of-distances closeness with the reachable-count rescale;
    isolated nodes score 0."""
    adj = _check_centrality_input(adj, allow_zero=True)
    n = adj.shape[0]
    if n < 2:
        return np.zeros(n)
    neighbors = _adjacency_lists(adj)
    cc = np.zeros(n)
    for u in range(n):
        _, _, _, dist = _dijkstra(neighbors, u, n)
        finite = np.isfinite(dist)
        finite[u] = False
        r = int(finite.sum())
        if r == 0:
            continue
        total = dist[finite].sum()
        cc[u] = (r / total) * (r / (n - 1))
    return cc


def _upper_triangle(values: np.ndarray) -> np.ndarray:
    r, c = np.triu_indices(values.shape[0], k=1)
    return values[r, c]


def pcc(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation over strict upper-triangle entries."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ContractError(f"pcc: shapes {x.shape} and {y.shape} differ")
    ux, uy = _upper_triangle(x), _upper_triangle(y)
    ux = ux - ux.mean()
    uy = uy - uy.mean()
    vx, vy = float(ux @ ux), float(uy @ uy)
    if vx == 0.0 or vy == 0.0:
        raise ContractError("pcc: zero variance over upper-triangle entries")
    return float(ux @ uy / np.sqrt(vx * vy))


def pcc_loss(x: np.ndarray, y: np.ndarray) -> float:
    return 1.0 - pcc(x, y)


def _pcc_node(pred: Tensor, real: np.ndarray) -> Tensor:
    n = pred.shape[0]
    rows, cols = np.triu_indices(n, k=1)
    flat = rows * n + cols
    px = ad.gather_rows(ad.reshape(pred, n * n, 1), flat)
    ry = _upper_triangle(real).reshape(-1, 1)
    m = px.shape[0]
    cx = ad.sub(px, ad.broadcast_rows(ad.mean(px), m))
    cy = Tensor(ry - ry.mean())
    vx = ad.total(ad.mul(cx, cx))
    vy = float(cy.value.T @ cy.value)
    if vx.value[0, 0] == 0.0 or vy == 0.0:
        raise ContractError("pcc: zero variance over upper-triangle entries")
    cov = ad.total(ad.mul(cx, cy))
    return ad.divide(cov, ad.sqrt(ad.scale(vx, vy)))


@dataclass(frozen=True)
class GtpWeights:
    adv: float = 1.0
    l1: float = 1.0
    pcc: float = 0.1
    topology: float = 2.0

    def __post_init__(self):
        if min(self.adv, self.l1, self.pcc, self.topology) < 0:
            raise ContractError("loss weights must be nonnegative")


def gtp_loss(pred, real, disc_out, weights: GtpWeights = GtpWeights(),
             ec_iters: int = EC_TRAIN_UNROLL):
    """Ground-truth-preserving composite loss.

    adv = -log(disc_out); l1 = mean absolute off-diagonal difference;
    pcc = 1 - Pearson correlation; topology = node-averaged L1 distance
    between eigenvector centralities (same fixed-depth unrolled iteration on
    both sides, so pred == real gives exactly zero).

    Returns the weighted total as a differentiable scalar plus a dict of
    unweighted component values.
    """
    pred_t = pred if isinstance(pred, Tensor) else Tensor(np.asarray(pred, dtype=np.float64))
    real_adj = real.adjacency if hasattr(real, "adjacency") else np.asarray(real, dtype=np.float64)
    if pred_t.shape != real_adj.shape:
        raise ContractError(f"gtp_loss: shapes {pred_t.shape} and {real_adj.shape} differ")
    n = pred_t.shape[0]
    disc_t = disc_out if isinstance(disc_out, Tensor) else Tensor([[float(disc_out)]])
    if not 0.0 < disc_t.value[0, 0] <= 1.0:
        raise ContractError(f"gtp_loss: discriminator output must lie in (0, 1], got {disc_t.value[0, 0]}")

    l_adv = ad.scale(ad.log(disc_t), -1.0)
    off_mask = Tensor(1.0 - np.eye(n))
    diff = ad.sub(pred_t, Tensor(real_adj))
    l_l1 = ad.scale(ad.total(ad.mul(ad.absolute(diff), off_mask)), 1.0 / (n * (n - 1)))
    l_pcc = ad.add_scalar(ad.scale(_pcc_node(pred_t, real_adj), -1.0), 1.0)
    components = {
        "adv": l_adv.item(),
        "l1": l_l1.item(),
        "pcc": l_pcc.item(),
        "topology": 0.0,
    }
    total = ad.add(ad.add(ad.scale(l_adv, weights.adv), ad.scale(l_l1, weights.l1)),
                   ad.scale(l_pcc, weights.pcc))
    if weights.topology != 0.0:
        ec_pred = eigenvector_centrality_node(pred_t, iters=ec_iters)
        ec_real = eigenvector_centrality_node(Tensor(real_adj), iters=ec_iters)
        l_top = ad.scale(ad.total(ad.absolute(ad.sub(ec_pred, ec_real))), 1.0 / n)
        components["topology"] = l_top.item()
        total = ad.add(total, ad.scale(l_top, weights.topology))
    components["total"] = total.item()
    return total, components


@dataclass(frozen=True)
class MetricReport:
    mae: float
    mae_bc: float
    mae_cc: float
    mae_ec: float
    kl: float

    def as_dict(self) -> dict[str, float]:
        return {"mae": self.mae, "mae_bc": self.mae_bc, "mae_cc": self.mae_cc,
                "mae_ec": self.mae_ec, "kl": self.kl}


def evaluate_metrics(preds, reals) -> MetricReport:
    """Cohort-level prediction quality: off-diagonal MAE, centrality MAEs,
    and the KL divergence between Gaussian fits of the pooled predicted and
    real edge-weight distributions."""
    from .aligner import kl_gaussian  # local import; aligner owns the KL op

    if len(preds) == 0 or len(preds) != len(reals):
        raise ContractError(f"evaluate_metrics: need matching non-empty lists, "
                            f"got {len(preds)} and {len(reals)}")
    mae_vals, bc_vals, cc_vals, ec_vals = [], [], [], []
    pooled_pred, pooled_real = [], []
    for pred, real in zip(preds, reals):
        p = pred.adjacency if hasattr(pred, "adjacency") else np.asarray(pred, dtype=np.float64)
        r = real.adjacency if hasattr(real, "adjacency") else np.asarray(real, dtype=np.float64)
        if p.shape != r.shape:
            raise ContractError(f"evaluate_metrics: resolution mismatch {p.shape} vs {r.shape}")
        n = p.shape[0]
        off = ~np.eye(n, dtype=bool)
        mae_vals.append(np.abs(p - r)[off].mean())
        bc_vals.append(np.abs(betweenness_centrality(p) - betweenness_centrality(r)).mean())
        cc_vals.append(np.abs(closeness_centrality(p) - closeness_centrality(r)).mean())
        ec_vals.append(np.abs(eigenvector_centrality(p) - eigenvector_centrality(r)).mean())
        pooled_pred.append(_upper_triangle(p))
        pooled_real.append(_upper_triangle(r))
    pq = np.concatenate(pooled_pred)
    pr = np.concatenate(pooled_real)
    kl = kl_gaussian(pq.mean(), pq.var(), pr.mean(), pr.var())
    return MetricReport(
        mae=float(np.mean(mae_vals)),
        mae_bc=float(np.mean(bc_vals)),
        mae_cc=float(np.mean(cc_vals)),
        mae_ec=float(np.mean(ec_vals)),
        kl=float(kl),
    )
