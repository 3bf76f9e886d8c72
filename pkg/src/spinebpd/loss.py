"""Pointwise and shape-aware landmark losses with gradients w.r.t. the predictions.

Landmarks are indexed ``4 * vertebra + corner`` with corners ordered top-left,
top-right, bottom-left, bottom-right.  Batches may be given as ``(m, 2n)`` flattened
``x, y`` pairs or as ``(m, n, 2)``; gradients come back in the shape of ``pred``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError

DEFAULT_ALPHA = 0.01
TL, TR, BL, BR = range(4)


@dataclass(frozen=True)
class BipartiteGraph:
    set_a: tuple[int, ...]
    set_b: tuple[int, ...]
    edges: np.ndarray  # (|A|*|B|, 2) index pairs, a-major

    @property
    def n_landmarks(self) -> int:
        return len(self.set_a) + len(self.set_b)

    def incidence(self) -> np.ndarray:
        """(E, n) matrix with +1 at each edge's A endpoint and -1 at its B endpoint."""
        s = np.zeros((len(self.edges), self.n_landmarks))
        rows = np.arange(len(self.edges))
        s[rows, self.edges[:, 0]] = 1.0
        s[rows, self.edges[:, 1]] = -1.0
        return s


def build_bipartite_graph(n_vertebrae: int) -> BipartiteGraph:
    """Left corners (TL, BL) of every vertebra form A, right corners (TR, BR) form B."""
    if n_vertebrae < 1:
        raise ContractError(f"need at least one vertebra, got {n_vertebrae}")
    set_a = tuple(4 * v + c for v in range(n_vertebrae) for c in (TL, BL))
    set_b = tuple(4 * v + c for v in range(n_vertebrae) for c in (TR, BR))
    set_a, set_b = tuple(sorted(set_a)), tuple(sorted(set_b))
    edges = np.array([(a, b) for a in set_a for b in set_b], dtype=np.int64)
    return BipartiteGraph(set_a, set_b, edges)


def _as_points(arr, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[1] % 2:
            raise ContractError(f"{name} has odd coordinate count {arr.shape[1]}")
        return arr.reshape(arr.shape[0], -1, 2)
    if arr.ndim == 3 and arr.shape[2] == 2:
        return arr
    raise ContractError(f"{name} must be (m, 2n) or (m, n, 2), got {arr.shape}")


def _check_pair(pred, gt):
    p, g = _as_points(pred, "pred"), _as_points(gt, "gt")
    if p.shape != g.shape:
        raise ContractError(f"pred shape {p.shape} does not match gt shape {g.shape}")
    if p.shape[0] < 1:
        raise ContractError("empty batch")
    return p, g


def mse_loss(pred, gt) -> tuple[float, np.ndarray]:
    """Mean of squared residuals over the batch and all 2n coordinates."""
    p, g = _check_pair(pred, gt)
    r = p - g
    count = r.size
    loss = float(np.sum(r * r) / count)
    grad = (2.0 / count) * r
    return loss, grad.reshape(np.shape(pred))


def edge_lengths(points: np.ndarray, graph: BipartiteGraph) -> np.ndarray:
    """(m, n, 2) points -> (m, E) Euclidean lengths of every bipartite edge."""
    diff = points[:, graph.edges[:, 0]] - points[:, graph.edges[:, 1]]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def bpd_loss(pred, gt, graph: BipartiteGraph, eps: float = 1e-8, per_edge_mean: bool = False) -> tuple[float, np.ndarray]:
    """Bipartite distance: batch mean of sum_e |d_e(gt) - d_e(pred)|.

    The subgradient at ``d_e(gt) == d_e(pred)`` is zero and the predicted edge length
    in the gradient denominator is clamped below at ``eps``.
    """
    p, g = _check_pair(pred, gt)
    n = p.shape[1]
    if graph.n_landmarks != n or graph.edges.size and (graph.edges.min() < 0 or graph.edges.max() >= n):
        raise ContractError(f"graph indices are not valid for {n} landmarks")
    m = p.shape[0]
    scale = 1.0 / m
    if per_edge_mean:
        scale /= len(graph.edges)
    d_gt = edge_lengths(g, graph)
    diff = p[:, graph.edges[:, 0]] - p[:, graph.edges[:, 1]]  # (m, E, 2)
    d_pred = np.sqrt(np.sum(diff * diff, axis=-1))
    resid = d_gt - d_pred
    loss = float(scale * np.sum(np.abs(resid)))
    coef = -np.sign(resid) / np.maximum(d_pred, eps) * scale
    edge_grad = coef[..., None] * diff  # gradient w.r.t. the A endpoint; B gets the negative
    grad = np.einsum("en,mec->mnc", graph.incidence(), edge_grad)
    return loss, grad.reshape(np.shape(pred))


class LossTerms(NamedTuple):
    value: float
    grad: np.ndarray
    mse: float
    bpd: float


def total_loss(pred, gt, graph: BipartiteGraph, alpha: float = DEFAULT_ALPHA) -> LossTerms:
    """MSE + alpha * BPD together with the matching gradient."""
    if alpha < 0:
        raise ContractError(f"alpha must be non-negative, got {alpha}")
    mse, g_mse = mse_loss(pred, gt)
    bpd, g_bpd = bpd_loss(pred, gt, graph)
    return LossTerms(mse + alpha * bpd, g_mse + alpha * g_bpd, mse, bpd)
