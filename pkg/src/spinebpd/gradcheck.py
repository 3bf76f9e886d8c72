"""Central finite-difference verification of every analytic gradient in the package."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import nn_core as nn
from .loss import build_bipartite_graph, bpd_loss, edge_lengths, mse_loss, total_loss

FD_STEP = 1e-5
LAYER_TOL = 1e-5
MODEL_TOL = 1e-4
TINY_CONFIG = nn.ModelConfig(input_height=32, input_width=32, conv_channels=(2, 2, 2, 2, 2),
                             fc_sizes=(8, 8, 8), n_landmarks=4, dropout_rate=0.0)


@dataclass
class CheckResult:
    name: str
    rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.rel_error < self.tol)


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error ||a - n|| / max(||a||, ||n||)."""
    a, n = np.ravel(analytic), np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def numeric_gradient(f: Callable[[], float], x: np.ndarray, h: float = FD_STEP, indices=None) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. ``x``, perturbing ``x`` in place.

    With ``indices`` (flat positions) only those entries are returned.
    """
    flat = x.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = []
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out.append((fp - fm) / (2 * h))
    out = np.array(out)
    return out.reshape(x.shape) if indices is None else out


def _check_layer(name, forward, backward, inputs: dict[str, np.ndarray], rng, corrupt):
    """Compare a layer's backward against finite differences of sum(forward * R)."""
    out0 = forward()
    weights = rng.uniform(-1, 1, out0.shape)
    grads = backward(weights)
    results = []
    for key, arr in inputs.items():
        num = numeric_gradient(lambda: float(np.sum(forward() * weights)), arr)
        ana = grads[key] * (1.1 if name in corrupt else 1.0)
        results.append((key, rel_error(ana, num)))
    worst = max(results, key=lambda kv: kv[1])
    return worst[1]


def run_gradcheck(seed: int = 0, corrupt: frozenset[str] = frozenset(), n_model_params: int = 50) -> list[CheckResult]:
    """Every layer, both losses, the combined loss and the tiny full model.

    ``corrupt`` names checks whose analytic gradient is deliberately scaled, to
    confirm the harness catches a wrong gradient.
    """
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-1, 1, shape)  # noqa: E731
    results: list[CheckResult] = []

    x, w, b = u(2, 3, 5, 6), u(4, 3, 3, 3), u(4)
    fwd = lambda: nn.conv2d(x, w, b)[0]  # noqa: E731

    def bwd(g):
        dx, dw, db = nn.conv2d_backward(g, nn.conv2d(x, w, b)[1])
        return {"x": dx, "w": dw, "b": db}

    results.append(CheckResult("conv2d", _check_layer("conv2d", fwd, bwd, {"x": x, "w": w, "b": b}, rng, corrupt), 1e-6))

    xp = rng.permutation(96).reshape(2, 3, 4, 4) / 96.0  # distinct values keep each window's max unique
    results.append(CheckResult("maxpool2", _check_layer(
        "maxpool2", lambda: nn.maxpool2(xp)[0],
        lambda g: {"x": nn.maxpool2_backward(g, nn.maxpool2(xp)[1])}, {"x": xp}, rng, corrupt), 1e-6))

    xb, gamma, beta = u(3, 4, 3, 2), 1 + 0.5 * u(4), u(4)
    rm, rv = 0.1 * u(4), 1 + 0.5 * rng.random(4)
    for mode in ("train", "infer"):
        def bn_fwd(mode=mode):
            return nn.batchnorm2d(xb, gamma, beta, rm, rv, mode)[0]

        def bn_bwd(g, mode=mode):
            dx, dg, dbt = nn.batchnorm2d_backward(g, nn.batchnorm2d(xb, gamma, beta, rm, rv, mode)[1])
            return {"x": dx, "gamma": dg, "beta": dbt}

        name = f"batchnorm2d[{mode}]"
        results.append(CheckResult(name, _check_layer(
            name, bn_fwd, bn_bwd, {"x": xb, "gamma": gamma, "beta": beta}, rng, corrupt), LAYER_TOL))

    xd = u(3, 4, 2, 2)
    seed_d = int(rng.integers(1 << 30))
    drop = lambda: nn.dropout(xd, 0.25, "train", np.random.default_rng(seed_d))  # noqa: E731
    results.append(CheckResult("dropout", _check_layer(
        "dropout", lambda: drop()[0], lambda g: {"x": nn.dropout_backward(g, drop()[1])}, {"x": xd}, rng, corrupt),
        LAYER_TOL))

    xl = u(4, 7)
    xl[np.abs(xl) < 0.1] += 0.2  # keep clear of the kink
    results.append(CheckResult("leaky_relu", _check_layer(
        "leaky_relu", lambda: nn.leaky_relu(xl, 0.01)[0],
        lambda g: {"x": nn.leaky_relu_backward(g, nn.leaky_relu(xl, 0.01)[1])}, {"x": xl}, rng, corrupt), 1e-8))

    xf, wf, bf = u(3, 5), u(5, 4), u(4)

    def dense_bwd(g):
        dx, dw, db = nn.dense_backward(g, nn.dense(xf, wf, bf)[1])
        return {"x": dx, "w": dw, "b": db}

    results.append(CheckResult("dense", _check_layer(
        "dense", lambda: nn.dense(xf, wf, bf)[0], dense_bwd, {"x": xf, "w": wf, "b": bf}, rng, corrupt), 1e-8))

    graph = build_bipartite_graph(3)
    gt = rng.random((2, 24))
    pred = gt + 0.05 * u(2, 24)
    while np.abs(edge_lengths(pred.reshape(2, 12, 2), graph) - edge_lengths(gt.reshape(2, 12, 2), graph)).min() < 1e-3:
        pred = gt + 0.05 * u(2, 24)  # stay clear of the |.| kink in the bipartite term
    for name, fn, tol in (
        ("mse_loss", lambda: mse_loss(pred, gt), 1e-8),
        ("bpd_loss", lambda: bpd_loss(pred, gt, graph), 1e-6),
        ("total_loss", lambda: total_loss(pred, gt, graph, 0.01)[:2], LAYER_TOL),
    ):
        ana = fn()[1] * (1.1 if name in corrupt else 1.0)
        num = numeric_gradient(lambda: fn()[0], pred)
        results.append(CheckResult(name, rel_error(ana, num), tol))

    results.append(_check_model(rng, corrupt, n_model_params))
    return results


def _check_model(rng, corrupt, n_params: int) -> CheckResult:
    cfg = TINY_CONFIG
    params = nn.init_params(cfg, int(rng.integers(1 << 30)))
    for k in params:
        if k.endswith(".bias") or k.endswith(".beta"):
            params[k] = 0.1 * rng.uniform(-1, 1, params[k].shape)
    batch = rng.random((3, 1, cfg.input_height, cfg.input_width))
    weights = rng.uniform(-1, 1, (3, cfg.fc_sizes[-1]))

    def f():
        return float(np.sum(nn.model_forward(cfg, params, batch, "train")[0] * weights))

    pred, cache = nn.model_forward(cfg, params, batch, "train")
    grads = nn.model_backward(cache, params, weights)
    names = nn.trainable_names(cfg)
    sizes = np.array([params[n].size for n in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    ana, num, skipped = [], [], 0
    for flat in rng.permutation(sizes.sum()):
        if len(ana) == n_params:
            break
        j = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, i = names[j], int(flat - offsets[j])
        if not _smooth_at(cfg, params, batch, params[name], i):
            skipped += 1
            continue
        num.append(numeric_gradient(f, params[name], indices=[i])[0])
        ana.append(grads[name].reshape(-1)[i])
    ana = np.array(ana) * (1.1 if "model" in corrupt else 1.0)
    return CheckResult(f"model[{len(ana)} params, {skipped} at kinks]", rel_error(ana, np.array(num)), MODEL_TOL)


def _activation_pattern(cache: nn.ForwardCache) -> bytes:
    """Signs of every leaky-ReLU input and every max-pool argmax of one forward pass."""
    parts = []
    for _, kind, c in cache.layers:
        if kind == "act":
            parts.append(np.packbits(c[0]).tobytes())
        elif kind == "pool":
            parts.append(c[0].astype(np.uint8).tobytes())
    return b"".join(parts)


def _smooth_at(cfg, params, batch, x: np.ndarray, i: int, h: float = FD_STEP) -> bool:
    """True when perturbing x[i] by +-h crosses no ReLU or max-pool kink."""
    flat = x.reshape(-1)
    old = flat[i]
    base = _activation_pattern(nn.model_forward(cfg, params, batch, "train")[1])
    same = True
    for shifted in (old + h, old - h):
        flat[i] = shifted
        same &= _activation_pattern(nn.model_forward(cfg, params, batch, "train")[1]) == base
    flat[i] = old
    return same


def format_report(results: list[CheckResult], elapsed: float | None = None) -> str:
    lines = [f"{'check':<32}{'max rel err':>14}{'tol':>10}  status"]
    for r in results:
        lines.append(f"{r.name:<32}{r.rel_error:>14.3e}{r.tol:>10.0e}  {'ok' if r.passed else 'FAIL'}")
    if elapsed is not None:
        lines.append(f"elapsed {elapsed:.2f} s")
    return "\n".join(lines)


def main_report(seed: int = 0, corrupt=frozenset()) -> tuple[bool, str]:
    t0 = time.perf_counter()
    results = run_gradcheck(seed, frozenset(corrupt))
    ok = all(r.passed for r in results)
    return ok, format_report(results, time.perf_counter() - t0)
