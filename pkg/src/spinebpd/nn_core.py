"""Dense-tensor layers and the landmark-regression CNN, with hand-derived backward passes.

Tensors are plain ``numpy.float64`` arrays in NCHW layout.  Every layer is a pair of
functions: a forward returning ``(output, cache)`` and a backward consuming the upstream
gradient plus that cache.  Nothing here mutates its inputs; batch-norm running statistics
are returned as new arrays for the caller to merge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, NumericError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
COL_BUDGET = 1 << 25  # patch-matrix entries above which conv2d switches to shift-and-accumulate


# ---------------------------------------------------------------------------
# layers


def _im2col3x3(x_cn: np.ndarray) -> np.ndarray:
    """(C, N, H, W) -> (C*9, N*H*W) patch matrix for a padded 3x3 stride-1 convolution.

    Channel-major layout keeps the innermost copy contiguous along image rows.
    """
    c, n, h, w = x_cn.shape
    xp = np.pad(x_cn, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (C, N, H, W, 3, 3)
    return win.transpose(0, 4, 5, 1, 2, 3).reshape(c * 9, n * h * w)


def _conv_cols(cols: np.ndarray, weight: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    n, h, w = shape
    o = weight.shape[0]
    out = weight.reshape(o, -1) @ cols
    return np.ascontiguousarray(out.reshape(o, n, h, w).transpose(1, 0, 2, 3))


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved).

    Returns ``(out, cache)``; ``out`` has shape ``(N, O, H, W)``.
    """
    if x.ndim != 4:
        raise ContractError(f"conv2d input must be NCHW, got {x.ndim} dims")
    if weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise ContractError(f"conv2d kernel must be O x I x 3 x 3, got {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ContractError(
            f"conv2d channel dimension mismatch: input C={x.shape[1]}, kernel I={weight.shape[1]}"
        )
    if bias.shape != (weight.shape[0],):
        raise ContractError(f"conv2d bias dimension mismatch: {bias.shape} vs O={weight.shape[0]}")
    n, c, h, w = x.shape
    if c * 9 * n * h * w > COL_BUDGET:
        out = _conv_shifted(x, weight)
        out += bias[None, :, None, None]
        return out, (None, x, weight, x.shape)
    cols = _im2col3x3(x.transpose(1, 0, 2, 3))
    out = _conv_cols(cols, weight, (n, h, w))
    out += bias[None, :, None, None]
    return out, (cols, None, weight, x.shape)


def _conv_shifted(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Same convolution as nine shifted matrix products, without a patch matrix."""
    n, _, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((n, weight.shape[0], h, w))
    for ky in range(3):
        for kx in range(3):
            out += np.einsum("oc,nchw->nohw", weight[:, :, ky, kx], xp[:, :, ky:ky + h, kx:kx + w], optimize=True)
    return out


def conv2d_backward(dout: np.ndarray, cache, need_dx: bool = True):
    """Returns ``(dx, dweight, dbias)``; ``dx`` is None when ``need_dx`` is False."""
    cols, x, weight, xshape = cache
    n, c, h, w = xshape
    o = weight.shape[0]
    dout_cn = dout.transpose(1, 0, 2, 3)
    dflat = dout_cn.reshape(o, -1)
    dbias = dflat.sum(axis=1)
    # input gradient is a same-padded convolution with the flipped, transposed kernel
    flipped = np.ascontiguousarray(weight.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    dx = None
    if cols is None:
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        dweight = np.empty(weight.shape)
        for ky in range(3):
            for kx in range(3):
                dweight[:, :, ky, kx] = np.einsum("nohw,nchw->oc", dout, xp[:, :, ky:ky + h, kx:kx + w], optimize=True)
        if need_dx:
            dx = _conv_shifted(dout, flipped)
        return dx, dweight, dbias
    dweight = (dflat @ cols.T).reshape(weight.shape)
    if need_dx:
        dx = _conv_cols(_im2col3x3(dout_cn), flipped, (n, h, w))
    return dx, dweight, dbias


def maxpool2(x: np.ndarray):
    """2x2 max pooling, stride 2. Ties go to the first element in row-major scan order."""
    if x.ndim != 4:
        raise ContractError(f"maxpool2 input must be NCHW, got {x.ndim} dims")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ContractError(f"maxpool2 needs even spatial dims, got H={h}, W={w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2_backward(dout: np.ndarray, cache) -> np.ndarray:
    idx, (n, c, h, w) = cache
    dwin = np.zeros((n, c, h // 2, w // 2, 4))
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    return dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


def batchnorm2d(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str = "train",
    eps: float = BN_EPS,
    momentum: float = BN_MOMENTUM,
):
    """Per-channel batch normalization.

    Train mode normalizes with the biased batch variance (divisor N*H*W) and returns
    running statistics updated as ``momentum * old + (1 - momentum) * batch``.  Infer
    mode uses the running statistics and returns them unchanged.

    Returns ``(out, cache, (new_running_mean, new_running_var))``.
    """
    if x.ndim != 4:
        raise ContractError(f"batchnorm2d input must be NCHW, got {x.ndim} dims")
    c = x.shape[1]
    for name, arr in (("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)):
        if arr.shape != (c,):
            raise ContractError(f"batchnorm2d {name} has shape {arr.shape}, expected ({c},)")
    if mode == "train":
        count = x.shape[0] * x.shape[2] * x.shape[3]
        if count < 2:
            raise ContractError(f"batchnorm2d train mode needs N*H*W >= 2, got {count}")
        mean = x.mean(axis=(0, 2, 3))
        centered = x - mean[None, :, None, None]
        var = (centered * centered).mean(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv_std[None, :, None, None]
        new_rm = momentum * running_mean + (1.0 - momentum) * mean
        new_rv = momentum * running_var + (1.0 - momentum) * var
    elif mode == "infer":
        inv_std = 1.0 / np.sqrt(running_var + eps)
        xhat = (x - running_mean[None, :, None, None]) * inv_std[None, :, None, None]
        new_rm, new_rv = running_mean, running_var
    else:
        raise ContractError(f"unknown mode {mode!r}")
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return out, (mode, xhat, inv_std, gamma), (new_rm, new_rv)


def batchnorm2d_backward(dout: np.ndarray, cache):
    """Returns ``(dx, dgamma, dbeta)``."""
    mode, xhat, inv_std, gamma = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    if mode == "infer":
        return dxhat * inv_std[None, :, None, None], dgamma, dbeta
    count = dout.shape[0] * dout.shape[2] * dout.shape[3]
    mean_dxhat = dxhat.sum(axis=(0, 2, 3)) / count
    mean_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3)) / count
    dx = inv_std[None, :, None, None] * (
        dxhat - mean_dxhat[None, :, None, None] - xhat * mean_dxhat_xhat[None, :, None, None]
    )
    return dx, dgamma, dbeta


def dropout(x: np.ndarray, rate: float, mode: str = "train", rng: np.random.Generator | None = None):
    """Inverted dropout. Returns ``(out, mask)``; ``mask`` already carries the 1/(1-rate) scale."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "infer" or rate == 0.0:
        return x, None
    if mode != "train":
        raise ContractError(f"unknown mode {mode!r}")
    if rng is None:
        raise ContractError("train-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate) * (1.0 / (1.0 - rate))
    return x * mask, mask


def dropout_backward(dout: np.ndarray, mask) -> np.ndarray:
    return dout if mask is None else dout * mask


def leaky_relu(x: np.ndarray, slope: float = 0.01):
    return np.where(x > 0, x, slope * x), (x > 0, slope)


def leaky_relu_backward(dout: np.ndarray, cache) -> np.ndarray:
    positive, slope = cache
    # derivative at exactly 0 is taken as the slope
    return np.where(positive, dout, slope * dout)


def dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Affine map ``x @ weight + bias`` with weight stored F x G."""
    if x.ndim != 2 or weight.ndim != 2:
        raise ContractError(f"dense expects 2-D input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise ContractError(f"dense inner dimension mismatch: input F={x.shape[1]}, weight F={weight.shape[0]}")
    if bias.shape != (weight.shape[1],):
        raise ContractError(f"dense bias dimension mismatch: {bias.shape} vs G={weight.shape[1]}")
    return x @ weight + bias, (x, weight)


def dense_backward(dout: np.ndarray, cache):
    x, weight = cache
    return dout @ weight.T, x.T @ dout, dout.sum(axis=0)


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class ModelConfig:
    input_height: int = 1024
    input_width: int = 512
    conv_channels: tuple[int, ...] = (16, 32, 64, 128, 256)
    fc_sizes: tuple[int, ...] = (512, 512, 144)
    n_landmarks: int = 72
    dropout_rate: float = 0.25
    leaky_slope: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "fc_sizes", tuple(int(s) for s in self.fc_sizes))
        if len(self.conv_channels) != 5:
            raise ContractError(f"conv_channels needs exactly 5 entries, got {len(self.conv_channels)}")
        if len(self.fc_sizes) != 3 or self.fc_sizes[-1] != 2 * self.n_landmarks:
            raise ContractError(f"fc_sizes must be 3 sizes ending in 2*n_landmarks={2 * self.n_landmarks}")
        if self.input_height % 32 or self.input_width % 32 or self.input_height <= 0 or self.input_width <= 0:
            raise ContractError(
                f"input dims must be positive multiples of 32, got {self.input_height}x{self.input_width}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def flat_features(self) -> int:
        return self.conv_channels[-1] * (self.input_height // 32) * (self.input_width // 32)

    def to_dict(self) -> dict:
        return {
            "input_height": self.input_height,
            "input_width": self.input_width,
            "conv_channels": list(self.conv_channels),
            "fc_sizes": list(self.fc_sizes),
            "n_landmarks": self.n_landmarks,
            "dropout_rate": self.dropout_rate,
            "leaky_slope": self.leaky_slope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter and buffer name mapped to its shape, in forward execution order."""
    shapes: dict[str, tuple[int, ...]] = {}
    c_in = 1
    for k, c in enumerate(config.conv_channels, start=1):
        shapes[f"block{k}.conv1.weight"] = (c, c_in, 3, 3)
        shapes[f"block{k}.conv1.bias"] = (c,)
        shapes[f"block{k}.conv2.weight"] = (c, c, 3, 3)
        shapes[f"block{k}.conv2.bias"] = (c,)
        for name in ("gamma", "beta", "running_mean", "running_var"):
            shapes[f"block{k}.bn.{name}"] = (c,)
        c_in = c
    f_in = config.flat_features
    for j, g in enumerate(config.fc_sizes, start=1):
        shapes[f"fc{j}.weight"] = (f_in, g)
        shapes[f"fc{j}.bias"] = (g,)
        f_in = g
    return shapes


def is_buffer(name: str) -> bool:
    """Running statistics are state, not trainable parameters."""
    return name.endswith(".running_mean") or name.endswith(".running_var")


def trainable_names(config: ModelConfig) -> list[str]:
    return [k for k in param_shapes(config) if not is_buffer(k)]


def init_params(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """He initialization scaled for leaky ReLU: std = sqrt(2 / ((1 + slope^2) * fan_in))."""
    rng = np.random.default_rng(seed)
    gain = 2.0 / (1.0 + config.leaky_slope**2)
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            params[name] = rng.normal(0.0, np.sqrt(gain / fan_in), size=shape)
        elif name.endswith(".gamma") or name.endswith(".running_var"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return params


def check_params(config: ModelConfig, params: dict[str, np.ndarray]) -> None:
    for name, shape in param_shapes(config).items():
        if name not in params:
            raise ContractError(f"missing parameter {name}")
        if params[name].shape != shape:
            raise ContractError(f"parameter {name} has shape {params[name].shape}, expected {shape}")


@dataclass
class ForwardCache:
    mode: str
    config: ModelConfig
    layers: list = field(default_factory=list)  # (layer name, kind, cache) in execution order
    params: dict = field(default_factory=dict)  # references to the arrays used
    running: dict = field(default_factory=dict)  # updated batch-norm buffers
    conv_shape: tuple = ()


def _check_finite(arr: np.ndarray, layer: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite activation after layer {layer}")


def model_forward(
    config: ModelConfig,
    params: dict[str, np.ndarray],
    batch: np.ndarray,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
):
    """Run the five conv blocks and three FC layers.

    Each block is conv -> leaky ReLU -> conv -> leaky ReLU -> maxpool -> batch norm ->
    dropout.  Returns ``(predictions, cache)`` with predictions of shape ``(N, 2n)``.
    Updated batch-norm running statistics are in ``cache.running``.
    """
    if mode not in ("train", "infer"):
        raise ContractError(f"unknown mode {mode!r}")
    if batch.ndim != 4 or batch.shape[1] != 1:
        raise ContractError(f"batch must be N x 1 x H x W, got {batch.shape}")
    if batch.shape[2:] != (config.input_height, config.input_width):
        raise ContractError(
            f"batch spatial dims {batch.shape[2:]} differ from config "
            f"{(config.input_height, config.input_width)}"
        )
    check_params(config, params)
    cache = ForwardCache(mode=mode, config=config)
    cache.params = {k: params[k] for k in trainable_names(config)}
    slope = config.leaky_slope
    h = np.asarray(batch, dtype=np.float64)
    for k in range(1, 6):
        p = f"block{k}"
        for j in (1, 2):
            name = f"{p}.conv{j}"
            h, c = conv2d(h, params[f"{name}.weight"], params[f"{name}.bias"])
            cache.layers.append((name, "conv", c))
            h, c = leaky_relu(h, slope)
            cache.layers.append((f"{name}.act", "act", c))
            _check_finite(h, name)
        h, c = maxpool2(h)
        cache.layers.append((f"{p}.pool", "pool", c))
        h, c, (rm, rv) = batchnorm2d(
            h,
            params[f"{p}.bn.gamma"],
            params[f"{p}.bn.beta"],
            params[f"{p}.bn.running_mean"],
            params[f"{p}.bn.running_var"],
            mode=mode,
        )
        cache.layers.append((f"{p}.bn", "bn", c))
        cache.running[f"{p}.bn.running_mean"] = rm
        cache.running[f"{p}.bn.running_var"] = rv
        _check_finite(h, f"{p}.bn")
        h, mask = dropout(h, config.dropout_rate, mode, rng)
        cache.layers.append((f"{p}.dropout", "dropout", mask))
    cache.conv_shape = h.shape
    h = h.reshape(h.shape[0], -1)
    for j in (1, 2, 3):
        name = f"fc{j}"
        h, c = dense(h, params[f"{name}.weight"], params[f"{name}.bias"])
        cache.layers.append((name, "dense", c))
        if j < 3:
            h, c = leaky_relu(h, slope)
            cache.layers.append((f"{name}.act", "act", c))
        _check_finite(h, name)
    return h, cache


def model_backward(cache: ForwardCache, params: dict[str, np.ndarray], d_predictions: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of every trainable parameter given d(loss)/d(predictions)."""
    if not isinstance(cache, ForwardCache) or not cache.layers:
        raise ContractError("model_backward needs the cache of a completed forward pass")
    for name, arr in cache.params.items():
        if params.get(name) is not arr:
            raise ContractError(f"stale cache: parameter {name} changed since the forward pass")
    expected = (cache.conv_shape[0], cache.config.fc_sizes[-1])
    if d_predictions.shape != expected:
        raise ContractError(f"d_predictions has shape {d_predictions.shape}, expected {expected}")
    grads: dict[str, np.ndarray] = {}
    g = np.asarray(d_predictions, dtype=np.float64)
    first_conv = cache.layers[0][0]
    for name, kind, c in reversed(cache.layers):
        if kind == "dense":
            g, grads[f"{name}.weight"], grads[f"{name}.bias"] = dense_backward(g, c)
            if name == "fc1":
                g = g.reshape(cache.conv_shape)
        elif kind == "act":
            g = leaky_relu_backward(g, c)
        elif kind == "dropout":
            g = dropout_backward(g, c)
        elif kind == "bn":
            g, grads[f"{name}.gamma"], grads[f"{name}.beta"] = batchnorm2d_backward(g, c)
        elif kind == "pool":
            g = maxpool2_backward(g, c)
        elif kind == "conv":
            g, grads[f"{name}.weight"], grads[f"{name}.bias"] = conv2d_backward(g, c, need_dx=name != first_conv)
    return {k: grads[k] for k in trainable_names(cache.config)}


def merge_running_stats(params: dict[str, np.ndarray], cache: ForwardCache) -> dict[str, np.ndarray]:
    """New parameter map with the batch-norm buffers from a train-mode forward."""
    out = dict(params)
    out.update(cache.running)
    return out
