"""Ground-truth layer math for the forward and backward passes.

These routines define the numerical behaviour every other component is
checked against. They keep a fixed summation order (row-major, input maps
outermost) and preserve the dtype of their inputs: the primary data path
uses 32-bit words, verification oracles run the same code in 64-bit.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GradcheckError, ShapeError
from .specs import (
    ConvSpec,
    PoolSpec,
    SuperLayerSpec,
    TrainConfig,
    check_kernels,
    check_maps,
)


def _strided_windows(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """All k x k input windows, shape (maps, out_h, out_w, k, k)."""
    xpad = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xpad, (k, k), axis=(1, 2))
    return win[:, ::stride, ::stride]


def conv_forward(x: np.ndarray, ker: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """y[j,r,c] = sum_i sum_uv x[i, r*s+u-pad, c*s+v-pad] * ker[i,j,u,v]."""
    check_kernels(ker, spec)
    if x.ndim != 3 or x.shape[0] != spec.n:
        got = x.shape[0] if x.ndim == 3 else None
        raise ShapeError(f"input: maps axis is {got}, expected {spec.n}")
    win = _strided_windows(x, spec.k, spec.stride, spec.pad)
    common = np.result_type(x.dtype, ker.dtype)
    return np.einsum(
        "ircuv,ijuv->jrc", win.astype(common, copy=False), ker.astype(common, copy=False)
    )


def act_forward(x: np.ndarray) -> np.ndarray:
    """Rectifier: elementwise max(0, x)."""
    return np.maximum(x, np.asarray(0, dtype=x.dtype))


def pool_forward(x: np.ndarray, pool: PoolSpec) -> np.ndarray:
    """Average over p x p windows, per map, windows stepping by the pool stride."""
    if x.shape[1] < pool.p or x.shape[2] < pool.p:
        raise ShapeError(
            f"pooling window {pool.p} overruns map extent {x.shape[1]}x{x.shape[2]}"
        )
    win = sliding_window_view(x, (pool.p, pool.p), axis=(1, 2))
    win = win[:, :: pool.stride, :: pool.stride]
    inv = np.asarray(1.0 / (pool.p * pool.p), dtype=x.dtype)
    return win.sum(axis=(3, 4)) * inv


def super_forward(
    x: np.ndarray, ker: np.ndarray, layer: SuperLayerSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Full cascade. Returns (output, pre_activation conv result)."""
    check_maps(x, layer.conv.n, layer.input_h, layer.input_w, "input")
    pre = conv_forward(x, ker, layer.conv)
    out = act_forward(pre) if layer.has_act else pre
    if layer.pool is not None:
        out = pool_forward(out, layer.pool)
    return out, pre


def conv_backward_delta(delta_y: np.ndarray, ker: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Propagate deltas through a stride-1 conv: full correlation with
    180-degree-rotated kernels, input/output map roles swapped, and an
    effective zero padding of k-1-pad. Exact linear transpose of conv_forward.
    """
    if spec.stride != 1:
        raise ShapeError(
            f"delta propagation supports stride 1 only, got stride {spec.stride}"
        )
    if spec.pad > spec.k - 1:
        raise ShapeError(f"pad {spec.pad} exceeds k-1={spec.k - 1}, transpose undefined")
    check_kernels(ker, spec)
    rotated = ker[:, :, ::-1, ::-1]
    swapped = np.ascontiguousarray(np.transpose(rotated, (1, 0, 2, 3)))
    tspec = ConvSpec(
        n=spec.m, m=spec.n, k=spec.k, stride=1, pad=spec.k - 1 - spec.pad
    )
    return conv_forward(delta_y, swapped, tspec)


def act_backward(delta: np.ndarray, pre_act: np.ndarray) -> np.ndarray:
    """Mask deltas by the rectifier derivative; zero where pre_act <= 0."""
    if delta.shape != pre_act.shape:
        raise ShapeError(
            f"delta shape {delta.shape} does not match pre-activation {pre_act.shape}"
        )
    return delta * (pre_act > 0).astype(delta.dtype)


def pool_backward(delta: np.ndarray, pool: PoolSpec, in_h: int, in_w: int) -> np.ndarray:
    """Exact transpose of pool_forward: each input position accumulates
    delta/p^2 over every window containing it (overlapping windows sum).
    """
    ph, pw = pool.out_dims(in_h, in_w)
    if delta.shape[1:] != (ph, pw):
        raise ShapeError(
            f"delta dims {delta.shape[1]}x{delta.shape[2]} do not match "
            f"pooled dims {ph}x{pw} for input {in_h}x{in_w}"
        )
    inv = np.asarray(1.0 / (pool.p * pool.p), dtype=delta.dtype)
    out = np.zeros((delta.shape[0], in_h, in_w), dtype=delta.dtype)
    s, p = pool.stride, pool.p
    for r in range(ph):
        for c in range(pw):
            out[:, r * s : r * s + p, c * s : c * s + p] += (
                delta[:, r : r + 1, c : c + 1] * inv
            )
    return out


def super_backward_delta(
    delta_next: np.ndarray,
    ker_next: np.ndarray,
    conv_next: ConvSpec,
    layer: SuperLayerSpec,
    pre_act: np.ndarray,
) -> np.ndarray:
    """Delta at this layer's conv output from the delta at the next conv's
    output: next conv transposed, then this layer's pool transpose, then the
    activation mask. Stages absent from the layer are skipped.
    """
    d = conv_backward_delta(delta_next, ker_next, conv_next)
    h, w = layer.conv_out_dims()
    if layer.pool is not None:
        d = pool_backward(d, layer.pool, h, w)
    if d.shape[1:] != (h, w):
        raise ShapeError(
            f"propagated delta dims {d.shape[1]}x{d.shape[2]} do not match "
            f"conv output dims {h}x{w}"
        )
    if layer.has_act:
        check_maps(pre_act, d.shape[0], h, w, "pre-activation")
        d = act_backward(d, pre_act)
    return d


def kernel_update(
    ker: np.ndarray,
    x: np.ndarray,
    delta: np.ndarray,
    spec: ConvSpec,
    train: TrainConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient-descent step on a kernel bank.

    grad[i,j,u,v] = sum_rc delta[j,r,c] * x[i, r*s+u-pad, c*s+v-pad]
    Returns (updated kernels, gradient).
    """
    check_kernels(ker, spec)
    ho, wo = spec.out_dims(x.shape[1], x.shape[2])
    check_maps(delta, spec.m, ho, wo, "delta")
    if x.shape[0] != spec.n:
        raise ShapeError(f"input: maps axis is {x.shape[0]}, expected {spec.n}")
    win = _strided_windows(x, spec.k, spec.stride, spec.pad)
    common = np.result_type(ker.dtype, x.dtype, delta.dtype)
    grad = np.einsum(
        "jrc,ircuv->ijuv",
        delta.astype(common, copy=False),
        win.astype(common, copy=False),
    )
    updated = ker.astype(common, copy=False) - np.asarray(train.alpha, common) * grad
    return updated, grad


def finite_diff_gradient(
    loss: Callable[[np.ndarray], float], ker: np.ndarray, epsilon: float
) -> np.ndarray:
    """Central-difference gradient of a scalar loss w.r.t. every kernel weight,
    evaluated in 64-bit arithmetic."""
    if epsilon <= 0:
        raise GradcheckError(f"epsilon must be positive, got {epsilon}")
    base = ker.astype(np.float64)
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        probe = base.copy()
        probe[idx] = base[idx] + epsilon
        j_plus = float(loss(probe))
        probe[idx] = base[idx] - epsilon
        j_minus = float(loss(probe))
        if not (np.isfinite(j_plus) and np.isfinite(j_minus)):
            raise GradcheckError(f"non-finite loss while probing weight {idx}")
        grad[idx] = (j_plus - j_minus) / (2.0 * epsilon)
    return grad
