"""Cross-checks between the simulator, the traffic model and the reference math."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .archmodel import HwConfig
from .errors import ConfigError
from .reference import kernel_update, super_backward_delta, super_forward
from .simulator import SimResult, run_super_layer
from .specs import NetworkSpec, SuperLayerSpec, TrainConfig
from .traffic import Phase, StrategySet, TrafficReport, op_count, super_traffic


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Largest elementwise deviation scaled by the reference max magnitude."""
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch {a.shape} vs {b.shape}")
    scale = max(float(np.max(np.abs(b))), 1e-30)
    return float(np.max(np.abs(a.astype(np.float64) - b.astype(np.float64)))) / scale


def random_phase_tensors(
    rng: np.random.Generator,
    layer: SuperLayerSpec,
    prev_layer: SuperLayerSpec | None,
    phase: Phase,
) -> dict:
    """Seeded single-group tensors for one standalone layer run."""
    conv = layer.conv
    ho, wo = layer.conv_out_dims()
    kers = rng.standard_normal((conv.n, conv.m, conv.k, conv.k)).astype(np.float32)
    tensors: dict = {"kers": kers}
    if phase is Phase.FP:
        tensors["x"] = rng.standard_normal((conv.n, layer.input_h, layer.input_w)).astype(
            np.float32
        )
    elif phase is Phase.DP:
        tensors["x"] = rng.standard_normal((conv.m, ho, wo)).astype(np.float32)
        if prev_layer is not None and prev_layer.has_act:
            ph_, pw_ = prev_layer.conv_out_dims()
            tensors["prev_pre_act"] = rng.standard_normal((conv.n, ph_, pw_)).astype(
                np.float32
            )
    else:
        tensors["x"] = rng.standard_normal((conv.n, layer.input_h, layer.input_w)).astype(
            np.float32
        )
        tensors["delta"] = rng.standard_normal((conv.m, ho, wo)).astype(np.float32)
    return tensors


def reference_phase_result(
    layer: SuperLayerSpec,
    prev_layer: SuperLayerSpec | None,
    tensors: dict,
    phase: Phase,
) -> np.ndarray:
    """What the reference math produces for the same tensors."""
    if phase is Phase.FP:
        out, _ = super_forward(tensors["x"], tensors["kers"], layer)
        return out
    if phase is Phase.DP:
        return super_backward_delta(
            tensors["x"],
            tensors["kers"],
            layer.conv,
            prev_layer,
            tensors.get("prev_pre_act"),
        )
    _, grad = kernel_update(
        tensors["kers"], tensors["x"], tensors["delta"], layer.conv, TrainConfig(0.0)
    )
    return grad


@dataclass
class LayerCheck:
    """Outcome of simulating one layer and checking it against the models."""

    index: int
    phase: Phase
    sim_traffic: TrafficReport
    cycles: int
    last_run: SimResult
    model: TrafficReport
    model_match: bool | None = None
    model_mismatch: str = ""
    reference_error: float | None = None


def simulate_layer(
    net: NetworkSpec,
    index: int,
    phase: Phase,
    strategies: StrategySet,
    hw: HwConfig,
    seed: int,
    batch: int = 1,
    compute: bool = True,
    check_model: bool = False,
    check_reference: bool = False,
    trace: bool = False,
) -> LayerCheck:
    """Run one layer for `batch` images (counters merged by summation) and
    optionally assert byte equality with the traffic model and functional
    agreement with the reference math."""
    layer = net.layers[index]
    groups = net.groups[index]
    prev_layer = net.layers[index - 1] if index > 0 else None
    rng = np.random.default_rng(seed)

    in_bytes = out_bytes = ker_bytes = cycles = 0
    last: SimResult | None = None
    reference_error = None
    for _ in range(batch):
        tensors = random_phase_tensors(rng, layer, prev_layer, phase)
        result = run_super_layer(
            tensors["x"] if compute else None,
            tensors["kers"] if compute else None,
            layer,
            hw,
            strategies,
            phase,
            delta=tensors.get("delta") if compute else None,
            prev_layer=prev_layer,
            prev_pre_act=tensors.get("prev_pre_act"),
            groups=groups,
            compute=compute,
            trace=trace,
        )
        in_bytes += result.traffic.input_bytes
        out_bytes += result.traffic.output_bytes
        ker_bytes += result.traffic.kernel_bytes
        cycles += result.cycles
        last = result
        if check_reference and compute:
            expected = reference_phase_result(layer, prev_layer, tensors, phase)
            got = result.grad if phase is Phase.KU else result.outputs
            err = max_relative_error(got, expected)
            reference_error = err if reference_error is None else max(reference_error, err)

    conv_ops, act_ops, pool_ops = op_count(layer, batch, groups)
    sim_traffic = TrafficReport(
        input_bytes=in_bytes,
        output_bytes=out_bytes,
        kernel_bytes=ker_bytes,
        conv_ops=conv_ops,
        act_ops=act_ops if phase is Phase.FP else 0,
        pool_ops=pool_ops if phase is Phase.FP else 0,
    )
    model = super_traffic(index, replace(net, batch=batch), phase, strategies, hw.word_bytes)
    check = LayerCheck(
        index=index,
        phase=phase,
        sim_traffic=sim_traffic,
        cycles=cycles,
        last_run=last,
        model=model,
        reference_error=reference_error,
    )
    if check_model:
        mismatches = []
        for field in ("input_bytes", "output_bytes", "kernel_bytes"):
            got, want = getattr(sim_traffic, field), getattr(model, field)
            if got != want:
                mismatches.append(f"{field}: simulator {got} vs model {want}")
        check.model_match = not mismatches
        check.model_mismatch = "; ".join(mismatches)
    return check
