"""Command-line drivers: analyze, simulate, compare, gradcheck, roofline.

Exit status: 0 on success / all checks passed, 1 on a failed check,
2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import presets
from .archmodel import HwConfig, roofline_attainable
from .compare import comparison_rows
from .errors import ConfigError, GradcheckError, ShapeError
from .reference import (
    act_backward,
    finite_diff_gradient,
    kernel_update,
    pool_backward,
    super_backward_delta,
    super_forward,
)
from .reporting import render
from .specs import NetworkSpec, TrainConfig, network_from_dict
from .traffic import Phase, StrategySet, network_summary, super_traffic
from .verify import simulate_layer


@dataclass(frozen=True)
class RunManifest:
    """Everything one command invocation resolves to."""

    network: NetworkSpec
    hw: HwConfig
    strategies: StrategySet
    phase: Phase
    batch: int | None
    seed: int
    fmt: str
    out: str | None


def load_network(source: str) -> NetworkSpec:
    if source in presets.NETWORK_PRESETS:
        return presets.network_preset(source)
    with open(source, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return network_from_dict(doc)


def load_hw(source: str) -> HwConfig:
    if source in presets.HW_PRESETS:
        return presets.hw_preset(source)
    with open(source, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    known = {f for f in HwConfig.__dataclass_fields__}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown hardware keys: {', '.join(sorted(unknown))}")
    missing = known - set(doc)
    if missing:
        raise ConfigError(f"missing hardware keys: {', '.join(sorted(missing))}")
    return HwConfig(**doc)


def parse_configs(net_source: str, hw_source: str) -> tuple[NetworkSpec, HwConfig]:
    """Resolve network and hardware descriptions from presets or JSON files."""
    return load_network(net_source), load_hw(hw_source)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _manifest(args) -> RunManifest:
    net, hw = parse_configs(args.net, args.hw)
    return RunManifest(
        network=net,
        hw=hw,
        strategies=StrategySet.parse(args.strategies),
        phase=Phase(args.phase),
        batch=args.batch,
        seed=args.seed,
        fmt=args.format,
        out=args.out,
    )


def cmd_analyze(manifest: RunManifest) -> int:
    net = manifest.network
    if manifest.batch is not None:
        net = replace(net, batch=manifest.batch)
    word = manifest.hw.word_bytes
    headers = ["layer", "gop", "input_mb", "output_mb", "kernel_mb", "total_mb", "mb_per_gflop"]
    rows = []
    payload_layers = []
    for index in range(len(net.layers)):
        if manifest.phase is Phase.DP and index == 0:
            continue
        report = super_traffic(index, net, manifest.phase, manifest.strategies, word)
        rows.append(
            [
                index + 1,
                report.conv_ops / 1e9,
                report.input_bytes / 1e6,
                report.output_bytes / 1e6,
                report.kernel_bytes / 1e6,
                report.total_bytes / 1e6,
                report.normalized_bw,
            ]
        )
        payload_layers.append({"layer": index + 1, **report.to_dict()})
    total = network_summary(net, manifest.phase, manifest.strategies, word)
    if net.layers:
        rows.append(
            [
                "total",
                total.conv_ops / 1e9,
                total.input_bytes / 1e6,
                total.output_bytes / 1e6,
                total.kernel_bytes / 1e6,
                total.total_bytes / 1e6,
                total.normalized_bw,
            ]
        )
    payload = {
        "network": net.name,
        "phase": manifest.phase.value,
        "strategies": manifest.strategies.label(),
        "layers": payload_layers,
        "total": total.to_dict(),
    }
    _emit(render(manifest.fmt, headers, rows, payload), manifest.out)
    return 0


def cmd_simulate(manifest: RunManifest, layer_index: int | None, check_model: bool,
                 check_reference: bool) -> int:
    net = manifest.network
    batch = manifest.batch or 1
    if layer_index is not None:
        if not 1 <= layer_index <= len(net.layers):
            raise ConfigError(
                f"layer must be in 1..{len(net.layers)}, got {layer_index}"
            )
        if manifest.phase is Phase.DP and layer_index == 1:
            raise ConfigError("delta propagation is undefined for the first super layer")
    indices = range(len(net.layers)) if layer_index is None else [layer_index - 1]
    headers = [
        "layer", "phase", "cycles", "input_b", "output_b", "kernel_b",
        "sram_b", "model_match", "ref_err",
    ]
    rows = []
    payload_layers = []
    failures: list[str] = []
    for index in indices:
        if manifest.phase is Phase.DP and index == 0:
            continue
        check = simulate_layer(
            net, index, manifest.phase, manifest.strategies, manifest.hw,
            seed=manifest.seed + index, batch=batch,
            check_model=check_model, check_reference=check_reference,
        )
        model_ok = check.model_match if check_model else None
        ref_err = check.reference_error if check_reference else None
        if check_model and not model_ok:
            failures.append(f"layer {index + 1}: {check.model_mismatch}")
        if check_reference and ref_err is not None and ref_err > 1e-5:
            failures.append(
                f"layer {index + 1}: max relative error {ref_err:.3g} exceeds 1e-05"
            )
        rows.append(
            [
                index + 1,
                manifest.phase.value,
                check.cycles,
                check.sim_traffic.input_bytes,
                check.sim_traffic.output_bytes,
                check.sim_traffic.kernel_bytes,
                check.last_run.sram_bytes,
                "-" if model_ok is None else model_ok,
                "-" if ref_err is None else f"{ref_err:.3g}",
            ]
        )
        payload_layers.append(
            {
                "layer": index + 1,
                "phase": manifest.phase.value,
                "cycles": check.cycles,
                "sram_bytes": check.last_run.sram_bytes,
                "register_bits": check.last_run.register_bits,
                "model_match": model_ok,
                "reference_error": ref_err,
                **{f"traffic_{k}": v for k, v in check.sim_traffic.to_dict().items()},
            }
        )
    payload = {
        "network": net.name,
        "phase": manifest.phase.value,
        "strategies": manifest.strategies.label(),
        "batch": batch,
        "seed": manifest.seed,
        "layers": payload_layers,
        "failures": failures,
    }
    text = render(manifest.fmt, headers, rows, payload)
    if failures and manifest.fmt != "json":
        text += "FAILED checks:\n" + "\n".join(f"  {f}" for f in failures) + "\n"
    _emit(text, manifest.out)
    return 1 if failures else 0


def cmd_compare(preset: str, tolerance: float | None, fmt: str, out: str | None) -> int:
    rows = comparison_rows(preset, tolerance)
    headers = ["metric", "paper", "computed", "rel_err", "tolerance", "pass", "note"]
    table = [
        [r.metric, r.paper_value, r.computed_value, r.relative_error, r.tolerance, r.passed, r.note]
        for r in rows
    ]
    payload = {"preset": preset, "rows": [r.to_dict() for r in rows]}
    _emit(render(fmt, headers, table, payload), out)
    return 0 if all(r.passed for r in rows) else 1


def _forward_chain(net: NetworkSpec, banks: list[np.ndarray], x0: np.ndarray):
    """Single-group functional run through every layer; keeps per-layer
    inputs and pre-activations for the backward pass."""
    inputs, pre_acts = [], []
    x = x0
    for layer, bank in zip(net.layers, banks):
        inputs.append(x)
        x, pre = super_forward(x, bank, layer)
        pre_acts.append(pre)
    return x, inputs, pre_acts


def _chain_loss(net: NetworkSpec, banks: list[np.ndarray], x0: np.ndarray) -> float:
    out, _, _ = _forward_chain(net, banks, x0)
    return 0.5 * float(np.sum(out.astype(np.float64) ** 2))


def analytic_kernel_gradients(
    net: NetworkSpec, banks: list[np.ndarray], x0: np.ndarray
) -> list[np.ndarray]:
    """Backward pass of the quadratic loss 0.5*sum(out^2) over the chain."""
    out, inputs, pre_acts = _forward_chain(net, banks, x0)
    last = len(net.layers) - 1
    d = out.copy()  # dJ/d(out) for the quadratic loss
    layer = net.layers[last]
    ho, wo = layer.conv_out_dims()
    if layer.pool is not None:
        d = pool_backward(d, layer.pool, ho, wo)
    if layer.has_act:
        d = act_backward(d, pre_acts[last])
    grads: list[np.ndarray | None] = [None] * len(net.layers)
    for index in range(last, -1, -1):
        layer = net.layers[index]
        _, grads[index] = kernel_update(
            banks[index], inputs[index], d, layer.conv, TrainConfig(0.0)
        )
        if index > 0:
            d = super_backward_delta(
                d, banks[index], layer.conv, net.layers[index - 1], pre_acts[index - 1]
            )
    return grads


def cmd_gradcheck(manifest: RunManifest, epsilon: float, corrupt: bool) -> int:
    net = manifest.network
    rng = np.random.default_rng(manifest.seed)
    first = net.layers[0]
    x0 = rng.standard_normal((first.conv.n, first.input_h, first.input_w))
    banks = [
        rng.standard_normal((l.conv.n, l.conv.m, l.conv.k, l.conv.k)) * 0.5
        for l in net.layers
    ]
    if any(g != 1 for g in net.groups):
        raise ConfigError("gradcheck runs ungrouped networks only")
    total_weights = sum(b.size for b in banks)
    if total_weights * np.prod(x0.shape) > 1e7:
        raise ConfigError("gradcheck needs a toy-scale network")

    grads = analytic_kernel_gradients(net, banks, x0)
    if corrupt:
        grads[0] = grads[0].copy()
        grads[0][0, 0, 0, 0] += 1.0  # test hook: negative control

    headers = ["layer", "max_rel_err", "worst_weight", "pass"]
    rows = []
    payload_layers = []
    failures = []
    for index, layer in enumerate(net.layers):
        def loss(bank, index=index):
            probe = [b.astype(np.float64) for b in banks]
            probe[index] = bank
            return _chain_loss(net, probe, x0.astype(np.float64))

        fd = finite_diff_gradient(loss, banks[index], epsilon)
        scale = max(float(np.max(np.abs(fd))), 1e-12)
        err_map = np.abs(grads[index].astype(np.float64) - fd) / scale
        worst = tuple(int(v) for v in np.unravel_index(int(np.argmax(err_map)), err_map.shape))
        err = float(err_map[worst])
        ok = err <= 1e-3
        if not ok:
            failures.append(f"layer {index + 1} weight {worst}: relative error {err:.3g}")
        rows.append([index + 1, err, str(worst), ok])
        payload_layers.append(
            {"layer": index + 1, "max_rel_err": err, "worst_weight": list(map(int, worst)), "pass": ok}
        )

    # a zero learning rate must leave the kernels bit-identical
    d0 = np.zeros(
        (net.layers[0].conv.m, *net.layers[0].conv_out_dims()), dtype=np.float64
    )
    frozen, _ = kernel_update(banks[0], x0, d0, net.layers[0].conv, TrainConfig(0.0))
    alpha_zero_ok = bool(np.array_equal(frozen, banks[0].astype(np.float64)))
    rows.append(["alpha=0 hold", 0.0 if alpha_zero_ok else 1.0, "-", alpha_zero_ok])
    if not alpha_zero_ok:
        failures.append("alpha=0 update changed the kernels")

    payload = {
        "network": net.name,
        "seed": manifest.seed,
        "epsilon": epsilon,
        "layers": payload_layers,
        "alpha_zero_hold": alpha_zero_ok,
        "failures": failures,
    }
    text = render(manifest.fmt, headers, rows, payload)
    if failures and manifest.fmt != "json":
        text += "FAILED:\n" + "\n".join(f"  {f}" for f in failures) + "\n"
    _emit(text, manifest.out)
    return 1 if failures else 0


def cmd_roofline(manifest: RunManifest, dram_points: list[float]) -> int:
    net = manifest.network
    word = manifest.hw.word_bytes
    ours = network_summary(net, manifest.phase, manifest.strategies, word).normalized_bw
    works = [("this model", ours)] + [(name, bw) for name, bw, _ in presets.PRIOR_WORKS]
    headers = ["work", "mb_per_gflop", "dram_gb_per_s", "attainable_gflop_per_s"]
    rows = []
    payload_points = []
    for gbps in dram_points:
        for name, bw in works:
            attainable = roofline_attainable(bw, gbps * 1e9) if gbps > 0 else 0.0
            rows.append([name, bw, gbps, attainable / 1e9])
            payload_points.append(
                {
                    "work": name,
                    "normalized_bw": bw,
                    "dram_gb_per_s": gbps,
                    "attainable_flops": attainable,
                }
            )
    payload = {"phase": manifest.phase.value, "points": payload_points}
    _emit(render(manifest.fmt, headers, rows, payload), manifest.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convtraffic",
        description="Traffic model, schedule simulator and reproduction workbench "
        "for a streaming CNN accelerator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_phase=True):
        p.add_argument("--net", default="alexnet", help="network preset name or JSON file")
        p.add_argument("--hw", default="paper", help="hardware preset name or JSON file")
        if with_phase:
            p.add_argument("--phase", default="fp", choices=["fp", "dp", "ku"])
        p.add_argument("--strategies", default="all", help="'none', 'all', '1-3', '1,2,4'")
        p.add_argument("--batch", type=int, default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--format", default="table", choices=["table", "csv", "json"])
        p.add_argument("--out", default=None, help="write the report to this path")

    p = sub.add_parser("analyze", help="closed-form traffic report per layer")
    add_common(p)

    p = sub.add_parser("simulate", help="run the schedule simulator")
    add_common(p)
    p.add_argument("--layer", type=int, default=None, help="1-based layer index, default all")
    p.add_argument("--check-against-model", action="store_true")
    p.add_argument("--check-against-reference", action="store_true")

    p = sub.add_parser("compare", help="reproduce embedded published metrics")
    p.add_argument("preset", help="comparison preset name or 'all'")
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--format", default="table", choices=["table", "csv", "json"])
    p.add_argument("--out", default=None)

    p = sub.add_parser("gradcheck", help="kernel gradients vs central differences")
    add_common(p, with_phase=False)
    p.set_defaults(net="toy2", phase="ku")
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument(
        "--corrupt-gradient", action="store_true",
        help="test hook: corrupt one analytic gradient to exercise failure reporting",
    )

    p = sub.add_parser("roofline", help="attainable throughput under DRAM caps")
    add_common(p)
    p.add_argument(
        "--dram", default="19.2", help="comma list of DRAM bandwidth points in GB/s"
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args.preset, args.tolerance, args.format, args.out)
        manifest = _manifest(args)
        if args.command == "analyze":
            return cmd_analyze(manifest)
        if args.command == "simulate":
            return cmd_simulate(
                manifest, args.layer, args.check_against_model, args.check_against_reference
            )
        if args.command == "gradcheck":
            return cmd_gradcheck(manifest, args.epsilon, args.corrupt_gradient)
        if args.command == "roofline":
            points = [float(tok) for tok in args.dram.split(",") if tok.strip()]
            return cmd_roofline(manifest, points)
        parser.error(f"unknown command {args.command}")
    except (ConfigError, ShapeError, GradcheckError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
