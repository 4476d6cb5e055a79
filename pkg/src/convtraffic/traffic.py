"""Closed-form external-memory traffic and operation-count model.

Byte counts use decimal SI units (1 MB = 1e6 B). One operation is one
multiply or one add, so a conv layer performs 2*k^2*n*m*H_out*W_out ops
per image per group. Normalized bandwidth is MB of external traffic per
GFlop of convolution work.

Accounting conventions (fixed so the published reference tables
reconstruct exactly; the simulator counts the same way):

* Without the line buffer, every multiply charges its streamed operands,
  including window taps that fall in the zero padding. With the line
  buffer, only real elements the schedule touches are streamed, once each.
* Fused super-layer reports count feature maps only. The one-time kernel
  preload, the activation-mask operand in delta propagation, and the
  kernel-gradient store in kernel updating stay on chip and are charged
  to nothing.
* With partial strategy sets the model covers the conv stage of the
  phase alone (delta propagation maps to the transposed conv geometry,
  kernel updating to the forward geometry).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError
from .specs import ConvSpec, NetworkSpec, SuperLayerSpec

_COUNT_LIMIT = 2**63  # counters are promised to fit signed 64-bit


class Phase(str, Enum):
    """Training phase a traffic report refers to."""

    FP = "fp"  # forward propagation
    DP = "dp"  # delta propagation (undefined for the first super layer)
    KU = "ku"  # kernel updating


@dataclass(frozen=True)
class StrategySet:
    """The five traffic-reduction strategies, in cascade order."""

    kernels_on_chip: bool = False  # 1: kernels preloaded to on-chip store
    window_reuse: bool = False  # 2: one window feeds all co-located filters
    on_chip_accumulate: bool = False  # 3: partial sums never leave the chip
    line_buffer: bool = False  # 4: k input rows cached, one new word per shift
    fused_super_layer: bool = False  # 5: act+pool fused, maps cross DRAM once

    def __post_init__(self):
        if self.fused_super_layer and not (
            self.kernels_on_chip
            and self.window_reuse
            and self.on_chip_accumulate
            and self.line_buffer
        ):
            raise ConfigError("strategy 5 (fusion) requires strategies 1-4")

    @classmethod
    def none(cls) -> "StrategySet":
        return cls()

    @classmethod
    def all_on(cls) -> "StrategySet":
        return cls(True, True, True, True, True)

    @classmethod
    def first(cls, count: int) -> "StrategySet":
        """Cumulative prefix: first(3) enables strategies 1, 2 and 3."""
        if not 0 <= count <= 5:
            raise ConfigError(f"strategy prefix must be 0..5, got {count}")
        flags = [i < count for i in range(5)]
        return cls(*flags)

    @classmethod
    def parse(cls, text: str) -> "StrategySet":
        """Parse CLI syntax: 'none', 'all', or digits like '1,2,4' / '1-3'."""
        text = text.strip().lower()
        if text in ("", "none", "0"):
            return cls.none()
        if text == "all":
            return cls.all_on()
        chosen: set[int] = set()
        for token in text.split(","):
            token = token.strip()
            if "-" in token:
                lo, hi = token.split("-", 1)
                chosen.update(range(int(lo), int(hi) + 1))
            elif token:
                chosen.add(int(token))
        if not chosen <= {1, 2, 3, 4, 5}:
            raise ConfigError(f"strategies must be within 1-5, got '{text}'")
        flags = [i + 1 in chosen for i in range(5)]
        return cls(*flags)

    def label(self) -> str:
        chosen = [i + 1 for i, f in enumerate(self.as_tuple()) if f]
        return "+".join(f"s{i}" for i in chosen) if chosen else "none"

    def as_tuple(self) -> tuple[bool, ...]:
        return (
            self.kernels_on_chip,
            self.window_reuse,
            self.on_chip_accumulate,
            self.line_buffer,
            self.fused_super_layer,
        )


@dataclass(frozen=True)
class TrafficReport:
    """External traffic and work for one layer/phase (or a whole network)."""

    input_bytes: int = 0
    output_bytes: int = 0
    kernel_bytes: int = 0
    conv_ops: int = 0
    act_ops: int = 0
    pool_ops: int = 0

    def __post_init__(self):
        for name in ("input_bytes", "output_bytes", "kernel_bytes", "conv_ops", "act_ops", "pool_ops"):
            v = getattr(self, name)
            if v < 0:
                raise ConfigError(f"{name} must be non-negative, got {v}")

    @property
    def total_bytes(self) -> int:
        return self.input_bytes + self.output_bytes + self.kernel_bytes

    @property
    def normalized_bw(self) -> float:
        """MB of traffic per GFlop of convolution work."""
        if self.conv_ops == 0:
            return 0.0
        return (self.total_bytes / 1e6) / (self.conv_ops / 1e9)

    def __add__(self, other: "TrafficReport") -> "TrafficReport":
        return TrafficReport(
            self.input_bytes + other.input_bytes,
            self.output_bytes + other.output_bytes,
            self.kernel_bytes + other.kernel_bytes,
            self.conv_ops + other.conv_ops,
            self.act_ops + other.act_ops,
            self.pool_ops + other.pool_ops,
        )

    def to_dict(self) -> dict:
        return {
            "input_bytes": self.input_bytes,
            "output_bytes": self.output_bytes,
            "kernel_bytes": self.kernel_bytes,
            "total_bytes": self.total_bytes,
            "conv_ops": self.conv_ops,
            "act_ops": self.act_ops,
            "pool_ops": self.pool_ops,
            "normalized_bw": self.normalized_bw,
        }


def used_extent(size: int, k: int, stride: int, pad: int) -> int:
    """Real elements along one axis that the window schedule ever touches.

    Equal to size whenever the stride tiles the padded extent exactly,
    smaller when the floor in the output-dim formula drops trailing rows.
    """
    out = (size + 2 * pad - k) // stride + 1
    return min(size, (out - 1) * stride + k - pad)


def op_count(layer: SuperLayerSpec, batch: int, groups: int = 1) -> tuple[int, int, int]:
    """(conv_ops, act_ops, pool_ops) for the layer, all ops 1 flop."""
    conv = layer.conv
    ho, wo = layer.conv_out_dims()
    conv_ops = 2 * conv.k * conv.k * conv.n * conv.m * ho * wo * batch * groups
    act_ops = conv.m * ho * wo * batch * groups if layer.has_act else 0
    pool_ops = 0
    if layer.pool is not None:
        ph, pw = layer.pool.out_dims(ho, wo)
        pool_ops = layer.pool.p * layer.pool.p * ph * pw * conv.m * batch * groups
    if conv_ops >= _COUNT_LIMIT:
        raise ConfigError(f"conv op count {conv_ops} overflows 64-bit counters")
    return conv_ops, act_ops, pool_ops


def _conv_stage_words(
    conv: ConvSpec, in_h: int, in_w: int, strategies: StrategySet, batch: int, groups: int
) -> tuple[int, int, int, int]:
    """(feature_in, kernel_stream, out, kernel_store) word counts for one conv."""
    n, m, k, s, pad = conv.n, conv.m, conv.k, conv.stride, conv.pad
    ho, wo = conv.out_dims(in_h, in_w)
    positions = ho * wo * batch * groups
    if strategies.line_buffer:
        if s > k:
            raise ConfigError(f"line buffer needs stride <= k, got {s} > {k}")
        rows = used_extent(in_h, k, s, pad)
        cols = used_extent(in_w, k, s, pad)
        feature = n * rows * cols * batch * groups  # each touched element once
    elif strategies.window_reuse:
        feature = n * k * k * positions  # one window fetch per input map
    else:
        feature = n * m * k * k * positions  # refetched for every filter
    kernel_stream = 0 if strategies.kernels_on_chip else n * m * k * k * positions
    out = (m if strategies.on_chip_accumulate else n * m) * positions
    kernel_store = n * m * k * k * groups if strategies.kernels_on_chip else 0
    return feature, kernel_stream, out, kernel_store


def conv_traffic(
    layer: SuperLayerSpec,
    strategies: StrategySet,
    batch: int,
    word_bytes: int,
    groups: int = 1,
) -> TrafficReport:
    """Traffic of the conv stage alone under strategies 1-4 (fusion ignored)."""
    feature, kernel_stream, out, kernel_store = _conv_stage_words(
        layer.conv, layer.input_h, layer.input_w, strategies, batch, groups
    )
    conv_ops, act_ops, pool_ops = op_count(layer, batch, groups)
    return TrafficReport(
        input_bytes=(feature + kernel_stream) * word_bytes,
        output_bytes=out * word_bytes,
        kernel_bytes=kernel_store * word_bytes,
        conv_ops=conv_ops,
        act_ops=act_ops,
        pool_ops=pool_ops,
    )


def transpose_geometry(layer: SuperLayerSpec) -> SuperLayerSpec:
    """Conv geometry that delta propagation runs on: map roles swapped,
    180-degree rotation does not change counts, padding becomes k-1-pad."""
    conv = layer.conv
    if conv.stride != 1:
        raise ConfigError(
            f"delta propagation supports stride 1 only, got stride {conv.stride}"
        )
    ho, wo = layer.conv_out_dims()
    tconv = ConvSpec(n=conv.m, m=conv.n, k=conv.k, stride=1, pad=conv.k - 1 - conv.pad)
    return SuperLayerSpec(conv=tconv, input_h=ho, input_w=wo, has_act=False, pool=None)


def super_traffic(
    index: int,
    net: NetworkSpec,
    phase: Phase,
    strategies: StrategySet,
    word_bytes: int,
) -> TrafficReport:
    """Traffic of one super layer for the given phase.

    With all five strategies the fused read-once/write-once forms apply;
    any partial set falls back to the conv-stage model on the phase's
    equivalent geometry.
    """
    layer = net.layers[index]
    groups = net.groups[index]
    batch = net.batch
    if phase is Phase.DP and index == 0:
        raise ConfigError("delta propagation is undefined for the first super layer")

    if not strategies.fused_super_layer:
        geom = transpose_geometry(layer) if phase is Phase.DP else layer
        report = conv_traffic(geom, strategies, batch, word_bytes, groups)
        conv_ops, act_ops, pool_ops = op_count(layer, batch, groups)
        return TrafficReport(
            input_bytes=report.input_bytes,
            output_bytes=report.output_bytes,
            kernel_bytes=report.kernel_bytes,
            conv_ops=conv_ops,
            act_ops=act_ops if phase is Phase.FP else 0,
            pool_ops=pool_ops if phase is Phase.FP else 0,
        )

    conv = layer.conv
    ho, wo = layer.conv_out_dims()
    conv_ops, act_ops, pool_ops = op_count(layer, batch, groups)
    rows = used_extent(layer.input_h, conv.k, conv.stride, conv.pad)
    cols = used_extent(layer.input_w, conv.k, conv.stride, conv.pad)

    if phase is Phase.FP:
        oh, ow = layer.out_dims()
        in_words = conv.n * rows * cols * batch * groups
        out_words = conv.m * oh * ow * batch * groups
    elif phase is Phase.DP:
        transpose_geometry(layer)  # validates stride 1
        prev = net.layers[index - 1]
        prev_h, prev_w = prev.conv_out_dims()
        in_words = conv.m * ho * wo * batch * groups
        out_words = conv.n * groups * prev_h * prev_w * batch
    else:  # Phase.KU
        in_words = (conv.n * rows * cols + conv.m * ho * wo) * batch * groups
        out_words = 0  # gradients accumulate in the kernel store

    return TrafficReport(
        input_bytes=in_words * word_bytes,
        output_bytes=out_words * word_bytes,
        kernel_bytes=0,
        conv_ops=conv_ops,
        act_ops=act_ops if phase is Phase.FP else 0,
        pool_ops=pool_ops if phase is Phase.FP else 0,
    )


def network_summary(
    net: NetworkSpec, phase: Phase, strategies: StrategySet, word_bytes: int
) -> TrafficReport:
    """Sum of per-layer reports; layers where the phase is undefined are skipped."""
    total = TrafficReport()
    start = 1 if phase is Phase.DP else 0
    for index in range(start, len(net.layers)):
        total = total + super_traffic(index, net, phase, strategies, word_bytes)
    return total


def reduction_factor(
    layer: SuperLayerSpec, word_bytes: int, batch: int, groups: int = 1
) -> float:
    """No-strategy traffic of the whole cascade over the fused traffic.

    The no-strategy numerator charges the conv stage per operand load, the
    activation stage one read plus one write per element, and the pooling
    stage one read per window tap plus one write per pooled element. The
    fused denominator is input maps once, pooled output once, and the
    one-time kernel preload.
    """
    if not layer.has_act or layer.pool is None:
        raise ConfigError("reduction factor is defined for layers with act and pool")
    conv = layer.conv
    ho, wo = layer.conv_out_dims()
    ph, pw = layer.pool.out_dims(ho, wo)
    scale = batch * groups

    base = conv_traffic(layer, StrategySet.none(), batch, word_bytes, groups).total_bytes
    act_words = 2 * conv.m * ho * wo * scale
    pool_words = (layer.pool.p**2 * ph * pw + ph * pw) * conv.m * scale
    numerator = base + (act_words + pool_words) * word_bytes

    rows = used_extent(layer.input_h, conv.k, conv.stride, conv.pad)
    cols = used_extent(layer.input_w, conv.k, conv.stride, conv.pad)
    fused_words = (
        conv.n * rows * cols * scale
        + conv.m * ph * pw * scale
        + conv.n * conv.m * conv.k**2 * groups
    )
    return numerator / (fused_words * word_bytes)
