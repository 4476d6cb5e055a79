"""Transaction-level model of the streaming conv engine.

Executes the hardware schedule directly: per-map line buffers feeding a
modular k x k bank grid, a shared window register, computational units
sweeping co-located windows into an m-wide accumulator bank, and a fused
rectifier/pooling engine. Produces functional outputs plus exact external
word and cycle counters that must agree with the closed-form traffic
model to the byte.

A simulator instance handles one image of one group; group and batch
totals scale linearly and counters merge by summation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .archmodel import HwConfig
from .errors import ConfigError, ShapeError
from .specs import ConvSpec, PoolSpec, SuperLayerSpec, check_kernels, check_maps
from .traffic import Phase, StrategySet, TrafficReport, op_count, used_extent


def bank_route(row: int, col: int, k: int) -> tuple[int, int]:
    """Bank coordinates holding element (row, col): plain modular placement."""
    if k < 1:
        raise ConfigError(f"bank grid side must be positive, got {k}")
    return row % k, col % k


class BankGrid:
    """k x k two-port banks for one input map.

    Row y is physically held in bank row y % k; the column coordinate maps
    to bank column x % k by addressing alone, so a window fetch only has to
    undo the row rotation to restore window order. Any k x k window over
    resident rows touches every bank exactly once.
    """

    def __init__(self, k: int, width: int, dtype=np.float32):
        self.k = k
        self.width = width
        self.rows = np.zeros((k, width), dtype=dtype)
        self.row_ids = [-1] * k

    def fill_row(self, y: int, values: np.ndarray | None) -> int:
        """Install row y, evicting whatever bank row y % k held. Returns the
        evicted row id (-1 when the slot was empty)."""
        phys = y % self.k
        evicted = self.row_ids[phys]
        if values is None:
            self.rows[phys] = 0.0
        else:
            if values.shape[0] != self.width:
                raise ShapeError(
                    f"row width {values.shape[0]} does not match grid width {self.width}"
                )
            self.rows[phys] = values
        self.row_ids[phys] = y
        return evicted

    def resident(self, y: int) -> bool:
        return self.row_ids[y % self.k] == y

    def window(self, r: int, c: int) -> np.ndarray:
        """The k x k window anchored at (r, c), rows de-rotated to window order."""
        k = self.k
        perm = []
        for i in range(k):
            y = r + i
            if self.row_ids[y % k] != y:
                raise RuntimeError(f"window row {y} is not resident in the bank grid")
            perm.append(y % k)
        if c < 0 or c + k > self.width:
            raise RuntimeError(f"window columns [{c}, {c + k}) fall outside the grid")
        return self.rows[perm, c : c + k]


def window_fetch(grid: BankGrid, r: int, c: int) -> np.ndarray:
    """Fetch a k x k window from a bank grid (one read per bank)."""
    return grid.window(r, c)


class LineBuffer:
    """The k most recent rows of every input map, fed one element per shift.

    Rows live in per-map bank grids over the padded width; padding columns
    and rows are synthesized on chip and never charged as external reads.
    """

    def __init__(self, n_maps: int, k: int, width: int, pad: int = 0, dtype=np.float32):
        self.n_maps = n_maps
        self.k = k
        self.width = width
        self.pad = pad
        self.grids = [BankGrid(k, width + 2 * pad, dtype) for _ in range(n_maps)]
        self.external_reads = 0
        self._cursor = [(0, 0)] * n_maps  # next expected (row, col) per map

    def push(self, map_index: int, value, at: tuple[int, int] | None = None) -> bool:
        """Admit one element in row-major order; returns True when the write
        landed in a bank row that was recycled from an older image row."""
        row, col = self._cursor[map_index]
        if at is not None and at != (row, col):
            raise RuntimeError(
                f"out-of-order arrival: expected element {(row, col)}, got {at}"
            )
        grid = self.grids[map_index]
        if col == 0:
            grid.fill_row(row + self.pad, None)
        grid.rows[(row + self.pad) % self.k, self.pad + col] = value
        self.external_reads += 1
        col += 1
        self._cursor[map_index] = (row, col) if col < self.width else (row + 1, 0)
        return row >= self.k

    def admit_row(self, y_real: int, values: np.ndarray | None, used_cols: int) -> None:
        """Admit one full real row across all maps at once (schedule fast path).

        values has shape (n_maps, padded_width) or is None when only the
        accounting matters.
        """
        for i, grid in enumerate(self.grids):
            grid.fill_row(y_real + self.pad, None if values is None else values[i])
        self.external_reads += self.n_maps * used_cols

    def mark_pad_row(self, y_padded: int) -> None:
        """Install an all-zero synthesized row; no external traffic."""
        for grid in self.grids:
            grid.fill_row(y_padded, None)


@dataclass
class AccumulatorBank:
    """m partial sums held in 32-bit registers across one input-map sweep."""

    m: int
    values: np.ndarray = field(init=False)

    def __post_init__(self):
        self.values = np.zeros(self.m, dtype=np.float32)

    def reset(self) -> None:
        self.values[:] = 0.0

    @property
    def capacity_bits(self) -> int:
        return 32 * self.m


def accumulate_sweep(
    acc: AccumulatorBank, windows: np.ndarray, kers: np.ndarray, num_cu: int
) -> np.ndarray:
    """Sweep co-located windows in CU-sized waves, accumulating all m outputs.

    windows: (n, k, k) of the current co-located position; kers: (n, m, k, k).
    The accumulator must be clear when the sweep starts; the m results are
    streamed out exactly once afterwards.
    """
    if np.any(acc.values):
        raise RuntimeError("accumulator bank not cleared at sweep start")
    n = windows.shape[0]
    for start in range(0, n, num_cu):
        wave = slice(start, min(start + num_cu, n))
        acc.values += np.einsum("iuv,ijuv->j", windows[wave], kers[wave])
    return acc.values.copy()


def pool_engine_schedule(
    m: int,
    conv_cycles_budget: int,
    pool: PoolSpec,
    relu_pool_units: int,
    conv_out_h: int,
    conv_out_w: int,
) -> tuple[bool, int]:
    """Whether R parallel rectifier/pooling units keep up with the conv engine.

    One output-position batch delivers m conv results; the pooling work
    attributable to it is the average window-tap count per conv position,
    m * p^2 * pooled_elems / conv_positions taps, split across R units.
    Returns (feasible, required_cycles).
    """
    if relu_pool_units < 1:
        raise ConfigError(f"need at least one rectifier/pooling unit, got {relu_pool_units}")
    ph, pw = pool.out_dims(conv_out_h, conv_out_w)
    work = m * pool.p * pool.p * ph * pw / (conv_out_h * conv_out_w)
    required = math.ceil(work / relu_pool_units)
    return required <= conv_cycles_budget, required


@dataclass
class SimResult:
    """Functional outputs plus the exact transaction totals of one run."""

    outputs: np.ndarray | None
    pre_act: np.ndarray | None
    grad: np.ndarray | None
    traffic: TrafficReport
    cycles: int
    sram_bytes: int
    register_bits: int
    read_trace: Counter | None = None
    write_trace: Counter | None = None


class _Counters:
    def __init__(self, trace: bool):
        self.input_words = 0
        self.output_words = 0
        self.kernel_words = 0
        self.cycles = 0
        self.reads: Counter | None = Counter() if trace else None
        self.writes: Counter | None = Counter() if trace else None


def _check_capacity(conv: ConvSpec, hw: HwConfig, strategies: StrategySet) -> None:
    if conv.k > hw.max_k:
        raise ConfigError(
            f"kernel side {conv.k} exceeds the window-register budget (max_k={hw.max_k})"
        )
    if conv.n > hw.max_n:
        raise ConfigError(
            f"{conv.n} input maps exceed the index-range budget (max_n={hw.max_n})"
        )
    if conv.m > hw.max_m:
        raise ConfigError(
            f"{conv.m} output maps exceed the accumulator budget (max_m={hw.max_m})"
        )
    if strategies.kernels_on_chip:
        need = conv.n * conv.m * conv.k**2 * hw.word_bytes
        cap = hw.max_n * hw.max_m * hw.max_k**2 * hw.word_bytes
        if need > cap:
            raise ConfigError(
                f"kernel set of {need} B exceeds the kernel-store budget ({cap} B)"
            )


def _position_operand_words(strategies: StrategySet, n: int, m: int, k: int) -> int:
    """External operand words one co-located sweep consumes.

    Without the line buffer each window tap streams in, re-fetched per
    filter unless the window register is reused; without the on-chip
    kernel store every multiply also streams its kernel operand.
    """
    words = 0
    if not strategies.line_buffer:
        words += n * k * k * (1 if strategies.window_reuse else m)
    if not strategies.kernels_on_chip:
        words += n * m * k * k
    return words


def _conv_sweep(
    x: np.ndarray | None,
    kers: np.ndarray | None,
    conv: ConvSpec,
    in_h: int,
    in_w: int,
    hw: HwConfig,
    strategies: StrategySet,
    counters: _Counters,
    compute: bool,
    count_outputs: bool,
    trace_tag: str | None,
) -> np.ndarray | None:
    """Walk the conv-stage schedule; returns the conv result when computing."""
    n, m, k, s, pad = conv.n, conv.m, conv.k, conv.stride, conv.pad
    ho, wo = conv.out_dims(in_h, in_w)
    used_rows = used_extent(in_h, k, s, pad)
    used_cols = used_extent(in_w, k, s, pad)
    waves = math.ceil(n / hw.num_cu)
    use_lb = strategies.line_buffer

    xpad = None
    if compute:
        xpad = np.pad(x.astype(np.float32, copy=False), ((0, 0), (pad, pad), (pad, pad)))
    lb = LineBuffer(n, k, in_w, pad=pad) if use_lb else None
    acc = AccumulatorBank(m) if compute else None
    y = np.zeros((m, ho, wo), dtype=np.float32) if compute else None

    admitted_until = 0  # first padded row index not yet installed
    per_position = _position_operand_words(strategies, n, m, k)
    out_words_per_position = (m if strategies.on_chip_accumulate else n * m) if count_outputs else 0

    for r in range(ho):
        if use_lb:
            band_top = r * s
            for yp in range(max(admitted_until, band_top), band_top + k):
                y_real = yp - pad
                if 0 <= y_real < used_rows:
                    lb.admit_row(y_real, xpad[:, yp, :] if compute else None, used_cols)
                    if counters.reads is not None:
                        for i in range(n):
                            for col in range(used_cols):
                                counters.reads[(trace_tag, i, y_real, col)] += 1
                else:
                    lb.mark_pad_row(yp)
            admitted_until = band_top + k
        for c in range(wo):
            counters.input_words += per_position
            counters.cycles += m * waves
            counters.output_words += out_words_per_position
            if compute:
                if use_lb:
                    win = np.stack(
                        [window_fetch(g, r * s, c * s) for g in lb.grids]
                    )
                else:
                    win = xpad[:, r * s : r * s + k, c * s : c * s + k]
                acc.reset()
                y[:, r, c] = accumulate_sweep(acc, win, kers, hw.num_cu)
    if use_lb:
        counters.input_words += lb.external_reads
    if strategies.kernels_on_chip and count_outputs:
        # one-time preload charged only in the non-fused accounting
        counters.kernel_words += n * m * k * k
    return y


def _act_pool_engine(
    pre: np.ndarray, layer: SuperLayerSpec, counters: _Counters, fused: bool, trace: bool
) -> np.ndarray:
    """Fused rectifier + pooling stage; final maps stream out once when fused."""
    out = np.maximum(pre, np.float32(0.0)) if layer.has_act else pre
    if layer.pool is not None:
        p, s = layer.pool.p, layer.pool.stride
        ho, wo = out.shape[1], out.shape[2]
        ph, pw = layer.pool.out_dims(ho, wo)
        inv = np.float32(1.0 / (p * p))
        pooled = np.zeros((out.shape[0], ph, pw), dtype=np.float32)
        for r in range(ph):
            for c in range(pw):
                pooled[:, r, c] = out[:, r * s : r * s + p, c * s : c * s + p].sum(axis=(1, 2)) * inv
        out = pooled
    if fused:
        counters.output_words += out.shape[0] * out.shape[1] * out.shape[2]
        if counters.writes is not None:
            for j in range(out.shape[0]):
                for r in range(out.shape[1]):
                    for c in range(out.shape[2]):
                        counters.writes[("out", j, r, c)] += 1
    return out


def _pool_transpose_gather(
    d: np.ndarray, pool: PoolSpec, out_h: int, out_w: int
) -> np.ndarray:
    """Upsample deltas through the pooling transpose, gathering per output
    element the 1/p^2-weighted deltas of every window that contains it."""
    p, s = pool.p, pool.stride
    ph, pw = pool.out_dims(out_h, out_w)
    if d.shape[1:] != (ph, pw):
        raise ShapeError(
            f"delta dims {d.shape[1]}x{d.shape[2]} do not match pooled dims {ph}x{pw}"
        )
    inv = np.float32(1.0 / (p * p))
    out = np.zeros((d.shape[0], out_h, out_w), dtype=np.float32)
    for a in range(out_h):
        r_lo = max(0, math.ceil((a - p + 1) / s))
        r_hi = min(ph - 1, a // s)
        if r_hi < r_lo:
            continue
        for b in range(out_w):
            c_lo = max(0, math.ceil((b - p + 1) / s))
            c_hi = min(pw - 1, b // s)
            if c_hi < c_lo:
                continue
            out[:, a, b] = d[:, r_lo : r_hi + 1, c_lo : c_hi + 1].sum(axis=(1, 2)) * inv
    return out


def run_super_layer(
    x: np.ndarray | None,
    kers: np.ndarray | None,
    layer: SuperLayerSpec,
    hw: HwConfig,
    strategies: StrategySet,
    phase: Phase,
    *,
    delta: np.ndarray | None = None,
    prev_layer: SuperLayerSpec | None = None,
    prev_pre_act: np.ndarray | None = None,
    groups: int = 1,
    compute: bool = True,
    trace: bool = False,
) -> SimResult:
    """Run one super layer for one image of one group and scale the counters
    to the full group count.

    Per phase, x is the conv input (FP, KU) or the incoming delta at this
    layer's conv output grid (DP). KU additionally takes the delta; DP takes
    the previous layer's spec and, when it has an activation stage, its
    pre-activation maps for the derivative mask.
    """
    conv = layer.conv
    fused = strategies.fused_super_layer
    counters = _Counters(trace)
    ho, wo = layer.conv_out_dims()

    outputs = pre_act = grad = None

    if phase is Phase.FP:
        _check_capacity(conv, hw, strategies)
        if compute:
            check_maps(x, conv.n, layer.input_h, layer.input_w, "input")
            check_kernels(kers, conv)
        pre_act = _conv_sweep(
            x, kers, conv, layer.input_h, layer.input_w, hw, strategies,
            counters, compute, count_outputs=not fused, trace_tag="x" if trace else None,
        )
        if fused:
            if compute:
                outputs = _act_pool_engine(pre_act, layer, counters, fused=True, trace=trace)
            else:
                oh, ow = layer.out_dims()
                counters.output_words += conv.m * oh * ow
        elif compute:
            outputs = _act_pool_engine(pre_act, layer, counters, fused=False, trace=trace)

    elif phase is Phase.DP:
        if prev_layer is None:
            raise ConfigError("delta propagation needs the previous super layer")
        if conv.stride != 1:
            raise ConfigError(
                f"delta propagation supports stride 1 only, got stride {conv.stride}"
            )
        tconv = ConvSpec(n=conv.m, m=conv.n, k=conv.k, stride=1, pad=conv.k - 1 - conv.pad)
        _check_capacity(tconv, hw, strategies)
        tkers = None
        if compute:
            check_maps(x, conv.m, ho, wo, "delta")
            check_kernels(kers, conv)
            tkers = np.ascontiguousarray(
                np.transpose(kers[:, :, ::-1, ::-1], (1, 0, 2, 3)).astype(np.float32)
            )
        d = _conv_sweep(
            x, tkers, tconv, ho, wo, hw, strategies,
            counters, compute, count_outputs=not fused, trace_tag="d" if trace else None,
        )
        prev_h, prev_w = prev_layer.conv_out_dims()
        if compute:
            if prev_layer.pool is not None:
                d = _pool_transpose_gather(d, prev_layer.pool, prev_h, prev_w)
            if prev_layer.has_act:
                check_maps(prev_pre_act, conv.n, prev_h, prev_w, "previous pre-activation")
                # mask operand stays on chip, it is not charged as traffic
                d = d * (prev_pre_act > 0).astype(np.float32)
            outputs = d
        if fused:
            counters.output_words += conv.n * prev_h * prev_w
            if counters.writes is not None:
                for j in range(conv.n):
                    for a in range(prev_h):
                        for b in range(prev_w):
                            counters.writes[("out", j, a, b)] += 1

    elif phase is Phase.KU:
        _check_capacity(conv, hw, strategies)
        n, m, k, s, pad = conv.n, conv.m, conv.k, conv.stride, conv.pad
        used_rows = used_extent(layer.input_h, k, s, pad)
        used_cols = used_extent(layer.input_w, k, s, pad)
        waves = math.ceil(n / hw.num_cu)
        if compute:
            check_maps(x, n, layer.input_h, layer.input_w, "input")
            check_maps(delta, m, ho, wo, "delta")
            check_kernels(kers, conv)
            xpad = np.pad(x.astype(np.float32, copy=False), ((0, 0), (pad, pad), (pad, pad)))
            grad = np.zeros((n, m, k, k), dtype=np.float32)
        if strategies.line_buffer:
            # input maps stream through the line buffers exactly once
            counters.input_words += n * used_rows * used_cols
            if counters.reads is not None:
                for i in range(n):
                    for y_r in range(used_rows):
                        for col in range(used_cols):
                            counters.reads[("x", i, y_r, col)] += 1
        per_position = 0 if fused else _position_operand_words(strategies, n, m, k)
        out_per_position = 0 if fused else (m if strategies.on_chip_accumulate else n * m)
        for r in range(ho):
            for c in range(wo):
                if fused:
                    counters.input_words += m  # one delta word per output map
                    if counters.reads is not None:
                        for j in range(m):
                            counters.reads[("d", j, r, c)] += 1
                else:
                    counters.input_words += per_position
                    counters.output_words += out_per_position
                counters.cycles += m * waves
                if compute:
                    win = xpad[:, r * s : r * s + k, c * s : c * s + k]
                    grad += np.einsum("j,iuv->ijuv", delta[:, r, c].astype(np.float32), win)
        if strategies.kernels_on_chip and not fused:
            counters.kernel_words += n * m * k * k
        # gradients accumulate in the kernel store and never stream out

    else:
        raise ConfigError(f"unknown phase {phase!r}")

    word = hw.word_bytes
    conv_ops, act_ops, pool_ops = op_count(layer, 1, groups)
    traffic = TrafficReport(
        input_bytes=counters.input_words * word * groups,
        output_bytes=counters.output_words * word * groups,
        kernel_bytes=counters.kernel_words * word * groups,
        conv_ops=conv_ops,
        act_ops=act_ops if phase is Phase.FP else 0,
        pool_ops=pool_ops if phase is Phase.FP else 0,
    )
    sram_bytes = conv.n * conv.m * conv.k**2 * word + conv.n * conv.k * layer.input_w * word
    register_bits = 32 * conv.k**2 * hw.num_cu + 32 * conv.m
    return SimResult(
        outputs=outputs,
        pre_act=pre_act,
        grad=grad,
        traffic=traffic,
        cycles=counters.cycles * groups,
        sram_bytes=sram_bytes,
        register_bits=register_bits,
        read_trace=counters.reads,
        write_trace=counters.writes,
    )
