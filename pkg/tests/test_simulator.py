import math

import numpy as np
import pytest

from convtraffic.errors import ConfigError
from convtraffic.reference import conv_forward, super_forward
from convtraffic.simulator import (
    AccumulatorBank,
    BankGrid,
    LineBuffer,
    accumulate_sweep,
    bank_route,
    pool_engine_schedule,
    run_super_layer,
    window_fetch,
)
from convtraffic.specs import ConvSpec, NetworkSpec, PoolSpec, SuperLayerSpec
from convtraffic.traffic import Phase, StrategySet
from convtraffic.verify import max_relative_error, simulate_layer


class TestBankRoute:
    def test_modular_placement(self):
        assert bank_route(7, 5, 5) == (2, 0)

    def test_origin(self):
        for k in (1, 3, 8):
            assert bank_route(0, 0, k) == (0, 0)

    def test_window_offset_wraps(self):
        # window anchored at (1, 1), offset (2, 2) lands in bank (0, 0)
        assert bank_route(1 + 2, 1 + 2, 3) == (0, 0)


class TestBankGrid:
    def test_window_matches_direct_indexing_after_band_fill(self):
        rng = np.random.default_rng(0)
        data = rng.standard_normal((6, 7)).astype(np.float32)
        grid = BankGrid(3, 7)
        for y in range(3):
            grid.fill_row(y, data[y])
        for r in (0,):
            for c in range(5):
                assert np.array_equal(window_fetch(grid, r, c), data[r : r + 3, c : c + 3])
        # slide the band down one row and re-check
        grid.fill_row(3, data[3])
        for c in range(5):
            assert np.array_equal(window_fetch(grid, 1, c), data[1:4, c : c + 3])

    def test_k1_single_element(self):
        grid = BankGrid(1, 4)
        grid.fill_row(2, np.array([9.0, 8.0, 7.0, 6.0], dtype=np.float32))
        assert window_fetch(grid, 2, 3) == np.float32(6.0)

    def test_consecutive_fetches_share_columns(self):
        rng = np.random.default_rng(1)
        k = 3
        data = rng.standard_normal((3, 8)).astype(np.float32)
        grid = BankGrid(k, 8)
        for y in range(k):
            grid.fill_row(y, data[y])
        a = window_fetch(grid, 0, 2)
        b = window_fetch(grid, 0, 3)
        assert np.array_equal(a[:, 1:], b[:, :-1])  # k*(k-1) shared elements

    def test_each_window_read_covers_all_banks_once(self):
        k = 4
        coords = {bank_route(2 + i, 5 + j, k) for i in range(k) for j in range(k)}
        assert len(coords) == k * k

    def test_non_resident_row_trips_invariant(self):
        grid = BankGrid(2, 4)
        grid.fill_row(0, np.zeros(4, dtype=np.float32))
        grid.fill_row(1, np.zeros(4, dtype=np.float32))
        grid.fill_row(2, np.zeros(4, dtype=np.float32))  # evicts row 0
        with pytest.raises(RuntimeError, match="not resident"):
            grid.window(0, 0)


class TestLineBuffer:
    def test_column_shift_costs_one_read_per_map(self):
        lb = LineBuffer(3, 2, 5)
        for i in range(3):
            for col in range(4):
                lb.push(i, float(col))
        before = lb.external_reads
        for i in range(3):  # one new element per map
            lb.push(i, 4.0)
        assert lb.external_reads - before == 3

    def test_warmup_of_first_band_streams_k_rows(self):
        lb = LineBuffer(1, 5, 27)
        for row in range(5):
            for col in range(27):
                lb.push(0, 0.0)
        assert lb.external_reads == 5 * 27

    def test_every_element_read_once_per_map(self):
        h = w = 6
        lb = LineBuffer(2, 3, w)
        for row in range(h):
            for col in range(w):
                for i in range(2):
                    lb.push(i, float(row * w + col))
        assert lb.external_reads == 2 * h * w

    def test_out_of_order_arrival_rejected(self):
        lb = LineBuffer(1, 2, 4)
        lb.push(0, 1.0, at=(0, 0))
        with pytest.raises(RuntimeError, match="out-of-order"):
            lb.push(0, 2.0, at=(1, 3))

    def test_eviction_flag_raises_once_band_wraps(self):
        lb = LineBuffer(1, 2, 2)
        flags = [lb.push(0, 0.0) for _ in range(6)]
        assert not any(flags[:4])  # first two rows fill empty banks
        assert all(flags[4:])  # third row recycles the row-0 bank


class TestAccumulateSweep:
    def test_streams_all_outputs_once(self):
        rng = np.random.default_rng(2)
        n, m, k = 48, 128, 5
        windows = rng.standard_normal((n, k, k)).astype(np.float32)
        kers = rng.standard_normal((n, m, k, k)).astype(np.float32)
        acc = AccumulatorBank(m)
        out = accumulate_sweep(acc, windows, kers, num_cu=16)
        assert out.shape == (m,)
        assert acc.capacity_bits == 32 * m

    def test_single_filter(self):
        windows = np.full((1, 2, 2), 2.0, dtype=np.float32)
        kers = np.full((1, 1, 2, 2), 3.0, dtype=np.float32)
        out = accumulate_sweep(AccumulatorBank(1), windows, kers, num_cu=4)
        assert out[0] == pytest.approx(24.0)

    def test_matches_reference_conv_element(self):
        rng = np.random.default_rng(3)
        n, m, k = 7, 5, 3
        x = rng.standard_normal((n, k, k)).astype(np.float32)
        kers = rng.standard_normal((n, m, k, k)).astype(np.float32)
        out = accumulate_sweep(AccumulatorBank(m), x, kers, num_cu=2)
        expected = conv_forward(x, kers, ConvSpec(n, m, k))[:, 0, 0]
        assert max_relative_error(out, expected) < 1e-5

    def test_dirty_accumulator_rejected(self):
        acc = AccumulatorBank(2)
        acc.values[0] = 1.0
        with pytest.raises(RuntimeError, match="not cleared"):
            accumulate_sweep(acc, np.ones((1, 1, 1), np.float32), np.ones((1, 2, 1, 1), np.float32), 1)


class TestPoolEngineSchedule:
    def test_layer2_config_feasible_at_r2(self, alexnet, paper_hw):
        layer = alexnet.layers[1]
        budget = layer.conv.m * math.ceil(layer.conv.n / paper_hw.num_cu)  # 384 cycles
        feasible, required = pool_engine_schedule(
            layer.conv.m, budget, layer.pool, 2, *layer.conv_out_dims()
        )
        assert budget == 384
        assert feasible and required <= budget

    def test_one_unit_per_map_always_feasible(self):
        pool = PoolSpec(3, 2)
        feasible, required = pool_engine_schedule(64, 9, pool, 64, 13, 13)
        assert feasible and required <= 9  # budget of p*p suffices

    def test_double_workload_at_boundary_infeasible(self):
        pool = PoolSpec(2, 2)
        # m=4 over a 4x4 conv grid: work = 4*4*4/16 = 4 taps, boundary at budget 4
        feasible, required = pool_engine_schedule(4, 4, pool, 1, 4, 4)
        assert feasible and required == 4
        feasible2, required2 = pool_engine_schedule(8, 4, pool, 1, 4, 4)
        assert not feasible2 and required2 == 8

    def test_zero_units_rejected(self):
        with pytest.raises(ConfigError):
            pool_engine_schedule(1, 1, PoolSpec(2, 2), 0, 4, 4)


def _toy_layer():
    return SuperLayerSpec(ConvSpec(2, 3, 3, stride=1, pad=1), 6, 6, True, PoolSpec(2, 2))


def _toy_net():
    return NetworkSpec("toy", 1, (_toy_layer(),), (1,))


class TestRunSuperLayer:
    def test_identity_conv_echoes_input(self, paper_hw):
        layer = SuperLayerSpec(ConvSpec(1, 1, 1), 4, 4, has_act=False)
        x = np.arange(16, dtype=np.float32).reshape(1, 4, 4)
        kers = np.ones((1, 1, 1, 1), dtype=np.float32)
        result = run_super_layer(x, kers, layer, paper_hw, StrategySet.all_on(), Phase.FP)
        assert np.array_equal(result.outputs, x)
        assert result.traffic.input_bytes == result.traffic.output_bytes == 16 * 4

    def test_layer2_reads_input_storage_once(self, alexnet, paper_hw):
        rng = np.random.default_rng(0)
        layer = alexnet.layers[1]
        x = rng.standard_normal((48, 27, 27)).astype(np.float32)
        kers = rng.standard_normal((48, 128, 5, 5)).astype(np.float32)
        result = run_super_layer(x, kers, layer, paper_hw, StrategySet.all_on(), Phase.FP)
        assert result.traffic.input_bytes == 48 * 27 * 27 * 4  # 139,968

    def test_layer2_cycles_per_output_position(self, alexnet, paper_hw):
        layer = alexnet.layers[1]
        result = run_super_layer(None, None, layer, paper_hw, StrategySet.all_on(),
                                 Phase.FP, compute=False)
        positions = 27 * 27
        assert result.cycles == positions * 384  # 48*128/16 per position

    def test_capacity_errors_name_budget(self, paper_hw):
        too_wide = SuperLayerSpec(ConvSpec(1, 1, 13), 20, 20, has_act=False)
        with pytest.raises(ConfigError, match="window-register"):
            run_super_layer(None, None, too_wide, paper_hw, StrategySet.none(),
                            Phase.FP, compute=False)
        too_many = SuperLayerSpec(ConvSpec(500, 1, 3), 8, 8, has_act=False)
        with pytest.raises(ConfigError, match="index-range"):
            run_super_layer(None, None, too_many, paper_hw, StrategySet.none(),
                            Phase.FP, compute=False)
        too_fat = SuperLayerSpec(ConvSpec(1, 500, 3), 8, 8, has_act=False)
        with pytest.raises(ConfigError, match="accumulator"):
            run_super_layer(None, None, too_fat, paper_hw, StrategySet.none(),
                            Phase.FP, compute=False)

    def test_dp_requires_stride_one(self, paper_hw):
        layer = SuperLayerSpec(ConvSpec(1, 1, 2, stride=2), 6, 6, has_act=False)
        with pytest.raises(ConfigError, match="stride 1"):
            run_super_layer(
                np.zeros((1, 3, 3), np.float32), np.zeros((1, 1, 2, 2), np.float32),
                layer, paper_hw, StrategySet.all_on(), Phase.DP,
                prev_layer=_toy_layer(),
            )

    def test_strategy_toggles_preserve_outputs(self, paper_hw):
        rng = np.random.default_rng(4)
        layer = _toy_layer()
        x = rng.standard_normal((2, 6, 6)).astype(np.float32)
        kers = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
        outs = []
        for prefix in range(6):
            r = run_super_layer(x, kers, layer, paper_hw, StrategySet.first(prefix), Phase.FP)
            outs.append(r.outputs)
        for other in outs[1:]:
            assert max_relative_error(other, outs[0]) < 1e-5

    def test_read_write_once_histogram(self, paper_hw):
        rng = np.random.default_rng(5)
        layer = _toy_layer()
        x = rng.standard_normal((2, 6, 6)).astype(np.float32)
        kers = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
        r = run_super_layer(x, kers, layer, paper_hw, StrategySet.all_on(), Phase.FP,
                            trace=True)
        reads = {k: v for k, v in r.read_trace.items() if k[0] == "x"}
        assert set(reads.values()) == {1}
        assert set(reads) == {("x", i, y, c) for i in range(2) for y in range(6) for c in range(6)}
        writes = r.write_trace
        assert set(writes.values()) == {1}
        assert set(writes) == {("out", j, a, b) for j in range(3) for a in range(3) for b in range(3)}

    def test_ku_trace_reads_delta_once(self, paper_hw):
        rng = np.random.default_rng(6)
        layer = _toy_layer()
        x = rng.standard_normal((2, 6, 6)).astype(np.float32)
        kers = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
        delta = rng.standard_normal((3, 6, 6)).astype(np.float32)
        r = run_super_layer(x, kers, layer, paper_hw, StrategySet.all_on(), Phase.KU,
                            delta=delta, trace=True)
        d_reads = {k: v for k, v in r.read_trace.items() if k[0] == "d"}
        assert set(d_reads.values()) == {1}
        assert len(d_reads) == 3 * 6 * 6
        assert r.traffic.output_bytes == 0

    def test_sweep_result_matches_reference_within_tolerance(self, paper_hw):
        rng = np.random.default_rng(7)
        layer = _toy_layer()
        x = rng.standard_normal((2, 6, 6)).astype(np.float32)
        kers = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
        r = run_super_layer(x, kers, layer, paper_hw, StrategySet.all_on(), Phase.FP)
        expected, pre = super_forward(x, kers, layer)
        assert max_relative_error(r.outputs, expected) < 1e-5
        assert max_relative_error(r.pre_act, pre) < 1e-5


class TestSimulatorAgainstModel:
    def test_toy_bytes_match_model_for_all_subsets(self, paper_hw):
        net = _toy_net()
        for phase in (Phase.FP, Phase.KU):
            for prefix in range(6):
                check = simulate_layer(
                    net, 0, phase, StrategySet.first(prefix), paper_hw,
                    seed=0, compute=True, check_model=True,
                )
                assert check.model_match, check.model_mismatch

    def test_truncated_stride_layer_matches_model(self, paper_hw):
        # stride 2 with a dangling row/column: read-once counts only touched elements
        layer = SuperLayerSpec(ConvSpec(1, 2, 2, stride=2), 5, 5, has_act=False)
        net = NetworkSpec("trunc", 1, (layer,), (1,))
        for prefix in range(6):
            check = simulate_layer(
                net, 0, Phase.FP, StrategySet.first(prefix), paper_hw,
                seed=1, compute=True, check_model=True,
            )
            assert check.model_match, check.model_mismatch
