"""Execution-time windows, utilization accounting, and the offline baseline."""

import pytest

from stagesim.errors import NonpositiveSample, ZeroTotalEstimate
from stagesim.gpu import BatchingCurve, GpuConfig, Policy, UNIT_BATCHING
from stagesim.model import Priority, StageProfile, TaskSpec
from stagesim.timing import (
    DEFAULT_WINDOW_SIZE,
    ExecutionWindow,
    TimingTracker,
    measure_full_load_time,
)

from conftest import make_spec, make_tracker


class TestExecutionWindow:
    def test_default_capacity(self):
        assert ExecutionWindow().capacity == DEFAULT_WINDOW_SIZE == 5

    def test_empty_window_has_no_peak(self):
        assert ExecutionWindow(5).peak() is None

    def test_ring_evicts_oldest(self):
        w = ExecutionWindow(5)
        for v in (12, 9, 15, 11, 10):
            w.record(v)
        w.record(8)
        assert w.values == [9, 15, 11, 10, 8]
        assert w.peak() == 15

    def test_peak_tracks_eviction_of_maximum(self):
        w = ExecutionWindow(3)
        for v in (20, 5, 6, 7):
            w.record(v)
        assert w.peak() == 7

    def test_rejects_nonpositive_samples(self):
        w = ExecutionWindow(3)
        with pytest.raises(NonpositiveSample):
            w.record(0.0)
        with pytest.raises(NonpositiveSample):
            w.record(-1.0)

    def test_capacity_one(self):
        w = ExecutionWindow(1)
        w.record(4)
        w.record(2)
        assert w.peak() == 2
        assert len(w) == 1


class TestEstimates:
    def test_stage_estimate_is_window_peak(self):
        spec = make_spec(1, 0.1, Priority.HP, (0.004, 0.006))
        tracker, _ = make_tracker([spec], full_loads=[0.010])
        for v in (0.0041, 0.0048, 0.0044):
            tracker.record_execution(1, 0, v)
        assert tracker.stage_estimate(1, 0) == pytest.approx(0.0048)

    def test_empty_window_falls_back_to_baseline_share(self):
        # No samples yet: each stage inherits the measured full-load time
        # split by its share of the nominal work.
        spec = make_spec(1, 0.1, Priority.HP, (0.004, 0.006))
        tracker, _ = make_tracker([spec], full_loads=[0.020])
        assert tracker.stage_estimate(1, 0) == pytest.approx(0.008)
        assert tracker.stage_estimate(1, 1) == pytest.approx(0.012)

    def test_task_estimate_sums_stages(self):
        spec = make_spec(1, 0.1, Priority.HP, (0.004, 0.006))
        tracker, _ = make_tracker([spec], full_loads=[0.010])
        tracker.record_execution(1, 0, 0.005)
        tracker.record_execution(1, 1, 0.007)
        assert tracker.task_estimate(1) == pytest.approx(0.012)

    def test_mixed_windows_mix_sources(self):
        spec = make_spec(1, 0.1, Priority.HP, (0.004, 0.006))
        tracker, _ = make_tracker([spec], full_loads=[0.020])
        tracker.record_execution(1, 0, 0.009)
        assert tracker.task_estimate(1) == pytest.approx(0.009 + 0.012)


class TestUtilization:
    def _tracker(self):
        spec = make_spec(1, 0.1, Priority.HP, (0.004, 0.006))
        return make_tracker([spec], full_loads=[0.050])

    def test_baseline_over_period_before_first_completion(self):
        tracker, _ = self._tracker()
        assert tracker.utilization(1) == pytest.approx(0.5)

    def test_switches_to_estimate_after_first_completion(self):
        tracker, _ = self._tracker()
        tracker.record_execution(1, 0, 0.004)
        tracker.record_execution(1, 1, 0.006)
        tracker.note_job_complete(1)
        assert tracker.utilization(1) == pytest.approx(0.1)

    def test_cached_between_completions(self):
        # New samples must not move the reported utilization until the next
        # job completion invalidates the cache.
        tracker, _ = self._tracker()
        tracker.record_execution(1, 0, 0.004)
        tracker.record_execution(1, 1, 0.006)
        tracker.note_job_complete(1)
        before = tracker.utilization(1)
        tracker.record_execution(1, 0, 0.030)
        assert tracker.utilization(1) == before
        tracker.note_job_complete(1)
        assert tracker.utilization(1) == pytest.approx(0.36)


class TestDeadlineShares:
    def test_proportional_split(self):
        spec = make_spec(1, 0.100, Priority.HP, (0.002, 0.003, 0.005))
        tracker, _ = make_tracker([spec], full_loads=[0.010])
        for i, t in enumerate((0.002, 0.003, 0.005)):
            tracker.record_execution(1, i, t)
        shares = tracker.deadline_shares(1)
        assert shares[0] == pytest.approx(0.020)
        assert shares[1] == pytest.approx(0.030)
        assert sum(shares) == 0.100

    def test_shares_sum_exactly_to_deadline(self):
        spec = make_spec(1, 0.0371, Priority.LP, (0.0013, 0.0029, 0.0041))
        tracker, _ = make_tracker([spec], full_loads=[0.0083])
        assert sum(tracker.deadline_shares(1)) == 0.0371

    def test_zero_total_estimate_rejected(self):
        spec = make_spec(1, 0.1, Priority.HP, (0.004,))
        tracker, _ = make_tracker([spec], full_loads=[0.0])
        with pytest.raises(ZeroTotalEstimate):
            tracker.deadline_shares(1)


class TestFullLoadMeasurement:
    def _gpu(self, n_streams=1, n_contexts=1):
        policy = Policy.STR if n_contexts == 1 else Policy.MPS
        return GpuConfig(total_sms=64, n_contexts=n_contexts,
                         n_streams=n_streams, oversubscription=1.0,
                         policy=policy)

    def test_alone_on_the_gpu_runs_at_nominal(self):
        # A single slot leaves no one to interfere: the end-to-end time is
        # the nominal stage total.
        spec = make_spec(1, 0.1, Priority.HP, (0.004, 0.006), (16, 16))
        out = measure_full_load_time(spec, [spec], self._gpu(), seed=3)
        assert out == pytest.approx(0.010)

    def test_contention_with_equal_widths_halves_the_rate(self):
        # Target and one competitor both want the whole GPU: each runs at
        # half rate, so the 4 ms task takes 8 ms end to end.
        spec = make_spec(1, 0.1, Priority.HP, (0.004,), (64,))
        out = measure_full_load_time(spec, [spec], self._gpu(n_streams=2),
                                     seed=1)
        assert out == pytest.approx(0.008)

    def test_deterministic_for_a_seed(self):
        target = make_spec(1, 0.1, Priority.HP, (0.003, 0.002), (48, 24))
        pool = [target,
                make_spec(2, 0.1, Priority.LP, (0.004,), (32,)),
                make_spec(3, 0.1, Priority.LP, (0.002, 0.005), (16, 8))]
        gpu = self._gpu(n_streams=4)
        a = measure_full_load_time(target, pool, gpu, seed=42)
        b = measure_full_load_time(target, pool, gpu, seed=42)
        assert a == b

    def test_seed_changes_competitor_draws(self):
        target = make_spec(1, 0.1, Priority.HP, (0.003,), (48,))
        pool = [target,
                make_spec(2, 0.1, Priority.LP, (0.004,), (64,)),
                make_spec(3, 0.1, Priority.LP, (0.001,), (4,))]
        gpu = self._gpu(n_streams=3)
        outs = {measure_full_load_time(target, pool, gpu, seed=s)
                for s in range(6)}
        assert len(outs) > 1

    def test_contention_never_faster_than_nominal(self):
        target = make_spec(1, 0.1, Priority.HP, (0.003, 0.002), (48, 24))
        pool = [target, make_spec(2, 0.1, Priority.LP, (0.004,), (32,))]
        gpu = self._gpu(n_streams=4)
        out = measure_full_load_time(target, pool, gpu, seed=7)
        assert out >= target.nominal_total - 1e-12

    def test_batched_competitors_use_batch_durations(self):
        target = make_spec(1, 0.1, Priority.HP, (0.004,), (64,))
        curve = BatchingCurve(reference_batch=4, reference_gain=2.0)
        slow = measure_full_load_time(
            target, [target], self._gpu(n_streams=2), seed=1,
            batch_sizes={1: 4}, curves={1: curve})
        fast = measure_full_load_time(
            target, [target], self._gpu(n_streams=2), seed=1,
            batch_sizes={1: 1}, curves={1: UNIT_BATCHING})
        assert slow > fast
