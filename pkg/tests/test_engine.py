"""End-to-end simulation runs, metrics, labels, and log replay."""

import json

import pytest

from stagesim.engine import (
    MetricsReport,
    ResponseStats,
    Simulation,
    aggregate_demand,
    format_label,
    modeled_capacity,
    parse_label,
    scale_to_overload,
)
from stagesim.errors import InvalidScenario
from stagesim.gpu import GpuConfig, Policy, UNIT_BATCHING
from stagesim.model import Priority
from stagesim.replay import (
    check_admission_audit,
    check_event_order,
    check_work_conservation,
    compare_with_report,
    replay_metrics,
)

from conftest import make_spec


def _gpu(nc=1, ns=1, os_=1.0, policy=Policy.MPS, total=68):
    return GpuConfig(total_sms=total, n_contexts=nc, n_streams=ns,
                     oversubscription=os_, policy=policy)


class TestLabels:
    def test_paper_notation(self):
        assert format_label(6, 1, 6.0) == "6x1_6"
        assert format_label(1, 4, 1.0) == "1x4_1"
        assert format_label(3, 2, 1.5) == "3x2_1.5"

    @pytest.mark.parametrize("nc,ns,os_", [(6, 1, 6.0), (1, 4, 1.0),
                                           (3, 2, 1.5), (2, 5, 2.0)])
    def test_round_trip(self, nc, ns, os_):
        assert parse_label(format_label(nc, ns, os_)) == (nc, ns, os_)


class TestResponseStats:
    def test_nearest_rank_p95(self):
        samples = [float(i) for i in range(1, 101)]
        stats = ResponseStats.from_samples(samples)
        assert stats.p95 == 95.0
        assert stats.mean == pytest.approx(50.5)
        assert (stats.min, stats.max, stats.count) == (1.0, 100.0, 100)

    def test_small_sample_p95_is_max(self):
        stats = ResponseStats.from_samples([3.0, 1.0])
        assert stats.p95 == 3.0

    def test_empty_samples(self):
        stats = ResponseStats.from_samples([])
        assert stats.count == 0
        assert stats.mean == 0.0


class TestSingleTaskRun:
    def test_ten_periods_ten_completions(self):
        # One task with 10 ms of work every 100 ms over one second: ten jobs
        # finish, each exactly 10 ms after release.
        task = make_spec(1, 0.100, Priority.HP, (0.004, 0.006), (20, 30))
        sim = Simulation([task], _gpu(), duration=1.0, seed=3,
                         warmup_frac=0.0, phasing="zero")
        result = sim.run()
        report = result.report
        assert report.completed_hp == 10
        assert report.jps == pytest.approx(10.0)
        assert report.dmr_hp == 0.0
        assert report.response_hp.mean == pytest.approx(0.010)
        assert report.accepted_hp == 10
        assert report.rejected_hp == 0

    def test_event_log_shape(self):
        task = make_spec(1, 0.100, Priority.HP, (0.004, 0.006), (20, 30))
        sim = Simulation([task], _gpu(), duration=0.35, seed=3,
                         warmup_frac=0.0, phasing="zero")
        result = sim.run()
        kinds = [r.kind for r in result.records]
        assert kinds.count("release") == 4  # t = 0, 0.1, 0.2, 0.3
        assert kinds.count("job_complete") == 4
        assert kinds[-1] == "sim_end"
        check_event_order(result.records, duration=0.35)

    def test_empty_task_list_yields_zero_report(self):
        sim = Simulation([], _gpu(), duration=1.0, seed=0)
        report = sim.run().report
        assert report.jps == 0.0
        assert report.accepted_hp == report.accepted_lp == 0


class TestWarmup:
    def test_jobs_released_before_warmup_not_counted(self):
        task = make_spec(1, 0.100, Priority.HP, (0.010,), (20,))
        sim = Simulation([task], _gpu(), duration=1.0, seed=3,
                         warmup_frac=0.1, phasing="zero")
        report = sim.run().report
        # Releases at 0.0 (warmup) then 0.1 .. 0.9: nine counted jobs over
        # the 0.9 s measurement window.
        assert report.accepted_hp == 9
        assert report.completed_hp == 9
        assert report.jps == pytest.approx(10.0)

    def test_invalid_warmup_rejected(self):
        task = make_spec(1, 0.1, Priority.HP, (0.01,))
        with pytest.raises(InvalidScenario):
            Simulation([task], _gpu(), duration=1.0, seed=0, warmup_frac=1.0)


class TestDeterminism:
    def _tasks(self):
        return [make_spec(1, 0.020, Priority.HP, (0.003, 0.004), (24, 16)),
                make_spec(2, 0.015, Priority.LP, (0.002, 0.005), (32, 8)),
                make_spec(3, 0.010, Priority.LP, (0.004,), (48,))]

    def test_identical_runs_bitwise_equal(self):
        gpu = _gpu(nc=2, ns=2, os_=2.0, policy=Policy.MPS_STR, total=64)
        a = Simulation(self._tasks(), gpu, duration=1.0, seed=11).run()
        b = Simulation(self._tasks(), gpu, duration=1.0, seed=11).run()
        assert a.report == b.report
        assert a.records == b.records
        assert json.dumps(a.report.to_dict()) == json.dumps(b.report.to_dict())

    def test_different_seed_changes_phases(self):
        gpu = _gpu(nc=2, ns=2, os_=2.0, policy=Policy.MPS_STR, total=64)
        a = Simulation(self._tasks(), gpu, duration=1.0, seed=11).run()
        b = Simulation(self._tasks(), gpu, duration=1.0, seed=12).run()
        assert a.records != b.records


class TestReplayAndAudits:
    def _result(self, seed=11, duration=2.0):
        gpu = _gpu(nc=2, ns=2, os_=2.0, policy=Policy.MPS_STR, total=64)
        tasks = [make_spec(1, 0.020, Priority.HP, (0.003, 0.004), (24, 16)),
                 make_spec(2, 0.015, Priority.LP, (0.002, 0.005), (32, 8)),
                 make_spec(3, 0.010, Priority.LP, (0.004,), (48,))]
        sim = Simulation(tasks, gpu, duration=duration, seed=seed)
        return sim, tasks, sim.run()

    def test_replay_matches_accumulated_metrics(self):
        sim, tasks, result = self._result()
        replayed = replay_metrics(result.records, tasks,
                                  duration=2.0, warmup_end=sim.warmup_end,
                                  batch_sizes={t.id: 1 for t in tasks})
        assert compare_with_report(replayed, result.report) == []

    def test_work_conservation(self):
        _, tasks, result = self._result()
        check_work_conservation(result.records, tasks, n_contexts=2,
                                n_streams=2)

    def test_admission_audit(self):
        _, _, result = self._result()
        check_admission_audit(result)

    def test_invariant_mode_runs_clean(self):
        gpu = _gpu(nc=2, ns=2, os_=2.0, policy=Policy.MPS_STR, total=64)
        tasks = [make_spec(1, 0.020, Priority.HP, (0.003, 0.004), (24, 16)),
                 make_spec(2, 0.015, Priority.LP, (0.002, 0.005), (32, 8))]
        sim = Simulation(tasks, gpu, duration=0.5, seed=5,
                         check_invariants=True)
        sim.run()  # raises on any violated invariant


class TestCapacityModel:
    def test_aggregate_demand_sums_work_rates(self):
        tasks = [make_spec(1, 0.010, Priority.HP, (0.002,), (16,)),
                 make_spec(2, 0.020, Priority.LP, (0.004,), (16,))]
        demand = aggregate_demand(tasks, {1: 1, 2: 1},
                                  {1: UNIT_BATCHING, 2: UNIT_BATCHING})
        assert demand == pytest.approx(0.4)

    def test_modeled_capacity_stream_limited(self):
        # Narrow stages: each context serves one stream at full rate, so six
        # contexts give six units of capacity.
        gpu = _gpu(nc=6, ns=1, os_=6.0, total=68)
        tasks = [make_spec(1, 0.010, Priority.LP, (0.002,), (4,))]
        cap = modeled_capacity(gpu, tasks, {1: 1}, {1: UNIT_BATCHING})
        assert cap == pytest.approx(6.0)

    def test_modeled_capacity_sm_limited(self):
        # Wide stages: 68 SMs over 27-wide work caps aggregate progress.
        gpu = _gpu(nc=6, ns=1, os_=6.0, total=68)
        tasks = [make_spec(1, 0.010, Priority.LP, (0.002,), (27,))]
        cap = modeled_capacity(gpu, tasks, {1: 1}, {1: UNIT_BATCHING})
        assert cap == pytest.approx(68 / 27)

    def test_scale_to_overload_hits_target_demand(self):
        gpu = _gpu(nc=6, ns=1, os_=6.0, total=68)
        tasks = [make_spec(1, 0.010, Priority.HP, (0.002,), (27,)),
                 make_spec(2, 0.010, Priority.LP, (0.002,), (27,))]
        batch = {1: 1, 2: 1}
        curves = {1: UNIT_BATCHING, 2: UNIT_BATCHING}
        cap = modeled_capacity(gpu, tasks, batch, curves)
        scaled = scale_to_overload(tasks, 1.5, cap, batch, curves)
        new_demand = aggregate_demand(scaled, batch, curves)
        assert new_demand == pytest.approx(1.5 * cap)
        # Relative shape is preserved.
        assert scaled[0].period == scaled[1].period
        assert scaled[0].stages == tasks[0].stages

    def test_stage_wider_than_gpu_rejected(self):
        task = make_spec(1, 0.1, Priority.HP, (0.01,), (100,))
        with pytest.raises(InvalidScenario):
            Simulation([task], _gpu(total=68), duration=1.0, seed=0)


class TestReportShape:
    def test_to_dict_covers_all_fields(self):
        task = make_spec(1, 0.1, Priority.HP, (0.01,), (16,))
        report = Simulation([task], _gpu(), duration=0.5, seed=0).run().report
        d = report.to_dict()
        assert d["label"] == "1x1_1"
        assert d["policy"] == "mps"
        assert isinstance(d["response_hp"], dict)
        assert set(d["response_hp"]) == {"mean", "min", "max", "p95", "count"}
        roundtrip = json.loads(json.dumps(d))
        assert roundtrip == d
