"""Sweep expansion and tabular report emission."""

import csv
import io
import json

import pytest

from stagesim.errors import ParseError, ReportIoError, SchemaError
from stagesim.gpu import Policy
from stagesim.report import (
    CSV_COLUMNS,
    emit_report,
    load_rows,
    render_csv,
    render_json,
    report_row,
)
from stagesim.scenario import scenario_from_dict
from stagesim.sweep import (
    SweepSpec,
    expand_cells,
    load_sweep,
    run_sweep,
    sweep_from_dict,
)


class TestSweepSchema:
    def test_defaults(self):
        spec = sweep_from_dict({})
        assert [p.value for p in spec.policies] == ["str", "mps", "mps-str"]
        assert spec.seeds == [0]
        assert "nc" in spec.oversubscription

    def test_unknown_key_rejected(self):
        with pytest.raises(SchemaError):
            sweep_from_dict({"polices": ["str"]})

    def test_unknown_policy_rejected(self):
        with pytest.raises(SchemaError):
            sweep_from_dict({"policies": ["fifo"]})

    def test_parallelism_outside_range_rejected(self):
        with pytest.raises(SchemaError):
            sweep_from_dict({"parallelism": [1]})
        with pytest.raises(SchemaError):
            sweep_from_dict({"parallelism": [11]})

    def test_pairs_and_parallelism_conflict(self):
        with pytest.raises(SchemaError):
            sweep_from_dict({"pairs": [[2, 2]], "parallelism": [4]})

    def test_bad_oversubscription_rejected(self):
        with pytest.raises(SchemaError):
            sweep_from_dict({"oversubscription": [0.5]})
        with pytest.raises(SchemaError):
            sweep_from_dict({"oversubscription": ["all"]})

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "sweep.json"
        path.write_text(json.dumps({"policies": ["mps"], "parallelism": [4]}))
        spec = load_sweep(path)
        assert spec.policies == [Policy.MPS]

    def test_missing_file(self):
        with pytest.raises(ParseError):
            load_sweep("/nope/sweep.json")


class TestExpandCells:
    def test_str_shape_is_single_context(self):
        spec = sweep_from_dict({"policies": ["str"], "parallelism": [4],
                                "oversubscription": [1]})
        cells, skipped = expand_cells(spec)
        assert [(c.n_contexts, c.n_streams) for c in cells] == [(1, 4)]

    def test_mps_shape_is_single_stream(self):
        spec = sweep_from_dict({"policies": ["mps"], "parallelism": [6],
                                "oversubscription": [1]})
        cells, _ = expand_cells(spec)
        assert [(c.n_contexts, c.n_streams) for c in cells] == [(6, 1)]

    def test_mps_str_factorizations(self):
        spec = sweep_from_dict({"policies": ["mps-str"], "parallelism": [6],
                                "oversubscription": [1]})
        cells, _ = expand_cells(spec)
        shapes = {(c.n_contexts, c.n_streams) for c in cells}
        assert shapes == {(2, 3), (3, 2)}

    def test_prime_parallelism_skipped_for_mps_str(self):
        spec = sweep_from_dict({"policies": ["mps-str"], "parallelism": [5],
                                "oversubscription": [1]})
        cells, skipped = expand_cells(spec)
        assert cells == []
        assert len(skipped) == 1

    def test_nc_token_resolves_to_context_count(self):
        spec = sweep_from_dict({"policies": ["mps"], "parallelism": [4],
                                "oversubscription": ["nc"]})
        cells, _ = expand_cells(spec)
        assert cells[0].oversubscription == 4.0

    def test_oversubscription_beyond_contexts_skipped(self):
        spec = sweep_from_dict({"policies": ["str"], "parallelism": [4],
                                "oversubscription": [2]})
        cells, skipped = expand_cells(spec)
        assert cells == []
        assert "exceeds" in skipped[0]

    def test_duplicate_cells_removed(self):
        # For one context, OS=1 and OS="nc" are the same cell.
        spec = sweep_from_dict({"policies": ["str"], "parallelism": [4],
                                "oversubscription": [1, "nc"]})
        cells, _ = expand_cells(spec)
        assert len(cells) == 1

    def test_explicit_pairs_respected(self):
        spec = sweep_from_dict({"policies": ["mps-str"], "pairs": [[2, 3]],
                                "oversubscription": [1, 2]})
        cells, _ = expand_cells(spec)
        assert [(c.n_contexts, c.n_streams, c.oversubscription)
                for c in cells] == [(2, 3, 1.0), (2, 3, 2.0)]

    def test_full_default_grid_size(self):
        cells, skipped = expand_cells(sweep_from_dict({}))
        # 9 single-context STR cells, 35 MPS cells, 28 two-level cells.
        assert len(cells) == 72
        labels = {(c.policy, c.label) for c in cells}
        assert len(labels) == 72


class TestRunSweep:
    def _base(self):
        return scenario_from_dict({
            "workload": {"tasks": [
                {"period": 0.02, "priority": "hp",
                 "stages": [{"nominal_time": 0.003, "width": 24}]},
                {"period": 0.015, "priority": "lp",
                 "stages": [{"nominal_time": 0.004, "width": 32}]},
            ]},
            "duration": 0.25,
        })

    def test_one_report_per_cell_per_seed(self):
        spec = sweep_from_dict({"policies": ["mps"], "parallelism": [2, 3],
                                "oversubscription": [1], "seeds": [0, 1]})
        outcome = run_sweep(spec, self._base())
        assert len(outcome.reports) == 4
        assert {r.seed for r in outcome.reports} == {0, 1}
        assert {r.label for r in outcome.reports} == {"2x1_1", "3x1_1"}

    def test_cells_run_independently_and_deterministically(self):
        spec = sweep_from_dict({"policies": ["str"], "parallelism": [3],
                                "oversubscription": [1], "seeds": [7]})
        a = run_sweep(spec, self._base()).reports[0]
        b = run_sweep(spec, self._base()).reports[0]
        assert a == b


class TestReportEmission:
    def _report(self):
        cfg = scenario_from_dict({
            "workload": {"tasks": [
                {"period": 0.05, "priority": "hp",
                 "stages": [{"nominal_time": 0.004, "width": 16}]},
            ]},
            "gpu": {"total_sms": 64, "n_contexts": 1, "n_streams": 2,
                    "oversubscription": 1, "policy": "str"},
            "duration": 0.3,
        })
        from stagesim.scenario import build_simulation
        return build_simulation(cfg, collect_log=False).run().report

    def test_csv_columns_exact_order(self):
        text = render_csv([self._report()])
        header = text.splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        assert CSV_COLUMNS == (
            "config_label", "policy", "n_contexts", "n_streams",
            "oversubscription", "seed", "jps", "dmr_hp", "dmr_lp",
            "resp_hp_mean", "resp_hp_p95", "resp_lp_mean", "resp_lp_p95",
            "accepted_hp", "accepted_lp", "rejected_hp", "rejected_lp",
        )

    def test_empty_report_list_is_header_only(self):
        text = render_csv([])
        assert text == ",".join(CSV_COLUMNS) + "\n"

    def test_one_run_one_row(self):
        text = render_csv([self._report()])
        rows = list(csv.DictReader(io.StringIO(text)))
        assert len(rows) == 1
        assert rows[0]["config_label"] == "1x2_1"
        assert rows[0]["policy"] == "str"

    def test_json_mirrors_csv_fields(self):
        report = self._report()
        data = json.loads(render_json([report]))
        assert list(data[0].keys()) == list(CSV_COLUMNS)
        assert data[0]["jps"] == report.jps

    def test_json_round_trip_preserves_values(self):
        report = self._report()
        parsed = json.loads(render_json([report]))[0]
        assert parsed == report_row(report)

    def test_emit_writes_file(self, tmp_path):
        report = self._report()
        out = tmp_path / "r.csv"
        emit_report([report], fmt="csv", path=out)
        rows = load_rows(out)
        assert len(rows) == 1
        assert float(rows[0]["jps"]) == pytest.approx(report.jps)

    def test_emit_json_file_round_trip(self, tmp_path):
        report = self._report()
        out = tmp_path / "r.json"
        emit_report([report], fmt="json", path=out)
        assert load_rows(out)[0] == report_row(report)

    def test_unknown_format_rejected(self):
        with pytest.raises(ReportIoError):
            emit_report([], fmt="yaml")

    def test_unwritable_path_raises(self):
        with pytest.raises(ReportIoError):
            emit_report([], fmt="csv", path="/nonexistent-dir/out.csv")
