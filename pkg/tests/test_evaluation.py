import pytest

from demoaug.ensemble import EnsembleConfig, EnsembleMode
from demoaug.evaluation import (
    closed_loop_eval, default_matrix, format_report, report_to_dict, wilson_interval,
)
from demoaug.policy import DisturbanceConfig
from demoaug.tasks import TaskKind


class TestWilson:
    def test_published_reference_value(self):
        # 8 successes in 10 trials: Wilson 95% interval (0.4902, 0.9433)
        lo, hi = wilson_interval(8, 10)
        assert lo == pytest.approx(0.4902, abs=5e-4)
        assert hi == pytest.approx(0.9433, abs=5e-4)

    def test_degenerate_cases(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)
        lo, hi = wilson_interval(10, 10)
        assert hi == 1.0 and 0 < lo < 1
        lo, hi = wilson_interval(0, 10)
        assert lo == 0.0 and 0 < hi < 1


class TestMatrix:
    def test_default_matrix_shape(self):
        cells = default_matrix()
        assert len(cells) == 8
        modes = [c.mode for c in cells]
        assert modes.count(EnsembleMode.BASELINE) == 1
        assert modes.count(EnsembleMode.RESET_ONLY) == 1
        assert modes.count(EnsembleMode.DYNAMIC_K) == 3
        assert modes.count(EnsembleMode.COMBINED) == 3
        assert sorted(c.beta for c in cells if c.mode is EnsembleMode.COMBINED) == \
               [0.25, 0.5, 1.0]


class TestClosedLoop:
    def test_zero_episodes_empty_report(self, pick_place_demo):
        report = closed_loop_eval(TaskKind.PICK_PLACE, pick_place_demo,
                                  default_matrix(), n_episodes=0)
        assert report.n_episodes == 0
        assert all(c.episodes == 0 for c in report.cells)
        assert "pick_place" in format_report(report)

    def test_zero_disturbance_ceiling(self, pick_place_demo):
        # undisturbed scripted predictions agree exactly, so every mode
        # matches the plain replay behavior
        matrix = [EnsembleConfig(mode=m, beta=1.0) for m in EnsembleMode]
        report = closed_loop_eval(TaskKind.PICK_PLACE, pick_place_demo, matrix,
                                  n_episodes=6, disturbances=DisturbanceConfig())
        baseline = report.cell(EnsembleMode.BASELINE)
        for cell in report.cells:
            assert cell.rate == 1.0
            assert cell.rate >= baseline.rate

    def test_report_dict_round_trip(self, push_demo):
        matrix = [EnsembleConfig(mode=EnsembleMode.BASELINE)]
        report = closed_loop_eval(TaskKind.PUSH, push_demo, matrix, n_episodes=2)
        doc = report_to_dict(report)
        assert doc["task"] == "push"
        assert len(doc["cells"]) == 1
        assert doc["cells"][0]["episodes"] == 2
        assert len(doc["cells"][0]["ci95"]) == 2

    def test_paired_seeds_across_cells(self, push_demo):
        matrix = [EnsembleConfig(mode=EnsembleMode.BASELINE),
                  EnsembleConfig(mode=EnsembleMode.COMBINED, beta=1.0)]
        report = closed_loop_eval(TaskKind.PUSH, push_demo, matrix, n_episodes=3,
                                  seeds=[11, 22, 33])
        assert report.seeds == (11, 22, 33)
