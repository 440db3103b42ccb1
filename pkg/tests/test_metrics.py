from unittest.mock import patch

from harnacklab.metrics import (
    REGISTRY,
    export_metrics,
    log_paths,
    log_scenario,
    log_solver_iterations,
)


def _sample(name, labels):
    value = REGISTRY.get_sample_value(name, labels)
    return value or 0.0


def test_log_paths_skips_zero_counts():
    before = _sample("harnacklab_paths_total", {"engine": "test", "kind": "K"})
    log_paths("test", {"K": 3, "censored": 0})
    assert _sample("harnacklab_paths_total", {"engine": "test", "kind": "K"}) == before + 3
    assert REGISTRY.get_sample_value("harnacklab_paths_total", {"engine": "test", "kind": "censored"}) is None


def test_log_scenario_counts_results():
    labels = {"scenario": "unit", "result": "fail"}
    before = _sample("harnacklab_scenarios_total", labels)
    log_scenario("unit", False, 0.5)
    assert _sample("harnacklab_scenarios_total", labels) == before + 1
    assert _sample("harnacklab_scenario_seconds_count", {"scenario": "unit"}) >= 1


def test_solver_iterations():
    before = _sample("harnacklab_solver_iterations_total", {"solver": "unit"})
    log_solver_iterations("unit", 40)
    assert _sample("harnacklab_solver_iterations_total", {"solver": "unit"}) == before + 40


def test_export(tmp_path):
    assert export_metrics(None) is False
    path = tmp_path / "m.prom"
    assert export_metrics(str(path)) is True
    assert "harnacklab_solver_iterations_total" in path.read_text()


def test_export_failure_is_logged():
    with patch("harnacklab.metrics.write_to_textfile", side_effect=OSError("disk full")):
        with patch("harnacklab.metrics.logger") as mock_logger:
            assert export_metrics("/nonexistent/m.prom") is False
    mock_logger.error.assert_called_once()
