import json
import math
import os
from types import SimpleNamespace
from unittest.mock import patch

import numpy as np
import pytest

from harnacklab.config import SCENARIO_SCHEMAS, default_config, parse_config
from harnacklab.errors import ConfigError, ScenarioError
from harnacklab.geometry import BallObstacle
from harnacklab.kernel import annulus_hit_probability
from harnacklab.qhyp import GoodSetReport, QhbcFit, QhDistance, SsResult, SsSweep
from harnacklab.report import CLAIMS
from harnacklab.scenarios import (
    SCENARIOS,
    ScenarioRun,
    adversarial_family,
    derived_seed,
    execute,
    lattice_family,
    run_batch,
    run_scenario,
    slit_families,
)
from harnacklab.simulate import PairedEstimate, RatioBound

SLIT = [{"type": "segment", "a": [-0.9, 0.0], "b": [0.0, 0.0]}]


def _config(name, seed=1, **params):
    return parse_config(json.dumps({"name": name, "seed": seed, "params": params}))


def _by_claim(rows):
    out = {}
    for row in rows:
        out.setdefault(row.claim, []).append(row)
    return out


def _good_report(is_good=True):
    return GoodSetReport(0.5, 0.1, 2.94, -2.94, (-0.5, 0.0), (-0.5, 0.0), None, None, is_good)


def _small_lemma_grid(seed=1):
    return _config("lemma-grid", seed, dmin=2, dmax=3, gap_grid=2000, reflection_grid=60)


def test_registry_matches_the_schemas():
    assert set(SCENARIOS) == set(SCENARIO_SCHEMAS)
    for info in SCENARIOS.values():
        assert set(info.claims) <= set(CLAIMS), info.name


def test_families():
    assert [name for name, _ in adversarial_family()] == [
        "straight-slit", "bent-slit", "comb-3", "half-disc-arc", "spiral",
    ]
    families = slit_families()
    assert sorted(families) == ["slit-length", "slit-teeth"]
    assert all(len(members) == 3 for members in families.values())
    ids = [k_id for k_id, _ in lattice_family(16, 7)]
    assert "l-shape-reflected" in ids and len(ids) == len(set(ids))


def test_derived_seeds():
    assert derived_seed(5, 1) == derived_seed(5, 1)
    assert derived_seed(5, 1) != derived_seed(5, 2)
    assert derived_seed(5, 1) != derived_seed(6, 1)


def test_a_seed_is_required():
    with pytest.raises(ConfigError):
        ScenarioRun(default_config("lemma-grid"))


def test_lemma_grid():
    outcome = execute(_small_lemma_grid())
    assert outcome.passed
    assert [r.claim for r in outcome.rows] == ["lemma-gap-nonnegative", "reflection-sum-bound"] * 2
    header, rows = outcome.tables["lemmas"]
    assert header[0] == "lemma" and len(rows) == 4
    assert all(row[-1] is True for row in rows)


def test_failures_are_attributed_to_the_claim():
    with patch("harnacklab.scenarios.modified_poisson_gap", side_effect=ArithmeticError("overflow")):
        with pytest.raises(ScenarioError) as info:
            execute(_small_lemma_grid())
    assert info.value.claim == "lemma-gap-nonnegative"
    assert isinstance(info.value.cause, ArithmeticError)


def test_small_masson_run():
    cfg = _config("masson", 3, sizes=[16], n_walks=2000, mc_cases=3)
    rows = run_scenario(cfg)
    by_claim = {}
    for row in rows:
        by_claim.setdefault(row.claim, []).append(row)
    assert by_claim["masson-positive"][0].passed
    assert by_claim["masson-reflection-symmetry"][0].passed
    assert by_claim["masson-exact-residual"][0].passed
    assert len(by_claim["masson-mc-agreement"]) == 3
    assert "masson-n-stability" not in by_claim


def test_runs_are_reproducible():
    cfg = _config("masson", 3, sizes=[16], n_walks=500, mc_cases=2)
    first = [r.to_dict() for r in run_scenario(cfg)]
    second = [r.to_dict() for r in run_scenario(cfg)]
    assert first == second


def test_sequential_batch():
    outcomes = run_batch([_small_lemma_grid(1), _small_lemma_grid(2)])
    assert [o.name for o in outcomes] == ["lemma-grid", "lemma-grid"]
    assert all(o.passed for o in outcomes)


def test_masson_stability_threshold_default():
    assert default_config("masson", seed=1).param("stability") == pytest.approx(0.20)


def test_cone_exit_quadrature_rows():
    cfg = _config("cone-exit", 2, dims=[2], axis_points=3, lower_half_points=4, derivative_points=3, strip_n=4)
    by_claim = _by_claim(execute(cfg).rows)
    for claim in ("cone-exit-axis-lower", "cone-exit-lower-half-upper", "cone-exit-x2-decreasing"):
        assert len(by_claim[claim]) == 1 and by_claim[claim][0].passed, claim
    assert by_claim["strip-bound-limit"][0].op == "info"
    assert "escape-ratio-lower-bound" not in by_claim


def _walks(start, dom, cone, cfg, seed, *args, **kwargs):
    return PairedEstimate(tuple(float(c) for c in start), cfg.n_paths, 300, 900, 100, 0, seed)


def test_cone_exit_paired_walks():
    raw = {"name": "cone-exit", "seed": 2, "engine": "wos",
           "params": {"dims": [2], "axis_points": 2, "lower_half_points": 2, "derivative_points": 2, "n_paths": 1000}}
    with patch("harnacklab.scenarios.estimate_uv", side_effect=_walks) as walks:
        outcome = execute(parse_config(json.dumps(raw)))
    assert walks.call_count == 5
    by_claim = _by_claim(outcome.rows)
    assert [r.passed for r in by_claim["escape-ratio-lower-bound"]] == [True] * 3
    assert by_claim["axis-projection-ratio"][0].measured == pytest.approx(1.0)
    assert len(outcome.tables["estimates"][1]) == 5


def _ratio_bound(pts, dom, cone, cfg, seed, *args, **kwargs):
    estimates = [PairedEstimate(tuple(map(float, p)), cfg.n_paths, 400, 800, 200, 0, seed) for p in pts]
    return RatioBound(estimates=estimates, double_ratio=1.0, double_ratio_ci=(0.9, 1.1))


def test_bhp_uniform_over_the_family():
    with patch("harnacklab.scenarios.estimate_ratio_bound", side_effect=_ratio_bound) as bound:
        outcome = execute(_config("bhp-uniform", 3, n_paths=1000))
    assert bound.call_count == len(adversarial_family())
    by_claim = _by_claim(outcome.rows)
    assert len(by_claim["uniform-ratio-positive"]) == 5
    assert len(by_claim["escape-ratio-lower-bound"]) == 5
    assert by_claim["uniform-ratio-stability"][0].measured == pytest.approx(1.0)
    assert outcome.passed


def test_bhp_uniform_on_the_grid():
    raw = {"name": "bhp-uniform", "seed": 3, "engine": "fd", "obstacles": SLIT,
           "points": [[0.25, 0.0], [0.3, 0.2]], "params": {"h": 1 / 32}}
    by_claim = _by_claim(execute(parse_config(json.dumps(raw))).rows)
    assert by_claim["uniform-ratio-positive"][0].passed
    assert by_claim["uniform-ratio-positive"][0].detail == "config"
    assert len(by_claim["escape-ratio-lower-bound"]) == 1


def _punctured_walks(start, dom, cone, cfg, seed, *args, **kwargs):
    n = cfg.n_paths
    shape = dom.obstacles[0]
    if isinstance(shape, BallObstacle):
        hits = round(n * annulus_hit_probability(start[0], shape.radius, 3))
        return PairedEstimate(tuple(start), n, 0, n - hits, hits, 0, seed)
    if start[0] == 0.0:
        return PairedEstimate(tuple(start), n, n // 4, n // 2, n // 2, 0, seed)
    # from y no walk squeezes through the hole
    return PairedEstimate(tuple(start), n, 0, n // 2, n // 2, 0, seed)


def test_counterexample_slope_uses_ball_hits():
    cfg = _config("counterexample-d3", 5, n_paths=100_000, plate_paths=2000)
    with patch("harnacklab.scenarios.estimate_uv", side_effect=_punctured_walks) as walks:
        outcome = execute(cfg)
    assert sorted({call.args[3].n_paths for call in walks.call_args_list}) == [2000, 100_000]
    by_claim = _by_claim(outcome.rows)
    assert [r.passed for r in by_claim["annulus-hitting-law"]] == [True] * 3
    assert [r.passed for r in by_claim["counterexample-symmetric-split"]] == [True] * 3
    assert all(math.isnan(r.measured) for r in by_claim["counterexample-ratio-growth"])
    slope = by_claim["counterexample-slope"][0]
    assert slope.passed and slope.measured < 0.1


def test_counterexample_without_ball_hits_names_the_claim():
    def missing(start, dom, cone, cfg, seed, *args, **kwargs):
        return PairedEstimate(tuple(start), cfg.n_paths, 0, cfg.n_paths, 0, 0, seed)

    with patch("harnacklab.scenarios.estimate_uv", side_effect=missing):
        with pytest.raises(ScenarioError) as info:
            execute(_config("counterexample-d3", 5, n_paths=1000))
    assert info.value.claim == "counterexample-slope"


def _qhbc_patches(qh_error=0.01, ss_error=0.01):
    fit = QhbcFit(1.0, 0.05, 0.0, 10, (0.0, 0.0), 1.0)
    exact = 8 * math.pi / 3

    def integral(dom, x0, tau, h, stencil):
        value = exact * (1 + ss_error) if tau == 0.5 else math.inf
        return SsResult(tau, value, value, tau >= 2)

    return (
        patch("harnacklab.scenarios.QhGraph"),
        patch("harnacklab.scenarios.qh_distance", return_value=QhDistance(math.log(2) * (1 + qh_error), 0.7, 0.001)),
        patch("harnacklab.scenarios.qhbc_fit", return_value=fit),
        patch("harnacklab.scenarios.ss_integral", side_effect=integral),
        patch("harnacklab.scenarios.ss_sweep", return_value=SsSweep([SsResult(0.5, 1.0, 1.0, False)])),
        patch("harnacklab.scenarios.good_set_check", side_effect=[_good_report(True), _good_report(False)]),
    )


def _run_qhbc(**errors):
    graph, distance, fit, integral, sweep, good = _qhbc_patches(**errors)
    with graph, distance, fit, integral, sweep, good:
        return execute(_config("qhbc-suite", 6))


def test_qhbc_suite_rows():
    outcome = _run_qhbc()
    assert outcome.passed
    by_claim = _by_claim(outcome.rows)
    assert by_claim["ss-largest-stable-tau"][0].measured == 0.5
    assert len(by_claim["qhbc-spiral-growth"]) == 3
    assert [row[0] for row in outcome.tables["goodsets"][1]] == ["thick-slit", "tangency-cusp"]


def test_qhbc_suite_tolerances():
    by_claim = _by_claim(_run_qhbc(qh_error=0.025, ss_error=0.04).rows)
    assert not by_claim["qh-ball-distance"][0].passed
    assert not by_claim["ss-ball-value"][0].passed


def test_carleson_constants_per_family():
    with patch("harnacklab.scenarios.good_set_check", return_value=_good_report()):
        outcome = execute(_config("carleson", 7, h=1 / 64))
    by_claim = _by_claim(outcome.rows)
    assert len(by_claim["good-set-slit"]) == 6
    assert len(by_claim["carleson-bound"]) == 6
    assert all(r.measured > 0 for r in by_claim["carleson-bound"])
    assert [r.detail for r in by_claim["carleson-family-stability"]] == ["slit-length", "slit-teeth"]


def test_bhp_2d_general_dumps_fields(tmp_path):
    field = SimpleNamespace(value=np.full(5, 0.4), coarse=np.full(5, 0.41), error=np.full(5, 0.01), solution="sol")
    with (
        patch("harnacklab.scenarios.good_set_check", return_value=_good_report()),
        patch("harnacklab.scenarios.harmonic_measure_fd_with_error", return_value=field) as fd,
        patch("harnacklab.scenarios.dump_solution") as dump,
    ):
        outcome = execute(_config("bhp-2d-general", 8, dump_dir=str(tmp_path)))
    assert fd.call_count == 12
    assert dump.call_count == 12
    assert dump.call_args_list[0].args == ("sol", os.path.join(str(tmp_path), "slit-length-slit-0.6-upper"))
    by_claim = _by_claim(outcome.rows)
    assert all(r.measured == pytest.approx(1.0) for r in by_claim["bhp2d-double-ratio"])
    assert outcome.passed


def test_bhp_2d_general_query_points_keep_clear_of_the_slit():
    with (
        patch("harnacklab.scenarios.good_set_check", return_value=_good_report()),
        patch("harnacklab.scenarios.harmonic_measure_fd_with_error") as fd,
    ):
        fd.return_value = SimpleNamespace(value=np.ones(5), coarse=np.ones(5), error=np.zeros(5), solution=None)
        execute(_config("bhp-2d-general", 8))
    dom, _, pts, h = fd.call_args.args
    assert h == pytest.approx(1 / 512)
    assert np.min(dom.obstacle_distance(pts)) >= 2 * (2 * h)


def _crosscheck_fd(dom, target, pts, h):
    return SimpleNamespace(value=np.array([0.6, 0.7]), error=np.array([0.001, 0.001]))


def _crosscheck(shift):
    def walks(start, dom, cone, cfg, seed, *args, **kwargs):
        count_v = (600 if start[0] == 0.25 else 700) + shift
        return PairedEstimate(tuple(map(float, start)), cfg.n_paths, 100, count_v, cfg.n_paths - count_v, 0, seed)

    raw = {"name": "engine-crosscheck", "seed": 9, "obstacles": SLIT, "params": {"n_paths": 1000}}
    with (
        patch("harnacklab.scenarios.harmonic_measure_fd_with_error", side_effect=_crosscheck_fd),
        patch("harnacklab.scenarios.estimate_uv", side_effect=walks),
    ):
        return execute(parse_config(json.dumps(raw))).rows


def test_engine_crosscheck_agreement():
    rows = _crosscheck(0)
    assert [r.claim for r in rows] == ["engine-agreement"] * 2
    assert all(r.passed for r in rows)
    assert not any(r.passed for r in _crosscheck(100))
