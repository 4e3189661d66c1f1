import json
import math

import numpy as np
import pytest

from sllnlab.errors import ConfigError, ParameterError
from sllnlab.io import read_path_csv
from sllnlab.montecarlo import (SUMMARY_COLUMNS, ExperimentConfig, Moments, RunResult,
                                compare_to_target, load_config, merge_all, run)
from sllnlab.process import ProcessParams, expected_path_value, simulate_path
from sllnlab.sampling import SeededStream


def wk(reps, grid=(10, 100), **kw):
    params = {"gamma": 2.0, "tau": 1.0}
    params.update(kw.pop("params", {}))
    return ExperimentConfig("wk_convergence", params, replications=reps, base_seed=kw.pop("seed", 0),
                            grid=grid, **kw)


def test_wk_mean_near_exact_target():
    res = run(wk(200))
    p = res.point(100)
    assert abs(p.mean - 1 / 3) < 0.05
    assert p.target == pytest.approx(expected_path_value(ProcessParams.power(2.0, 1.0), 100))
    assert abs(p.z) < 4


def test_single_replication_matches_simulate_path():
    res = run(wk(1, grid=(5, 50), seed=17))
    path = simulate_path(SeededStream(17), ProcessParams.power(2.0, 1.0), 50)
    assert res.point(5).mean == path.at(5)
    assert res.point(50).mean == path.at(50)
    assert res.point(50).se == 0.0


def test_hill_ratio_agrees_with_path_ratio():
    hill = run(ExperimentConfig("hill_ratio", {"gamma": 2.0, "tau": 1.0, "n": 2000,
                                               "exponent_mode": "gamma"},
                                replications=400, grid=(50,)))
    ratio = run(wk(2000, grid=(50,), params={"statistic": "ratio"}, seed=10**6))
    a, b = hill.point(50), ratio.point(50)
    assert abs(a.mean - b.mean) < 3 * math.hypot(a.se, b.se)
    assert a.target == pytest.approx(b.target, rel=1e-12)


def test_payload_deterministic():
    a, b = run(wk(50)), run(wk(50))
    assert a.payload() == b.payload()
    assert a.config_hash == b.config_hash
    assert a.seeds == (0, 49)


def test_standard_error_scales():
    small = run(wk(500, grid=(100,))).point(100).se
    large = run(wk(2000, grid=(100,), seed=5000)).point(100).se
    assert abs(small / large - 2.0) < 0.4


def test_parallel_matches_serial():
    serial = run(wk(300, chunk_size=32))
    par = run(wk(300, chunk_size=32, workers=3))
    assert par.payload() == serial.payload()
    other = run(wk(300, chunk_size=7))
    for p, q in zip(serial.points, other.points):
        assert p.mean == pytest.approx(q.mean, abs=1e-12)
        assert p.se == pytest.approx(q.se, abs=1e-12)
        assert p.q50 == q.q50


def test_merge_all_matches_direct():
    x = np.random.default_rng(2).normal(size=(1000, 3))
    merged = merge_all([Moments.of(x[i:i + 37]) for i in range(0, 1000, 37)])
    assert merged.count == 1000
    assert np.allclose(merged.mean, x.mean(axis=0), atol=1e-14)
    assert np.allclose(merged.m2, ((x - x.mean(axis=0)) ** 2).sum(axis=0), rtol=1e-12)
    with pytest.raises(ParameterError):
        merge_all([])


def test_quantiles_ordered():
    for p in run(wk(200)).points:
        assert p.q05 <= p.q50 <= p.q95


def test_config_validation():
    with pytest.raises(ConfigError):
        wk(0).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig("nope", grid=(1,)).validate()
    with pytest.raises(ConfigError):
        wk(5, grid=(10, 5)).validate()
    with pytest.raises(ConfigError):
        wk(5, grid=()).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment_id": "wk_convergence", "colour": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment_id": "wk_convergence", "grid": [1], "k_grid": [2]})
    with pytest.raises(ConfigError):
        run(ExperimentConfig("hill_ratio", {"n": 100}, grid=(100,)))


def test_output_checked_before_compute(tmp_path):
    cfg = wk(10**9, output_json=str(tmp_path / "missing" / "out.json"))
    with pytest.raises(FileNotFoundError):
        run(cfg)


def test_config_hash_stable(tmp_path):
    cfg = wk(20, output_csv="a.csv", workers=2)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.config_hash() == cfg.config_hash()
    moved = wk(20, output_csv="b.csv", workers=1)
    assert moved.config_hash() == cfg.config_hash()
    assert wk(21).config_hash() != cfg.config_hash()
    p = tmp_path / "c.yaml"
    p.write_text("experiment_id: wk_convergence\nparams: {gamma: 2.0, tau: 1.0}\n"
                 "replications: 20\nk_grid: [10, 100]\n")
    assert load_config(p).config_hash() == wk(20).config_hash()
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_compare_to_target():
    res = run(wk(100))
    t = compare_to_target(res, 1 / 3)
    assert [r[0] for r in t.rows] == [10, 100]
    assert t.rows[1][3] == pytest.approx(res.point(100).mean - 1 / 3)
    assert compare_to_target(res, {10: 0.3, 100: 0.3}).rows[0][2] == 0.3
    assert compare_to_target(res, lambda x: 0.0).worst_z > 0
    with pytest.raises(ParameterError):
        compare_to_target(res, [1.0])
    with pytest.raises(ParameterError):
        compare_to_target(res, {10: 0.3})


def test_json_and_csv_outputs(tmp_path):
    res = run(wk(30, output_json="r.json", output_csv="r.csv"), output_dir=tmp_path)
    back = RunResult.from_dict(json.loads((tmp_path / "r.json").read_text()))
    assert back.payload() == res.payload()
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(SUMMARY_COLUMNS)
    assert float(lines[2].split(",")[1]) == res.point(100).mean


def test_other_experiments_run():
    g = run(ExperimentConfig("gcip_sweep", {"variance_exponent": 0.0, "delta": 1.0},
                             replications=2000, grid=(10, 100)))
    for p in g.points:
        assert abs(p.mean - p.target) < 4 * p.se
    m = run(ExperimentConfig("maxvar_probe", {"r": 2.0}, replications=1000, grid=(50,)))
    # Doob: E max S_l**2 <= 4 E S_n**2
    assert 1.0 < m.point(50).mean < 4.0
    assert m.extras["probability_constant"][0]["constant"] <= 1.0 + 3 * m.extras["probability_constant"][0]["se"]
    c = run(ExperimentConfig("condition_suite", {"gamma": 2.0, "tau": 1.0}, grid=(1000,)))
    assert set(c.extras["verdicts"].values()) == {"bounded"}
    assert c.points == []


def test_centered_statistic_mean_zero():
    res = run(wk(400, params={"statistic": "centered"}))
    for p in res.points:
        assert p.target == 0.0
        assert abs(p.mean) < 4 * p.se


def test_read_path_csv_roundtrip(tmp_path):
    from sllnlab.io import PATH_COLUMNS, path_rows, write_csv
    path = simulate_path(SeededStream(4), ProcessParams.power(1.0, 2.0), 30)
    f = tmp_path / "p.csv"
    write_csv(f, PATH_COLUMNS, path_rows(path))
    back = read_path_csv(f, seed=4)
    assert np.array_equal(back.values, path.values)
