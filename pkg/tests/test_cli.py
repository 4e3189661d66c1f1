import json

import numpy as np
import pytest
from click.testing import CliRunner

from sllnlab.cli import main
from sllnlab.io import path_from_dict
from sllnlab.process import ProcessParams, product_mean, simulate_path
from sllnlab.sampling import SeededStream


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args, **kw):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False, **kw)


def test_simulate_wk_byte_identical(runner):
    a = invoke(runner, "simulate-wk", "--gamma", 2, "--kmax", 200, "--seed", 7)
    b = invoke(runner, "simulate-wk", "--gamma", 2, "--kmax", 200, "--seed", 7)
    assert a.exit_code == 0
    assert a.output == b.output
    lines = a.output.splitlines()
    assert lines[0] == "k,value,raw"
    assert len(lines) == 201
    path = simulate_path(SeededStream(7), ProcessParams.power(2.0, 1.0), 200)
    assert float(lines[-1].split(",")[1]) == path.at(200)


def test_simulate_wk_json_roundtrip(runner, tmp_path):
    out = tmp_path / "p.json"
    r = invoke(runner, "simulate-wk", "--gamma", 1.5, "--tau", 2, "--kmax", 50, "--seed", 3,
               "-o", out, "--format", "json")
    assert r.exit_code == 0 and r.output == ""
    d = json.loads(out.read_text())
    back = path_from_dict(d)
    ref = simulate_path(SeededStream(3), ProcessParams.power(1.5, 2.0), 50)
    assert np.array_equal(back.values, ref.values)
    assert d["params"]["gamma"] == 1.5


def test_output_dir_environment(runner, tmp_path):
    r = invoke(runner, "simulate-wk", "--gamma", 2, "--kmax", 10, "-o", "rel.csv",
               env={"SLLNLAB_OUTPUT_DIR": str(tmp_path)})
    assert r.exit_code == 0
    assert (tmp_path / "rel.csv").read_text().startswith("k,value,raw")


def test_oracle_mean_and_friends(runner):
    assert invoke(runner, "oracle", "mean", "--j", 10, "--k", 10, "--gamma", 3).output.strip() == "1"
    out = float(invoke(runner, "oracle", "mean", "--j", 2, "--k", 9, "--gamma", 1.5).output)
    assert out == product_mean(2, 9, 1.5)
    for args in (("var", "--j", 2, "--k", 9, "--gamma", 1),
                 ("cov", "--i", 2, "--j", 4, "--k", 9, "--gamma", 1),
                 ("newman", "--j", 2, "--k", 9, "--gamma", 1),
                 ("path-mean", "--k", 100, "--gamma", 2),
                 ("limit", "--gamma", 2)):
        r = invoke(runner, "oracle", *args)
        assert r.exit_code == 0 and r.output.strip()
    lim = invoke(runner, "oracle", "limit", "--gamma", 2, "--tau", 1).output
    assert abs(float(lim.split()[0]) - 1 / 3) < 1e-3


def test_check_conditions_evt(runner):
    r = invoke(runner, "check-conditions", "evt", "--gamma", 2, "--tau", 1, "--kmax", 10000)
    assert r.exit_code == 0
    lines = r.output.strip().splitlines()
    assert len(lines) == 5
    assert all(": bounded " in line for line in lines)


def test_check_conditions_other_targets(runner, tmp_path):
    r = invoke(runner, "check-conditions", "kolmogorov", "--variance-exponent", 0, "--nmax", 5000)
    assert ": bounded" in r.output
    r = invoke(runner, "check-conditions", "variance-growth", "--variance-exponent", 1, "--nu", 0,
               "--nmax", 5000)
    assert ": diverging" in r.output
    r = invoke(runner, "check-conditions", "newman", "--lag-exponent", 2, "--lag-scale", 1)
    assert r.output.startswith("newman_sigma2: ")
    out = tmp_path / "rep.csv"
    r = invoke(runner, "check-conditions", "cesaro", "--nmax", 2000, "-o", out)
    assert r.exit_code == 0
    assert out.read_text().splitlines()[0] == "condition_id,index,value"


def test_hill_simulated_and_input(runner, tmp_path):
    r = invoke(runner, "hill", "--simulate-n", 1000, "--gamma", 2, "--k", "10:30:10", "--y0", 0)
    assert r.exit_code == 0
    lines = r.output.splitlines()
    assert len(lines) == 4 and "np." not in r.output
    data = tmp_path / "x.csv"
    data.write_text("value\n1\n2\n4\n8\n")
    r = invoke(runner, "hill", "--input", data, "--log", "--k", "1,2")
    assert r.exit_code == 0
    # log spacings are all log 2; weighted sum over f(k) = 3 log2 / 2 at k = 2
    assert float(r.output.splitlines()[2].split(",")[1]) == pytest.approx(1.5 * np.log(2))


def test_exit_codes(runner, tmp_path):
    r = runner.invoke(main, ["simulate-wk", "--gamma", "-1", "--kmax", "10"])
    assert r.exit_code == 2
    r = runner.invoke(main, ["simulate-wk", "--kmax", "10"])
    assert r.exit_code == 2
    r = runner.invoke(main, ["oracle", "mean", "--j", "0", "--k", "3", "--gamma", "1"])
    assert r.exit_code == 2
    r = runner.invoke(main, ["simulate-wk", "--gamma", "2", "--kmax", "10",
                             "-o", str(tmp_path / "nope" / "x.csv")])
    assert r.exit_code == 1
    r = runner.invoke(main, ["check-conditions", "newman", "--lag-exponent", "1"])
    assert r.exit_code == 1


def test_experiment_command(runner, tmp_path):
    cfg = tmp_path / "e.yaml"
    cfg.write_text("experiment_id: wk_convergence\nparams: {gamma: 2.0, tau: 1.0}\n"
                   "replications: 50\nk_grid: [10, 100]\noutput_json: r.json\n")
    r = invoke(runner, "experiment", cfg, "--output-dir", tmp_path)
    assert r.exit_code == 0
    assert r.output.splitlines()[0] == "x,mean,se,q05,q50,q95,target,z"
    assert json.loads((tmp_path / "r.json").read_text())["seeds"] == [0, 49]
    bad = tmp_path / "b.yaml"
    bad.write_text("experiment_id: nope\ngrid: [1]\n")
    assert runner.invoke(main, ["experiment", str(bad)]).exit_code == 2
    suite = tmp_path / "s.yaml"
    suite.write_text("experiment_id: condition_suite\nparams: {gamma: 2.0}\ngrid: [1000]\n")
    r = invoke(runner, "experiment", suite)
    assert ": bounded" in r.output and "diverging" not in r.output


def test_probe_maxvar(runner, tmp_path):
    r = runner.invoke(main, ["probe-maxvar", "--n", "20", "--reps", "1000", "-o", str(tmp_path / "m.csv")])
    assert r.exit_code == 0
    assert (tmp_path / "m.csv").read_text().startswith("lambda,ratio")
    assert runner.invoke(main, ["probe-maxvar", "--reps", "10"]).exit_code == 2


@pytest.mark.parametrize("cmd", [[], ["simulate-wk"], ["hill"], ["check-conditions"], ["probe-maxvar"],
                                 ["experiment"], ["oracle"], ["oracle", "mean"], ["oracle", "limit"]])
def test_help(runner, cmd):
    r = runner.invoke(main, cmd + ["--help"])
    assert r.exit_code == 0
    assert "Usage" in r.output


def test_condition_report_json_roundtrip(runner, tmp_path):
    from sllnlab.conditions import ConditionReport
    out = tmp_path / "rep.json"
    r = invoke(runner, "check-conditions", "gcip", "--variance-exponent", 0.5, "--nmax", 1000,
               "-o", out, "--format", "json")
    assert r.exit_code == 0
    reports = [ConditionReport.from_dict(d) for d in json.loads(out.read_text())]
    assert [rep.condition_id for rep in reports] == ["gcip1", "gcip2"]
    assert [rep.summary_line() for rep in reports] == r.output.strip().splitlines()
