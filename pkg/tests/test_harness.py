from dataclasses import replace
import csv
import os

import numpy as np
import pytest

from cmrac import harness
from cmrac.cli import main, verify
from cmrac.harness import (
    MonteCarloConfig, ParseError, ValidationError, draw_sample, evaluate_sample,
    load_config, parse_config, run_monte_carlo, write_results,
)

BUNDLED = harness.bundled_config_path().read_text(encoding="utf-8")


def write_cfg(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def short(cfg, n=3, t_end=12.0):
    return replace(cfg, sim=replace(cfg.sim, t_end=t_end), monte_carlo=replace(cfg.monte_carlo, n_samples=n))


def test_bundled_config_is_the_benchmark(bench):
    m, r, s = bench.model, bench.ref, bench.sim
    np.testing.assert_array_equal(m.A, [[0, 1], [1, 0]])
    np.testing.assert_array_equal(m.b, [0, 1])
    assert m.k_p == 2.0
    np.testing.assert_array_equal(m.theta, [-0.1])
    np.testing.assert_array_equal(r.A_r, [[0, 1], [-1, -2]])
    np.testing.assert_array_equal(r.b_r, [0, 1])
    assert (s.eps1, s.eps2, s.f, s.command.level, s.estimate_error) == (1.0, 0.01, 1.0, 2.0, 0.5)
    mc = bench.monte_carlo
    assert mc.n_samples == 100 and mc.level == (2.0, 6.0) and mc.estimate_error == (0.2, 0.8)
    assert mc.x0 == ((0.0, 1.0), (-0.1, 0.1))


def test_load_config_from_file(tmp_path, bench):
    cfg = load_config(write_cfg(tmp_path, BUNDLED))
    assert cfg.sim == bench.sim
    np.testing.assert_array_equal(cfg.model.W_T, bench.model.W_T)


def test_zero_cutoff_rejected():
    with pytest.raises(ValidationError, match="f must be positive"):
        parse_config(BUNDLED.replace("f = 1.0", "f = 0.0"))


def test_defaults_applied():
    text = BUNDLED.replace("dt = 1e-3\n", "").replace("t_end = 40.0\n", "")
    cfg = parse_config(text)
    assert cfg.sim.dt == 1e-3 and cfg.sim.t_end == 40.0 and cfg.sim.guard == 1e6


def test_parse_error_has_location():
    with pytest.raises(ParseError, match="line"):
        parse_config(BUNDLED.replace("k_p = 2.0", "k_p = = 2.0"))


@pytest.mark.parametrize("old,new,match", [
    ("k_p = 2.0", "k_p = 2.0\nspeed = 3", "unknown keys: speed"),
    ("[reference]", "[nowhere]", "missing \\[reference\\]"),
    ("xr0 = [0.0, 0.0]", "xr0 = [0.0]", "xr0 must have 2 entries"),
    ("basis = [[0, 2]]", "basis = [[2]]", "basis"),
    ("basis = [[0, 2]]", 'basis = ["tan_x1"]', "unknown builtin"),
    ("A_r = [[0.0, 1.0], [-1.0, -2.0]]", "A_r = [[0.0, 1.0], [1.0, 2.0]]", "reference"),
    ("A = [[0.0, 1.0], [1.0, 0.0]]", "A = [[1.0, 1.0], [1.0, 0.0]]", "matching"),
    ("n_samples = 100", "n_samples = 0", "n_samples"),
    ("level = [2.0, 6.0]", "level = [6.0, 2.0]", "range level"),
    ('law = "combined"', 'law = "lms"', "law"),
])
def test_validation_errors(old, new, match):
    assert old in BUNDLED
    with pytest.raises(ValidationError, match=match):
        parse_config(BUNDLED.replace(old, new))


def test_draws_are_keyed_by_index():
    mc = MonteCarloConfig(seed=7)
    a = [draw_sample(mc, i) for i in range(10)]
    b = [draw_sample(mc, i) for i in reversed(range(10))][::-1]
    assert a == b
    for level, frac, x0 in a:
        assert 2 <= level <= 6 and 0.2 <= frac <= 0.8
        assert 0 <= x0[0] <= 1 and -0.1 <= x0[1] <= 0.1
    assert draw_sample(replace(mc, seed=8), 0) != a[0]


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_same_seed_gives_identical_csv(tmp_path, bench):
    cfg = short(bench)
    for d in ("a", "b"):
        write_results(run_monte_carlo(cfg), tmp_path / d, cfg)
    assert read_bytes(tmp_path / "a" / "montecarlo.csv") == read_bytes(tmp_path / "b" / "montecarlo.csv")


def test_execution_order_does_not_change_rows(tmp_path, bench):
    cfg = short(bench, n=4)
    forward = run_monte_carlo(cfg)
    backward = [harness._evaluate_index((cfg, i)) for i in reversed(range(4))]
    write_results(forward, tmp_path / "f", cfg)
    write_results(backward, tmp_path / "b", cfg)
    assert read_bytes(tmp_path / "f" / "montecarlo.csv") == read_bytes(tmp_path / "b" / "montecarlo.csv")


@pytest.mark.slow
def test_worker_pool_matches_serial(tmp_path, bench):
    cfg = short(bench, n=3, t_end=6.0)
    write_results(run_monte_carlo(cfg), tmp_path / "s", cfg)
    write_results(run_monte_carlo(cfg, workers=2), tmp_path / "p", cfg)
    assert read_bytes(tmp_path / "s" / "montecarlo.csv") == read_bytes(tmp_path / "p" / "montecarlo.csv")


def test_collapsed_ranges_match_single_run(tmp_path, bench):
    mc = replace(bench.monte_carlo, n_samples=1, level=(2.0, 2.0), estimate_error=(0.5, 0.5),
                 x0=((0.0, 0.0), (0.0, 0.0)))
    cfg = replace(bench, monte_carlo=mc, sim=replace(bench.sim, t_end=10.0))
    (res,) = run_monte_carlo(cfg)
    text = BUNDLED.replace("t_end = 40.0", "t_end = 10.0")
    assert main(["simulate", "--config", write_cfg(tmp_path, text), "--out", str(tmp_path / "sim")]) == 0
    with open(tmp_path / "sim" / "trajectory.csv", encoding="utf-8") as fh:
        last = list(csv.DictReader(fh))[-1]
    assert last["chi_norm"] == harness._fmt(res.chi_final)


def test_empty_results_write_header_only(tmp_path, bench):
    write_results([], tmp_path, bench)
    lines = (tmp_path / "montecarlo.csv").read_text(encoding="utf-8").splitlines()
    assert lines == [",".join(harness.montecarlo_header(2))]


def test_trajectory_csv_schema(tmp_path, bench, nominal):
    res, traj = evaluate_sample(short(bench), 0, 2.0, 0.5, (0.0, 0.0), keep_trajectory=True)
    write_results([res], tmp_path, bench, {0: traj})
    text = (tmp_path / "trajectory_0.csv").read_text(encoding="utf-8")
    assert text.endswith("\n")
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == nominal.csv_header()
    assert len(rows) == traj.t.size + 1
    # 17 significant digits round-trip exactly
    np.testing.assert_array_equal(np.array(rows[1:], dtype=float), traj.csv_rows())


def test_summary_reports_rate_constants(tmp_path, bench):
    write_results([], tmp_path, bench)
    summary = (tmp_path / "summary.txt").read_text(encoding="utf-8").splitlines()
    assert "kappa_bar = 0.5" in summary and "kappa = 0.25" in summary


def test_sample_result_fields(bench):
    res, _ = evaluate_sample(short(bench, t_end=40.0), 3, 4.0, 0.3, (0.5, 0.05))
    assert res.reached and res.within_bound
    assert res.t_q < res.t_hit and res.elapsed == pytest.approx(res.t_hit - res.t_q)
    assert res.rate > 0 and res.diverged_at is None
    miss, _ = evaluate_sample(short(bench, t_end=1.0), 3, 4.0, 0.3, (0.5, 0.05))
    assert miss.t_q is None and miss.t_hit is None and miss.elapsed is None and miss.rate is None


def test_diverged_sample_is_flagged(bench):
    cfg = replace(bench, sim=replace(bench.sim, guard=1.0, t_end=10.0))
    res, _ = evaluate_sample(cfg, 0, 2.0, 0.5, (0.0, 0.0))
    assert res.diverged_at is not None and not res.reached


def test_cli_simulate_gradient(tmp_path):
    out = tmp_path / "g"
    path = write_cfg(tmp_path, BUNDLED.replace("t_end = 40.0", "t_end = 5.0"))
    assert main(["simulate", "--config", path, "--law", "gradient", "--out", str(out)]) == 0
    assert sorted(os.listdir(out)) == ["summary.txt", "trajectory.csv"]
    with open(out / "trajectory.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    # eta reports memory status under either law; only the combined law uses it
    etas = [row["eta"] for row in rows]
    first = etas.index("1")
    assert set(etas[:first]) == {"0"} and set(etas[first:]) == {"1"}


def test_cli_montecarlo(tmp_path):
    path = write_cfg(tmp_path, BUNDLED.replace("t_end = 40.0", "t_end = 8.0"))
    out = tmp_path / "mc"
    assert main(["montecarlo", "--config", path, "--samples", "2", "--seed", "5", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "montecarlo.csv", encoding="utf-8")))
    assert [r["sample_index"] for r in rows] == ["0", "1"]
    # short horizon: samples that miss the threshold get their trajectory written
    missed = [r["sample_index"] for r in rows if r["within_bound"] != "1"]
    assert sorted(os.listdir(out)) == sorted(
        ["montecarlo.csv", "summary.txt"] + [f"trajectory_{i}.csv" for i in missed]
    )


def test_cli_verify_passes_on_benchmark(tmp_path, capsys):
    assert main(["verify", "--config", write_cfg(tmp_path, BUNDLED)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 6


def test_verify_reports_violations(bench):
    # memory that never fills: the completion check fails
    cfg = replace(bench, sim=replace(bench.sim, eps1=1e9, t_end=5.0))
    lines = []
    assert verify(cfg, log=lines.append) >= 1
    assert any(line.startswith("FAIL memory completes") for line in lines)


def test_cli_bad_config_exit_code(tmp_path, capsys):
    path = write_cfg(tmp_path, BUNDLED.replace("f = 1.0", "f = 0.0"))
    assert main(["verify", "--config", path]) == 2
    assert "f must be positive" in capsys.readouterr().err
