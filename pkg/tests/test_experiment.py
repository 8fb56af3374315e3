import csv
import json

import numpy as np
import pytest

from rscmd.experiment import (
    ENSEMBLE_HEADER,
    FIG2_HEADER,
    FIG3_HEADER,
    FIG4_HEADER,
    SUMMARY_HEADER,
    ExperimentConfig,
    fig2_rows,
    fig3_rows,
    fig4_rows,
    main,
    run_experiment,
)
from rscmd.scenario import SystemConfig

SMALL = SystemConfig(n_tx=4, n_users=4, seed=5)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def single(tmp_path_factory):
    out = tmp_path_factory.mktemp("single")
    results = run_experiment(ExperimentConfig(SMALL, 1, out))
    return out, results[0]


def test_header_contract():
    assert FIG2_HEADER == ["iter", "event", "ee_mbit_per_j", "common_rate_mbps"]
    assert FIG3_HEADER == ["sd_count", "ee_mbit_per_j", "common_share_pct"]
    assert FIG4_HEADER == ["event", "p_avail_w", "ee_mbit_per_j"]
    assert SUMMARY_HEADER == ["drop", "baseline_ee", "peak_ee", "peak_sd_count", "rel_gain_pct", "feasible"]


def test_single_drop_files(single):
    out, res = single
    for name, header in (("fig2.csv", FIG2_HEADER), ("fig3.csv", FIG3_HEADER), ("fig4.csv", FIG4_HEADER),
                         ("summary.csv", SUMMARY_HEADER)):
        assert _read(out / name)[0] == header
    summary = _read(out / "summary.csv")
    assert len(summary) == 2 and summary[1][-1] == ("true" if res.feasible else "false")
    assert (out / "trace.csv").exists() and (out / "grouping.csv").exists()


def test_figures_are_consistent(single):
    _, res = single
    assert res.feasible
    trace = res.trace
    f2, f3, f4 = fig2_rows(trace), fig3_rows(trace), fig4_rows(trace)
    assert len(f3) == len(f4) == len(trace.events) + 1
    # last fig2 row of each event is the event's converged solution
    last = {}
    for row in f2:
        last[row[1]] = row[2]
    for n in range(len(f3)):
        assert f3[n][1] == f4[n][2] == last[n]
    iters = [r[0] for r in f2]
    assert iters == list(range(len(f2)))
    shares = [float(r[2]) for r in f3]
    assert all(0 <= s <= 100 for s in shares)
    gain = float(_read(single[0] / "summary.csv")[1][4])
    curve = np.array([float(r[1]) for r in f3])
    assert gain == pytest.approx(100 * (curve.max() - curve[0]) / curve[0], rel=1e-12)


def test_ensemble_row_count_and_determinism(tmp_path):
    system = SystemConfig(n_tx=2, n_users=2, seed=11)
    a = tmp_path / "a"
    b = tmp_path / "b"
    run_experiment(ExperimentConfig(system, 50, a))
    run_experiment(ExperimentConfig(system, 50, b))
    summary = _read(a / "summary.csv")
    assert len(summary) == 51
    assert [int(r[0]) for r in summary[1:]] == list(range(50))
    assert _read(a / "ensemble.csv")[0] == ENSEMBLE_HEADER
    files = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    assert files == sorted(p.relative_to(b) for p in b.rglob("*.csv"))
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_drop_seeds_are_distinct():
    cfg = ExperimentConfig(SystemConfig(seed=2**64 - 1), 3)
    assert [cfg.drop_seed(d) for d in range(3)] == [2**64 - 1, 0, 1]
    with pytest.raises(ValueError):
        ExperimentConfig(SMALL, 0)


def test_cli_seed_override_and_debug(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_tx": 3, "n_users": 3, "seed": 1}))
    out = tmp_path / "run"
    assert main(["--config", str(cfg), "--seed", "0x10", "--out", str(out), "--debug"]) == 0
    assert "feasible drops" in capsys.readouterr().out
    assert (out / "debug_iterations.csv").exists()
    ref = tmp_path / "ref"
    run_experiment(ExperimentConfig(SystemConfig(n_tx=3, n_users=3, seed=16), 1, ref))
    assert (out / "fig3.csv").read_bytes() == (ref / "fig3.csv").read_bytes()


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n_users": 0}))
    assert main(["--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["--config", str(tmp_path / "missing.json")]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = tmp_path / "ok.json"
    cfg.write_text(json.dumps({"n_tx": 2, "n_users": 2}))
    assert main(["--config", str(cfg), "--out", str(blocker / "sub")]) == 1
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["--seed", "-3"])
