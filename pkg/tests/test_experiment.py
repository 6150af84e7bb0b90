import math
from dataclasses import replace

import numpy as np
import pytest

from ldaucid.checkpoint import load_checkpoint, save_checkpoint
from ldaucid.cli import main
from ldaucid.config import config_from_text
from ldaucid.exceptions import LdaucidError, ParseError
from ldaucid.experiment import final_accuracies, run_ablation, run_experiment, task0_drop
from ldaucid.metrics import HEADER, MetricsRecord, emit_learning_curves, read_metrics_csv, write_metrics_csv

SMALL = """\
run_id: small
seed: 1
stream:
  n: 120
  n_test: 100
  domains:
    - {kind: moons, rotation: 0}
    - {kind: moons, rotation: 20}
    - {kind: moons, rotation: 40}
hyper:
  epochs_source: 6
  epochs_adapt: 3
  l_projections: 8
  tau: 0.6
model:
  encoder: [8, 4]
"""


@pytest.fixture
def cfg():
    return config_from_text(SMALL)


def _rec(**kw):
    base = dict(run_id="r", seed=0, time_step=0, epoch=1, domain_id=0, accuracy=0.5, loss_total=1.0,
                loss_ce_pseudo=0.0, loss_ce_buffer=0.0, loss_swd_target=0.0, loss_swd_buffer=0.0,
                swd_current=0.0, swd_gmm_drift=0.0)
    base.update(kw)
    return MetricsRecord(**base)


def test_csv_header_only_and_single_row(tmp_path):
    p = tmp_path / "m.csv"
    write_metrics_csv([], p)
    assert p.read_bytes() == (HEADER + "\n").encode()
    write_metrics_csv([_rec()], p)
    lines = p.read_bytes().split(b"\n")
    assert len(lines) == 3 and lines[-1] == b""
    assert b"\r" not in p.read_bytes()


def test_csv_round_trip_nine_digits(tmp_path, rng):
    recs = [_rec(epoch=i + 1, accuracy=float(rng.random()), loss_total=float(rng.normal() * 10.0 ** rng.integers(-8, 8)),
                 swd_current=math.pi * 1e-7) for i in range(20)]
    p = tmp_path / "m.csv"
    write_metrics_csv(recs, p)
    back = read_metrics_csv(p)
    for a, b in zip(recs, back):
        for name in ("accuracy", "loss_total", "swd_current"):
            x, y = getattr(a, name), getattr(b, name)
            assert y == float(f"{x:.9g}")
            assert abs(x - y) <= 5e-9 * abs(x)
        assert (a.run_id, a.epoch) == (b.run_id, b.epoch)


def test_csv_io_error_names_path(tmp_path):
    with pytest.raises(LdaucidError, match="nope"):
        write_metrics_csv([], tmp_path / "nope" / "m.csv")


def test_curve_files(tmp_path):
    recs = [_rec(epoch=e, domain_id=d, accuracy=0.1 * e) for e in range(1, 6) for d in range(3) if e >= 2 * d]
    paths = emit_learning_curves(recs, tmp_path)
    assert [p.name for p in paths] == ["curve_domain0.csv", "curve_domain1.csv", "curve_domain2.csv"]
    rows = paths[1].read_text().splitlines()
    assert rows[0] == "epoch,accuracy"
    epochs = [int(r.split(",")[0]) for r in rows[1:]]
    assert epochs == sorted(set(epochs)) and epochs[0] == 2
    with pytest.raises(LdaucidError):
        emit_learning_curves([], tmp_path)


def test_record_count_and_protocol(cfg, tmp_path):
    recs = run_experiment(cfg, tmp_path)
    h = cfg.hyper
    assert len({r.epoch for r in recs}) == h.epochs_source + 2 * h.epochs_adapt
    assert len(recs) == h.epochs_source * 1 + h.epochs_adapt * 2 + h.epochs_adapt * 3
    assert [r.epoch for r in recs] == sorted(r.epoch for r in recs)
    assert all(0.0 <= r.accuracy <= 1.0 for r in recs)
    assert all(r.swd_gmm_drift == 0.0 for r in recs if r.time_step == 0)
    assert len(read_metrics_csv(tmp_path / "metrics.csv")) == len(recs)
    for d in range(3):
        first = int((tmp_path / f"curve_domain{d}.csv").read_text().splitlines()[1].split(",")[0])
        assert first == min(r.epoch for r in recs if r.domain_id == d)
    assert set(final_accuracies(recs)) == {0, 1, 2}
    assert isinstance(task0_drop(recs), float)


def test_source_only_stream(cfg, tmp_path):
    one = replace(cfg, stream=replace(cfg.stream, domains=cfg.stream.domains[:1]))
    recs = run_experiment(one, tmp_path)
    assert len(recs) == cfg.hyper.epochs_source
    assert {r.time_step for r in recs} == {0}


def test_byte_identical_reruns(cfg, tmp_path):
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_resume_reproduces_full_run(cfg, tmp_path):
    full = run_experiment(cfg, tmp_path / "full")
    two = replace(cfg, stream=replace(cfg.stream, domains=cfg.stream.domains[:2]))
    run_experiment(two, tmp_path / "part")
    resumed = run_experiment(cfg, tmp_path / "part", resume=True)
    # rows of finished phases come back from the CSV; the new phase is computed afresh
    fresh = [r for r in resumed if r.time_step == 2]
    assert fresh == [r for r in full if r.time_step == 2]
    assert len(resumed) == len(full)
    assert (tmp_path / "part" / "metrics.csv").read_bytes() == (tmp_path / "full" / "metrics.csv").read_bytes()
    with pytest.raises(LdaucidError):
        run_experiment(cfg, tmp_path / "empty", resume=True)


def test_checkpoint_round_trip(cfg, tmp_path):
    run_experiment(cfg, tmp_path)
    state = load_checkpoint(tmp_path / "checkpoint.bin")
    save_checkpoint(tmp_path / "again.bin", state)
    assert (tmp_path / "again.bin").read_bytes() == (tmp_path / "checkpoint.bin").read_bytes()
    assert state.time_step == 3
    state.gmm.validate()
    state.buffer.check_budgets()
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTACKPT" + bytes(20))
    with pytest.raises(ParseError):
        load_checkpoint(bad)
    bad.write_bytes((tmp_path / "checkpoint.bin").read_bytes()[:-7])
    with pytest.raises(ParseError):
        load_checkpoint(bad)


def test_naive_ablation_has_no_replay_or_alignment(cfg, tmp_path):
    abl = replace(cfg, ablation=replace(cfg.ablation, disable_buffer=True, lambda_override=0.0))
    recs = run_experiment(abl, tmp_path)
    adapt = [r for r in recs if r.time_step > 0]
    assert all(r.loss_ce_buffer == 0 and r.loss_swd_target == 0 and r.loss_swd_buffer == 0 for r in adapt)
    assert all(r.loss_total == pytest.approx(r.loss_ce_pseudo, rel=1e-8) for r in adapt)


def test_run_ablation_summary(cfg, tmp_path):
    sweep = replace(cfg, ablation=replace(cfg.ablation, n_b_sweep=[0, 4], seeds=[0]))
    rows = run_ablation(sweep, tmp_path)
    assert [r["n_b"] for r in rows] == [0, 4]
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0].startswith("run_id,seed,tau,n_b") and len(lines) == 3


def test_trainer_errors_carry_run_context(cfg, tmp_path):
    bad = replace(cfg, hyper=replace(cfg.hyper, tau=0.9999999, epochs_source=0))
    with pytest.raises(LdaucidError, match="run 'small'.*time step 1"):
        run_experiment(bad, tmp_path, write=False)


def test_cli_run_and_errors(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text(SMALL)
    assert main(["run", str(path), "--out", str(tmp_path / "o"), "--seed", "2"]) == 0
    out = capsys.readouterr().out
    assert "seed 2" in out and (tmp_path / "o" / "metrics.csv").exists()
    path.write_text(SMALL + "bogus: 1\n")
    assert main(["run", str(path)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_cli_check(capsys):
    assert main(["check"]) == 0
    assert "PASS" in capsys.readouterr().out
