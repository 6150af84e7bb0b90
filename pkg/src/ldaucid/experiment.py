"""Config-driven experiment runs: train, evaluate every seen domain each epoch, record metrics."""
from __future__ import annotations

import itertools
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, config_to_dict
from .data import TaskStream, make_task_stream
from .exceptions import LdaucidError
from .metrics import MetricsRecord, emit_learning_curves, read_metrics_csv, write_metrics_csv
from .nn import init_model
from .trainer import EpochReport, TrainerState, evaluate, run_time_step, train_source

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
CHECKPOINT_FILE = "checkpoint.bin"


def build_model(cfg: ExperimentConfig, stream: TaskStream):
    m = cfg.model
    return init_model(
        stream.source.dim,
        m.encoder,
        stream.k,
        classifier_hidden=m.classifier_hidden,
        activation=m.activation,
        embedding_activation=m.embedding_activation,
        seed=np.random.SeedSequence([cfg.seed, 0, 0]),
    )


def run_experiment(cfg: ExperimentConfig, out_dir=None, write: bool = True, resume: bool = False, plot: bool = False) -> list[MetricsRecord]:
    """Source training followed by one adaptation time step per target domain.

    After every epoch each domain seen so far is evaluated on its test split,
    giving one record per (epoch, seen domain). Epochs are numbered globally
    from 1. With ``write``, ``metrics.csv`` gains the rows of each phase as
    soon as it finishes and ``checkpoint.bin`` is rewritten; ``resume``
    continues from an existing checkpoint in ``out_dir``.
    """
    hyper = cfg.effective_hyper()
    stream = make_task_stream(cfg.stream, cfg.seed)
    out = Path(out_dir or cfg.output_dir)
    metrics_path = out / METRICS_FILE
    ckpt_path = out / CHECKPOINT_FILE

    records: list[MetricsRecord] = []
    state = TrainerState(build_model(cfg, stream))
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=True), encoding="utf-8")
    if resume:
        if not ckpt_path.exists():
            raise LdaucidError(f"nothing to resume: {ckpt_path} missing")
        state = load_checkpoint(ckpt_path)
        records = [r for r in read_metrics_csv(metrics_path) if r.time_step < state.time_step]
        write_metrics_csv(records, metrics_path)
    elif write:
        write_metrics_csv([], metrics_path)

    epoch_counter = [max((r.epoch for r in records), default=0)]

    def phase_logger(pending: list[MetricsRecord]):
        def on_epoch(rep: EpochReport):
            epoch_counter[0] += 1
            c = rep.components
            for dom in range(rep.time_step + 1):
                pending.append(
                    MetricsRecord(
                        cfg.run_id, cfg.seed, rep.time_step, epoch_counter[0], dom,
                        evaluate(rep.model, stream.tests[dom]),
                        rep.loss_total, c.ce_pseudo, c.ce_buffer, c.swd_target, c.swd_buffer,
                        rep.swd_current, 0.0,
                    )
                )
        return on_epoch

    def finish(pending, new_state, drift=0.0):
        pending = [replace(r, swd_gmm_drift=drift) for r in pending]
        records.extend(pending)
        if write:
            write_metrics_csv(pending, metrics_path, append=True)
            save_checkpoint(ckpt_path, new_state)
        return new_state

    try:
        if state.time_step == 0:
            pending: list[MetricsRecord] = []
            state = finish(pending, train_source(state, stream.source, hyper, phase_logger(pending)))
        for t in range(state.time_step, stream.n_domains):
            pending = []
            state = run_time_step(state, stream.targets[t - 1], hyper, phase_logger(pending))
            state = finish(pending, state, state.diagnostics[-1].swd_gmm_drift)
    except LdaucidError as exc:
        raise LdaucidError(f"run {cfg.run_id!r} (seed {cfg.seed}) failed at time step {state.time_step}: {exc}") from exc

    if write and records:
        emit_learning_curves(records, out, plot=plot)
    return records


def final_accuracies(records: list[MetricsRecord]) -> dict[int, float]:
    """Accuracy of every domain at the last recorded epoch."""
    last = max(r.epoch for r in records)
    return {r.domain_id: r.accuracy for r in records if r.epoch == last}


def task0_drop(records: list[MetricsRecord]) -> float:
    """Domain-0 accuracy right after source training minus its final accuracy."""
    src_end = max(r.epoch for r in records if r.time_step == 0)
    after = next(r.accuracy for r in records if r.epoch == src_end and r.domain_id == 0)
    return after - final_accuracies(records)[0]


def sweep_points(cfg: ExperimentConfig) -> list[ExperimentConfig]:
    """Cartesian product of the declared tau / n_b sweeps and seeds."""
    a = cfg.ablation
    taus = a.tau_sweep or [cfg.hyper.tau]
    nbs = a.n_b_sweep or [cfg.hyper.n_b]
    seeds = a.seeds or [cfg.seed]
    points = []
    for tau, nb, seed in itertools.product(taus, nbs, seeds):
        hyper = replace(cfg.hyper, tau=float(tau), n_b=int(nb))
        run_id = f"{cfg.run_id}_tau{tau:g}_nb{nb}_s{seed}"
        points.append(replace(cfg, hyper=hyper, seed=int(seed), run_id=run_id))
    return points


def run_ablation(cfg: ExperimentConfig, out_dir=None) -> list[dict]:
    """Run every sweep point into its own subdirectory and write ``summary.csv``."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for point in sweep_points(cfg):
        recs = run_experiment(point, out / point.run_id)
        acc = final_accuracies(recs)
        h = point.effective_hyper()
        rows.append({
            "run_id": point.run_id,
            "seed": point.seed,
            "tau": h.tau,
            "n_b": h.n_b,
            "lambda": h.lambda_,
            "final_avg_accuracy": float(np.mean(list(acc.values()))),
            "task0_drop": task0_drop(recs),
        })
    with open(out / "summary.csv", "w", newline="\n", encoding="utf-8") as fh:
        fh.write("run_id,seed,tau,n_b,lambda,final_avg_accuracy,task0_drop\n")
        for r in rows:
            fh.write(f"{r['run_id']},{r['seed']},{r['tau']:.9g},{r['n_b']},{r['lambda']:.9g},"
                     f"{r['final_avg_accuracy']:.9g},{r['task0_drop']:.9g}\n")
    return rows
