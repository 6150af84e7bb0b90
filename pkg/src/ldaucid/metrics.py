"""Metrics records, the metrics CSV and per-domain learning-curve files."""
from __future__ import annotations

import csv
import logging
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable

from .exceptions import LdaucidError

log = logging.getLogger(__name__)

HEADER = (
    "run_id,seed,time_step,epoch,domain_id,accuracy,loss_total,loss_ce_pseudo,"
    "loss_ce_buffer,loss_swd_target,loss_swd_buffer,swd_current,swd_gmm_drift"
)


@dataclass
class MetricsRecord:
    run_id: str
    seed: int
    time_step: int
    epoch: int
    domain_id: int
    accuracy: float
    loss_total: float
    loss_ce_pseudo: float
    loss_ce_buffer: float
    loss_swd_target: float
    loss_swd_buffer: float
    swd_current: float
    swd_gmm_drift: float


_INT_FIELDS = {"seed", "time_step", "epoch", "domain_id"}


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def format_row(rec: MetricsRecord) -> str:
    return ",".join(_fmt(v) for v in astuple(rec))


def write_metrics_csv(records: Iterable[MetricsRecord], path, append: bool = False) -> None:
    """Write records (LF line endings, reals to 9 significant digits).

    With ``append=True`` rows are added to an existing file and the header is
    only written if the file is new or empty.
    """
    path = Path(path)
    try:
        new = not append or not path.exists() or path.stat().st_size == 0
        with open(path, "a" if append else "w", newline="\n", encoding="utf-8") as fh:
            if new:
                fh.write(HEADER + "\n")
            for rec in records:
                fh.write(format_row(rec) + "\n")
    except OSError as exc:
        raise LdaucidError(f"cannot write metrics to {path}: {exc}") from exc


def read_metrics_csv(path) -> list[MetricsRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if ",".join(reader.fieldnames or []) != HEADER:
            raise LdaucidError(f"{path}: unexpected metrics header")
        out = []
        for row in reader:
            vals = {}
            for f in fields(MetricsRecord):
                raw = row[f.name]
                vals[f.name] = raw if f.name == "run_id" else int(raw) if f.name in _INT_FIELDS else float(raw)
            out.append(MetricsRecord(**vals))
    return out


def emit_learning_curves(records: list[MetricsRecord], out_dir, plot: bool = False) -> list[Path]:
    """Write ``curve_domain<id>.csv`` (epoch,accuracy) per domain; optionally a PNG of all curves."""
    if not records:
        raise LdaucidError("no records to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series: dict[int, list[tuple[int, float]]] = {}
    for r in records:
        series.setdefault(r.domain_id, []).append((r.epoch, r.accuracy))
    written = []
    for dom in sorted(series):
        pts = sorted(series[dom])
        path = out_dir / f"curve_domain{dom}.csv"
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write("epoch,accuracy\n")
            for e, a in pts:
                fh.write(f"{e},{a:.9g}\n")
        written.append(path)
    if plot:
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            log.warning("matplotlib not available; wrote curve data files only")
            return written
        fig, ax = plt.subplots(figsize=(6, 4))
        for dom in sorted(series):
            e, a = zip(*sorted(series[dom]))
            ax.plot(e, a, label=f"domain {dom}")
        ax.set_xlabel("epoch")
        ax.set_ylabel("test accuracy")
        ax.set_ylim(0, 1.02)
        ax.legend()
        fig.tight_layout()
        path = out_dir / "learning_curves.png"
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
        written.append(path)
    return written
