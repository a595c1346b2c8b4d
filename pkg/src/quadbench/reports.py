"""Result store layout, report tables, and the experiment manifest.

On-disk layout under the output root:

    manifest.json                      config hash + tool version
    runs/<obs>-s<seed>/checkpoint.ckpt
    runs/<obs>-s<seed>/curve.csv       episode,steps,cumulative_reward
    logs/<controller>/<scenario>-run<i>.csv
    reports/benchmark.{csv,md}         controllers x scenarios grid
    reports/ablate_inputs.{csv,md}
    reports/ablate_window.csv          merged learning curves
    reports/stress.{csv,md}

Every reported number is recomputed from the stored run logs, so `replay`
regenerates byte-identical reports without re-simulating.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from . import __version__
from .config import BenchConfig, config_hash
from .errors import MissingArtifactError
from .evaluation import MetricsReport, RunLog, aggregate, rmse_metrics
from .trajectories import TrajectorySpec

# Real-flight context for the report footers: tracking errors of comparable
# CTBR controllers span roughly 1.5-10.7 cm P_c, and maximum tracked target
# speeds 0.73-1.21 m/s. Desk-scale simulation numbers are not comparable
# one-to-one; they are listed for orientation only.
REFERENCE_NOTE = ("Reference context (real-flight, comparable hardware setups): "
                  "P_c roughly 1.5-10.7 cm across these scenarios; "
                  "maximum tracked speeds 0.73-1.21 m/s.")
INC_SPEED_NOTE = ("Increased-speed columns map the doubled-speed trials to "
                  "ellipse-x2 / eight2d-x2 / eight3d-x2; the source tables "
                  "label all three identically.")

_BASE_KINDS = {"hover": "hover", "ellipse": "ellipse",
               "eight2d": "eight_planar", "eight3d": "eight_3d"}


def scenario_spec(cfg: BenchConfig, name: str) -> TrajectorySpec:
    """Build the TrajectorySpec for a canonical scenario name."""
    base, mult = name, 1.0
    if name.endswith("-x2"):
        base, mult = name[:-3], 2.0
    if base not in _BASE_KINDS:
        raise ValueError(f"unknown scenario {name!r}")
    t = cfg.trajectories
    return TrajectorySpec(kind=_BASE_KINDS[base], center=np.asarray(t.center),
                          a=t.semi_axis_a, b=t.semi_axis_b, c_z=t.vertical_amp,
                          period=t.period, speed_multiplier=mult)


class ResultStore:
    """Append-only artifact tree with atomic file writes."""

    def __init__(self, root):
        self.root = Path(root)

    def run_dir(self, obs_name: str, seed: int) -> Path:
        return self.root / "runs" / f"{obs_name}-s{seed}"

    def checkpoint_path(self, obs_name: str, seed: int) -> Path:
        return self.run_dir(obs_name, seed) / "checkpoint.ckpt"

    def curve_path(self, obs_name: str, seed: int) -> Path:
        return self.run_dir(obs_name, seed) / "curve.csv"

    def log_path(self, controller: str, scenario: str, run: int) -> Path:
        return self.root / "logs" / controller / f"{scenario}-run{run}.csv"

    def report_path(self, name: str) -> Path:
        return self.root / "reports" / name

    def write_text(self, path: Path, text: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)

    def write_manifest(self, cfg: BenchConfig) -> None:
        manifest = {"config_sha256": config_hash(cfg), "tool_version": __version__}
        self.write_text(self.root / "manifest.json",
                        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def curve_csv(curve) -> str:
    lines = ["episode,steps,cumulative_reward"]
    for st in curve:
        lines.append(f"{st.episode},{st.steps},{repr(float(st.cumulative_reward))}")
    return "\n".join(lines) + "\n"


def merged_curve_csv(curves_by_window: dict, default_window: int = 10) -> str:
    lines = [f"# default window: H={default_window}",
             "window,episode,steps,cumulative_reward"]
    for h in sorted(curves_by_window):
        for st in curves_by_window[h]:
            lines.append(f"{h},{st.episode},{st.steps},{repr(float(st.cumulative_reward))}")
    return "\n".join(lines) + "\n"


def metrics_from_logs(store: ResultStore, controller: str, scenario: str,
                      runs: int) -> MetricsReport:
    """Recompute the aggregated metrics from the stored run-log CSVs."""
    per_run = []
    for i in range(runs):
        path = store.log_path(controller, scenario, i)
        if not path.exists():
            raise MissingArtifactError(f"missing run log {path}")
        per_run.append(rmse_metrics(RunLog.from_csv(path.read_text(encoding="utf-8"))))
    return aggregate(per_run, expected_runs=runs)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def benchmark_tables(results: dict, controllers, scenarios) -> tuple:
    """Render the controllers x scenarios grid.

    Args:
        results: {(controller, scenario): MetricsReport}.
    Returns:
        (csv_text, markdown_text); markdown carries per-scenario P_c ranks.
    """
    ranks = {}
    for sc in scenarios:
        ordered = sorted(controllers, key=lambda c: results[(c, sc)].p_c)
        for pos, c in enumerate(ordered, start=1):
            ranks[(c, sc)] = pos

    csv_lines = ["controller,scenario,runs,px_cm,py_cm,pz_cm,pc_cm,rank"]
    for c in controllers:
        for sc in scenarios:
            m = results[(c, sc)]
            csv_lines.append(",".join([c, sc, str(m.runs), repr(m.p_x), repr(m.p_y),
                                       repr(m.p_z), repr(m.p_c), str(ranks[(c, sc)])]))
    csv_text = "\n".join(csv_lines) + "\n"

    header = ["controller"]
    for sc in scenarios:
        header += [f"{sc} Px", "Py", "Pz", "Pc (rank)"]
    md = ["# Tracking error, cm (3-run mean)", "",
          "| " + " | ".join(header) + " |",
          "|" + "---|" * len(header)]
    for c in controllers:
        row = [c]
        for sc in scenarios:
            m = results[(c, sc)]
            row += [_fmt(m.p_x), _fmt(m.p_y), _fmt(m.p_z),
                    f"{_fmt(m.p_c)} ({ranks[(c, sc)]})"]
        md.append("| " + " | ".join(row) + " |")
    md += ["", f"_{INC_SPEED_NOTE}_", "", f"_{REFERENCE_NOTE}_", ""]
    return csv_text, "\n".join(md)


def stress_tables(rows) -> tuple:
    """Render stress rows [(name, velocity_mps), ...] as CSV and markdown."""
    csv_lines = ["name,velocity_mps"]
    for name, v in rows:
        csv_lines.append(f"{name},{repr(float(v))}")
    md = ["# Velocity stress results (m/s)", "", "| controller | max speed |",
          "|---|---|"]
    for name, v in rows:
        txt = f">= {_fmt(v)} (cap)" if math.isinf(v) else _fmt(v)
        md.append(f"| {name} | {txt} |")
    md += ["", f"_{REFERENCE_NOTE}_", ""]
    return "\n".join(csv_lines) + "\n", "\n".join(md)
