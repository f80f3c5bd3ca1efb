"""Tables and plots over completed run directories."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .curriculum import CurriculumSchedule, mu

METRIC_COLUMNS = ("hr@20", "ndcg@20", "mrr@20")


def scan_runs(runs_dir: str | Path) -> list[dict]:
    """Collect config, epoch history and final metrics from each run dir."""
    runs = []
    for child in sorted(Path(runs_dir).iterdir()):
        if not child.is_dir():
            continue
        entry: dict = {"name": child.name, "dir": str(child)}
        cfg_path = child / "config.json"
        if cfg_path.exists():
            entry["config"] = json.loads(cfg_path.read_text(encoding="utf-8"))
        metrics_path = child / "metrics_test.json"
        if metrics_path.exists():
            entry["metrics"] = json.loads(metrics_path.read_text(encoding="utf-8"))
        log_path = child / "epochs.jsonl"
        if log_path.exists():
            entry["history"] = [
                json.loads(line)
                for line in log_path.read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
        runs.append(entry)
    return runs


def _variant_label(config: dict) -> str:
    if config.get("backbone_only"):
        return "backbone only"
    flags = [
        name for key, name in (
            ("no_hard_path", "w/o hard path"),
            ("no_target_short", "w/o target signal"),
            ("no_bpr", "w/o bpr"),
        ) if config.get(key)
    ]
    if not config.get("curriculum_enabled", True):
        flags.append("w/o curriculum")
    return "full" if not flags else ", ".join(flags)


def comparison_table(runs: list[dict]) -> str:
    header = "| run | backbone | variant | " + " | ".join(METRIC_COLUMNS) + " |"
    sep = "|" + "---|" * (3 + len(METRIC_COLUMNS))
    lines = [header, sep]
    for run in runs:
        config = run.get("config", {})
        metrics = run.get("metrics")
        cells = [
            run["name"],
            config.get("backbone", "?"),
            _variant_label(config) if config else "?",
        ]
        for col in METRIC_COLUMNS:
            if metrics and col in metrics:
                cells.append(f"{metrics[col]:.4f}")
            else:
                cells.append("absent")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


def plot_schedules(out_path: Path, total_epochs: int = 50) -> None:
    grid = np.linspace(0, total_epochs, 501)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for mode in ("s-shape", "linear"):
        sched = CurriculumSchedule(M=total_epochs, mode=mode)
        vals = [mu(float(t), sched) for t in grid]
        assert abs(vals[0]) < 1e-12 and abs(vals[-1] - 1.0) < 1e-12
        ax.plot(grid, vals, label=mode)
    ax.set_xlabel("epoch")
    ax.set_ylabel("admitted difficult fraction")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _sweep_plot(runs: list[dict], key: str, out_path: Path) -> bool:
    points = []
    for run in runs:
        config = run.get("config")
        metrics = run.get("metrics")
        if config and metrics and "hr@20" in metrics:
            points.append((config.get(key), metrics))
    points = [(v, m) for v, m in points if v is not None]
    if len({v for v, _ in points}) < 2:
        return False
    points.sort(key=lambda p: p[0])
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for col in METRIC_COLUMNS:
        ax.plot(
            [v for v, _ in points],
            [m.get(col, float("nan")) for _, m in points],
            marker="o", label=col,
        )
    ax.set_xlabel(key)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return True


def write_report(runs_dir: str | Path, out_dir: str | Path | None = None) -> Path:
    runs_dir = Path(runs_dir)
    out_dir = Path(out_dir) if out_dir else runs_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = scan_runs(runs_dir)

    sections = ["# Run report", "", "## Final test metrics", ""]
    sections.append(comparison_table(runs) if runs else "No completed runs found.")

    plot_schedules(out_dir / "curriculum_schedule.png")
    sections += ["", "![curriculum schedule](curriculum_schedule.png)", ""]
    if _sweep_plot(runs, "m", out_dir / "sweep_m.png"):
        sections += ["![window sweep](sweep_m.png)", ""]
    if _sweep_plot(runs, "lambda_weight", out_dir / "sweep_lambda.png"):
        sections += ["![lambda sweep](sweep_lambda.png)", ""]

    report_path = out_dir / "report.md"
    report_path.write_text("\n".join(sections) + "\n", encoding="utf-8")
    return report_path
