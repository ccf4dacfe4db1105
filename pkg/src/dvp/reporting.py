"""Run artifact persistence: report.json, delimited score table, and the
per-arrangement score figure.

report.json is fully deterministic for fixed inputs; wall-clock data lives
in the run.meta.json sidecar so reports can be compared byte-for-byte.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .raster import save_png

REPORT_NAME = "report.json"
SCORES_CSV = "scores.csv"
SCORES_FIGURE = "scores.png"
META_NAME = "run.meta.json"


def write_report(run_dir, report: dict) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / REPORT_NAME
    path.write_text(json.dumps(report, indent=2, sort_keys=True))
    return path


def write_scores_csv(run_dir, report: dict) -> Path:
    path = Path(run_dir) / SCORES_CSV
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([
            "arrangement_id", "row_assignment", "text_score", "image_score",
            "quality_score", "combined", "selected", "error",
        ])
        for arr in report["arrangements"]:
            if "error" in arr:
                writer.writerow([arr["id"], "".join(map(str, arr["row_assignment"])),
                                 "", "", "", "", "", arr["error"]])
                continue
            writer.writerow([
                arr["id"],
                "".join(map(str, arr["row_assignment"])),
                f"{arr['text_score']:.6f}",
                f"{arr['image_score']:.6f}",
                f"{arr['quality_score']:.6f}",
                f"{arr['combined']:.6f}",
                int(arr["id"] == report["selected_arrangement_id"]),
                "",
            ])
    return path


def render_scores_figure(run_dir, report: dict) -> Path:
    ok = [a for a in report["arrangements"] if "error" not in a]
    ids = [a["id"] for a in ok]
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.25
    ax.bar([i - width for i in ids], [a["text_score"] for a in ok], width, label="text")
    ax.bar(ids, [a["image_score"] for a in ok], width, label="theme")
    ax.bar([i + width for i in ids], [a["combined"] for a in ok], width, label="combined")
    selected = report["selected_arrangement_id"]
    ax.axvline(selected, color="k", linestyle="--", linewidth=1, alpha=0.5)
    ax.set_xlabel("arrangement")
    ax.set_ylabel("score")
    ax.set_xticks(ids)
    ax.set_xticklabels(["".join(map(str, a["row_assignment"])) for a in ok])
    ax.set_title(f"run {report['run_id']}: selected arrangement {selected}")
    ax.legend()
    fig.tight_layout()
    path = Path(run_dir) / SCORES_FIGURE
    fig.savefig(path, dpi=100, metadata={"Software": "dvp"})
    plt.close(fig)
    return path


def write_run_artifacts(run_dir, report: dict, outputs: dict, elapsed_s: float) -> None:
    """Persist the full artifact tree for one run.

    ``outputs`` maps arrangement id -> (candidate, assignment, visual_prompt,
    full result raster).
    """
    run_dir = Path(run_dir)
    for arr_id, (candidate, _assignment, vp, result) in outputs.items():
        arr_dir = run_dir / f"arrangement-{arr_id}"
        save_png(vp.composite, arr_dir / "prompt.composite.png")
        save_png(vp.mask, arr_dir / "prompt.mask.png")
        save_png(result, arr_dir / "result.png")
        save_png(candidate.image, arr_dir / "canvas.png")
    write_report(run_dir, report)
    write_scores_csv(run_dir, report)
    render_scores_figure(run_dir, report)
    (run_dir / META_NAME).write_text(json.dumps({
        "elapsed_s": elapsed_s,
        "completed_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }, indent=2))
