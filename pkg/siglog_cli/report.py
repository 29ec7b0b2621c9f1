"""SVG plots for a report bundle: grade scatter, SNR/C box plot per grade, confusion heat maps."""
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from .errors import ConfigError

SVG_RC = {"svg.hashsalt": "siglog", "svg.fonttype": "path"}
SCATTER_GID = "predictions"


def _read(path: Union[str, Path], required: list) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    if frame.empty:
        raise ConfigError(f"{path} has no rows")
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ConfigError(f"{path} is missing columns {', '.join(missing)}")
    return frame


def _save(fig: Figure, out_path: Union[str, Path]) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(out_path, format="svg", metadata={"Date": None})
    return out_path


def render_grade_scatter(csv_path: Union[str, Path], out_path: Union[str, Path]) -> Path:
    """Held-out predicted vs true grade, one mark per student."""
    frame = _read(csv_path, ["true", "predicted"])
    fig = Figure(figsize=(5, 5))
    ax = fig.add_subplot()
    ax.scatter(frame["true"], frame["predicted"], s=14, alpha=0.6, gid=SCATTER_GID)
    low = min(frame["true"].min(), frame["predicted"].min())
    high = max(frame["true"].max(), frame["predicted"].max())
    ax.plot([low, high], [low, high], color="grey", linewidth=1, linestyle="--")
    ax.set_xlabel("grade")
    ax.set_ylabel("predicted grade")
    ax.set_title(Path(csv_path).stem.replace("grade_scatter_", ""))
    fig.tight_layout()
    return _save(fig, out_path)


def render_snrc_box(csv_path: Union[str, Path], out_path: Union[str, Path]) -> Path:
    """Box per grade from the precomputed five-number summaries."""
    frame = _read(csv_path, ["grade", "min", "q1", "median", "q3", "max"])
    stats = [
        {
            "label": str(int(row.grade)),
            "whislo": row.min,
            "q1": row.q1,
            "med": row.median,
            "q3": row.q3,
            "whishi": row.max,
            "fliers": [],
        }
        for row in frame.itertuples(index=False)
    ]
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    ax.bxp(stats, showfliers=False)
    ax.set_xlabel("grade")
    ax.set_ylabel("SNR / C (dB)")
    fig.tight_layout()
    return _save(fig, out_path)


def render_confusion(csv_path: Union[str, Path], out_path: Union[str, Path]) -> Path:
    frame = _read(csv_path, ["pred_0", "pred_1"])
    counts = frame[["pred_0", "pred_1"]].to_numpy(dtype=float)
    fig = Figure(figsize=(4, 4))
    ax = fig.add_subplot()
    ax.imshow(counts, cmap="Blues")
    for (i, j), value in np.ndenumerate(counts):
        ax.text(j, i, f"{int(value)}", ha="center", va="center")
    ax.set_xticks([0, 1], labels=["0", "1"])
    ax.set_yticks([0, 1], labels=["0", "1"])
    ax.set_xlabel("predicted")
    ax.set_ylabel("actual")
    ax.set_title(Path(csv_path).stem.replace("confusion_", ""))
    fig.tight_layout()
    return _save(fig, out_path)


def render_bundle(bundle_dir: Union[str, Path]) -> list[Path]:
    """
    Render every plottable CSV of a report bundle next to it.

    Raises:
        ConfigError: Missing directory or nothing to plot
    """
    bundle = Path(bundle_dir)
    if not bundle.is_dir():
        raise ConfigError(f"report bundle {bundle} does not exist")
    written = []
    for path in sorted(bundle.glob("grade_scatter_*.csv")):
        written.append(render_grade_scatter(path, path.with_suffix(".svg")))
    snrc = bundle / "snrc_by_grade.csv"
    if snrc.exists():
        written.append(render_snrc_box(snrc, snrc.with_suffix(".svg")))
    for path in sorted(bundle.glob("confusion_*.csv")):
        written.append(render_confusion(path, path.with_suffix(".svg")))
    if not written:
        raise ConfigError(f"{bundle} contains no plottable CSV files")
    return written
