"""Log-log SVG plots of rate reports with the fitted line annotated."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import RateReport  # noqa: E402

SVG_HASH_SALT = "levyspde"


def plot_reports(reports: Sequence[RateReport], path: str | Path, title: str | None = None, timestamp: bool = True) -> Path:
    """Overlay every report's errors against its sweep parameter on log-log axes.

    With ``timestamp=False`` the SVG carries no date and uses a fixed id salt,
    so identical reports give byte-identical files.
    """
    if not reports:
        raise ValueError("at least one report is needed")
    path = Path(path)
    plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for report in reports:
        x = np.array(report.level_values())
        y = np.array([max(lv.error, 1e-300) for lv in report.levels])
        err = np.array([lv.stderr for lv in report.levels])
        line = ax.errorbar(x, y, yerr=err if np.any(err > 0) else None, marker="o", linestyle="none", label=report.name)
        fit = report.fit
        xs = np.geomspace(x.min(), x.max(), 50)
        ax.plot(
            xs,
            np.exp(fit.intercept) * xs**fit.slope,
            color=line[0].get_color(),
            linestyle="--",
            label=f"{report.name}: slope {fit.slope:.3f}",
        )
    ax.set_xscale("log")
    ax.set_yscale("log")
    axes = sorted({r.sweep for r in reports})
    ax.set_xlabel(" / ".join(axes))
    ax.set_ylabel("error")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    metadata = None if timestamp else {"Date": None}
    fig.savefig(path, format="svg", metadata=metadata)
    plt.close(fig)
    return path
