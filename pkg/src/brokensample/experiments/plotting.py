"""Static SVG figures rendered from the experiment CSV files.

Figures are drawn from the CSV outputs only, never from in-memory results,
so a figure always matches the numbers on disk.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..errors import MissingInput  # noqa: E402
from .io import read_csv  # noqa: E402

__all__ = ["render_svg", "freedman_diaconis_bins", "MIN_BINS", "FIGURE_KINDS"]

MIN_BINS = 8

# Fixed ids and no timestamp keep the SVG output reproducible.
_RC = {"svg.hashsalt": "brokensample", "svg.fonttype": "none"}
_META = {"Date": None}


def freedman_diaconis_bins(sample, min_bins: int = MIN_BINS) -> int:
    """Bin count from the Freedman-Diaconis width ``2 IQR n^(-1/3)``.

    Falls back to ``min_bins`` when the sample has zero spread.
    """
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise MissingInput("cannot bin an empty sample")
    q75, q25 = np.percentile(x, [75, 25])
    width = 2.0 * (q75 - q25) / x.size ** (1.0 / 3.0)
    span = float(x.max() - x.min())
    if width <= 0 or span <= 0:
        return min_bins
    return max(min_bins, int(math.ceil(span / width)))


def _load(path: Path) -> list:
    rows = read_csv(path)
    if not rows:
        raise MissingInput(f"{path} has no data rows")
    return rows


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def _loss_panels(out: Path) -> List[Path]:
    rows = _load(out / "loss_curves.csv")
    limit = {}
    lim_path = out / "limit_curve.csv"
    if lim_path.exists():
        for r in read_csv(lim_path):
            limit.setdefault(float(r["theta_star"]), []).append(
                (float(r["theta"]), float(r["limit_loss"])))
    hats = {}
    est_path = out / "loss_curve_estimates.csv"
    if est_path.exists():
        for r in read_csv(est_path):
            key = (float(r["theta_star"]), int(r["M"]), int(r["N"]))
            hats.setdefault(key, []).append((float(r["theta_hat"]), float(r["loss_at_hat"])))
    panels = {}
    for r in rows:
        key = (float(r["theta_star"]), int(r["M"]), int(r["N"]))
        panels.setdefault(key, {}).setdefault(int(r["replicate"]), []).append(
            (float(r["theta"]), float(r["loss"])))
    files = []
    for (ts, M, N), curves in sorted(panels.items()):
        with plt.rc_context(_RC):
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for rep in sorted(curves):
                t, v = zip(*curves[rep])
                ax.plot(t, v, color="tab:blue", alpha=0.3, lw=0.8)
            if (ts, M, N) in hats:
                t, v = zip(*hats[(ts, M, N)])
                ax.plot(t, v, "o", color="tab:orange", ms=3, label="minimisers")
            if ts in limit:
                t, v = zip(*limit[ts])
                ax.plot(t, v, color="tab:red", lw=2, label="limit loss")
            ax.axvline(ts, color="k", ls=":", lw=0.8)
            ax.set_xlabel(r"$\theta$")
            ax.set_ylabel("loss")
            ax.set_title(f"M={M}, N={N}")
            if ax.get_legend_handles_labels()[0]:
                ax.legend(fontsize=7)
            fig.tight_layout()
            files.append(_save(fig, out / f"loss_curve_ts{ts:g}_M{M}_N{N}.svg"))
    return files


def _histograms(out: Path, name: str) -> List[Path]:
    rows = _load(out / name)
    cells = {}
    for r in rows:
        key = (float(r["theta_star"]), int(r["M"]), int(r["N"]))
        cells.setdefault(key, []).append(float(r["theta_hat"]))
    stem = name.replace("_estimates.csv", "")
    files = []
    for (ts, M, N), vals in sorted(cells.items()):
        with plt.rc_context(_RC):
            fig, ax = plt.subplots(figsize=(4.5, 3.2))
            ax.hist(vals, bins=freedman_diaconis_bins(vals), color="tab:orange",
                    edgecolor="white")
            ax.axvline(ts, color="k", ls=":", lw=1)
            ax.set_xlabel(r"$\hat\theta$")
            ax.set_ylabel("count")
            ax.set_title(f"M={M}, N={N}")
            fig.tight_layout()
            files.append(_save(fig, out / f"{stem}_hist_ts{ts:g}_M{M}_N{N}.svg"))
    return files


def _cv_panels(out: Path) -> List[Path]:
    rows = _load(out / "cv.csv")
    stars = sorted({float(r["theta_star"]) for r in rows})
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(stars), figsize=(4 * len(stars), 3.2), squeeze=False)
        for ax, ts in zip(axes[0], stars):
            by_n = {}
            for r in rows:
                if float(r["theta_star"]) == ts and r["cv"] != "":
                    by_n.setdefault(int(r["N"]), []).append((int(r["M"]), float(r["cv"])))
            for N in sorted(by_n):
                m, cv = zip(*sorted(by_n[N]))
                ax.plot(m, cv, "o-", ms=3, label=f"N={N}")
            ax.set_xscale("log")
            ax.set_xlabel("M")
            ax.set_ylabel("CV")
            ax.set_title(rf"$\theta^*$={ts:g}")
            ax.legend(fontsize=7)
        fig.tight_layout()
        return [_save(fig, out / "cv.svg")]


def _limit_plot(out: Path) -> List[Path]:
    rows = _load(out / "limit_convergence.csv")
    by_theta = {}
    for r in rows:
        by_theta.setdefault(float(r["theta"]), []).append((int(r["M"]), float(r["abs_error"])))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for th in sorted(by_theta):
            m, e = zip(*sorted(by_theta[th]))
            ax.loglog(m, e, "o-", ms=3, label=rf"$\theta$={th:g}")
        ax.set_xlabel("M")
        ax.set_ylabel("|expected loss - limit|")
        ax.legend(fontsize=7)
        fig.tight_layout()
        return [_save(fig, out / "limit_convergence.svg")]


FIGURE_KINDS = ("loss_curve", "simulate", "cv", "limit_convergence")


def render_svg(out_dir, kinds=None) -> List[Path]:
    """Render every figure whose CSV input is present in ``out_dir``.

    Parameters
    ----------
    out_dir : path-like
        Directory holding the experiment CSV files; SVGs are written there.
    kinds : iterable of str, optional
        Restrict rendering to these families (see ``FIGURE_KINDS``).

    Raises
    ------
    MissingInput
        If no renderable CSV exists, or one that exists has no rows.
    """
    out = Path(out_dir)
    kinds = set(FIGURE_KINDS if kinds is None else kinds)
    unknown = kinds - set(FIGURE_KINDS)
    if unknown:
        raise ValueError(f"unknown figure kinds {sorted(unknown)}")
    files: List[Path] = []
    found = False
    if "loss_curve" in kinds and (out / "loss_curves.csv").exists():
        found = True
        files += _loss_panels(out)
    for kind in ("simulate", "loss_curve", "cv"):
        name = f"{kind}_estimates.csv"
        if kind in kinds and (out / name).exists():
            found = True
            files += _histograms(out, name)
    if "cv" in kinds and (out / "cv.csv").exists():
        found = True
        files += _cv_panels(out)
    if "limit_convergence" in kinds and (out / "limit_convergence.csv").exists():
        found = True
        files += _limit_plot(out)
    if not found:
        raise MissingInput(f"no experiment CSV files in {out}")
    return files
