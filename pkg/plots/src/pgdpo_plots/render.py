"""Figure builders for the run CSV schemas.

Every builder returns a matplotlib Figure; `render` writes it to disk
with pinned metadata so identical inputs produce identical bytes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .readers import read_alloc, read_bands, read_heatmap, read_metrics

log = logging.getLogger(__name__)

FIGURE_KINDS = ("mse_curve", "band", "utility", "donut", "heatmap")
NEAR_ZERO_WEIGHT = 1e-6  # fraction of total wealth
_DPI = 120
_SAVEFIG_KWARGS = {"dpi": _DPI, "metadata": {"Software": "pgdpo-plots"}}


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    output: Path
    log_y: bool = True
    title: str = ""
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        self.inputs = [Path(p) for p in self.inputs]
        self.output = Path(self.output)


def build_mse_curve(metrics_path, column: str, log_y: bool = True, title: str = ""):
    cols = read_metrics(metrics_path)
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(cols["iteration"], cols[column], lw=1.2, color="#1f5fa8")
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel(column.replace("_", " "))
    ax.set_title(title or column.replace("_", " "))
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def build_band(bands_path, title: str = ""):
    it, lo, hi = read_bands(bands_path)
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.fill_between(it, lo, hi, alpha=0.35, color="#1f5fa8", label="per-asset range")
    ax.plot(it, lo, lw=0.8, color="#1f5fa8")
    ax.plot(it, hi, lw=0.8, color="#1f5fa8")
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("per-asset investment MSE")
    ax.set_title(title or "per-asset investment error range")
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def build_utility(metrics_path, title: str = ""):
    cols = read_metrics(metrics_path)
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(cols["iteration"], cols["utility_rolling_mean"], lw=1.2, color="#25792f")
    ax.set_yscale("symlog")
    ax.set_xlabel("iteration")
    ax.set_ylabel("rolling-mean objective")
    ax.set_title(title or "objective (rolling mean)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def build_donut(alloc_path, title: str = ""):
    labels, weights = read_alloc(alloc_path)
    riskfree = sum(w for l, w in zip(labels, weights) if l == "riskfree")
    risky = [(l, w) for l, w in zip(labels, weights) if l != "riskfree"]
    near_zero = sum(1 for _, w in risky if w < NEAR_ZERO_WEIGHT)
    shown = [("risk-free", riskfree)] + [
        (l, w) for l, w in risky if w >= NEAR_ZERO_WEIGHT
    ]
    values = np.array([max(w, 0.0) for _, w in shown])
    names = [
        f"risk-free {riskfree * 100:.1f}%" if l == "risk-free" else ""
        for l, _ in shown
    ]
    fig, ax = plt.subplots(figsize=(5.2, 5.2))
    ax.pie(
        values,
        labels=names,
        startangle=90,
        counterclock=False,
        wedgeprops={"width": 0.42, "edgecolor": "white", "linewidth": 0.5},
    )
    ax.set_title(
        title
        or f"final allocation ({near_zero} of {len(risky)} risky assets "
        f"below {NEAR_ZERO_WEIGHT:g} weight)"
    )
    fig.tight_layout()
    return fig


def build_heatmap(heatmap_path, title: str = ""):
    ts, xs, grid = read_heatmap(heatmap_path)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    mesh = ax.pcolormesh(xs, ts, grid, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="weight")
    ax.set_xlabel("wealth X")
    ax.set_ylabel("time t")
    ax.set_title(title or Path(heatmap_path).stem)
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> Path:
    """Build one figure and write it atomically."""
    if spec.kind == "mse_curve":
        fig = build_mse_curve(
            spec.inputs[0],
            spec.options.get("column", "investment_rel_mse"),
            log_y=spec.log_y,
            title=spec.title,
        )
    elif spec.kind == "band":
        fig = build_band(spec.inputs[0], title=spec.title)
    elif spec.kind == "utility":
        fig = build_utility(spec.inputs[0], title=spec.title)
    elif spec.kind == "donut":
        fig = build_donut(spec.inputs[0], title=spec.title)
    else:
        fig = build_heatmap(spec.inputs[0], title=spec.title)
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    tmp = spec.output.with_suffix(spec.output.suffix + ".tmp")
    fig.savefig(tmp, format=spec.output.suffix.lstrip("."), **_SAVEFIG_KWARGS)
    plt.close(fig)
    tmp.replace(spec.output)
    return spec.output


def render_all(run_dir, out_dir=None, only: str | None = None) -> list[Path]:
    """Render every figure the directory's CSVs support; skip the rest.

    Writes only under <run_dir>/figures (or out_dir when given) and an
    index.html linking the produced images.
    """
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir else run_dir / "figures"
    specs: list[FigureSpec] = []

    metrics = run_dir / "metrics.csv"
    if metrics.exists():
        specs.append(
            FigureSpec(
                "mse_curve", [metrics], out / "mse_consumption.png",
                options={"column": "consumption_rel_mse"},
                title="consumption relative MSE",
            )
        )
        specs.append(
            FigureSpec(
                "mse_curve", [metrics], out / "mse_investment.png",
                options={"column": "investment_rel_mse"},
                title="investment relative MSE",
            )
        )
        specs.append(FigureSpec("utility", [metrics], out / "utility.png"))
    bands = run_dir / "bands.csv"
    if bands.exists():
        specs.append(FigureSpec("band", [bands], out / "bands.png"))
    alloc = run_dir / "alloc.csv"
    if alloc.exists():
        specs.append(FigureSpec("donut", [alloc], out / "donut.png"))
    for heat in sorted(run_dir.glob("heatmap_*.csv")):
        specs.append(
            FigureSpec("heatmap", [heat], out / f"{heat.stem}.png")
        )

    if only:
        specs = [s for s in specs if s.kind == only]

    produced = []
    for spec in specs:
        try:
            produced.append(render(spec))
        except FileNotFoundError as exc:
            log.warning("skipping %s: %s", spec.kind, exc)

    index = out / "index.html"
    out.mkdir(parents=True, exist_ok=True)
    items = "\n".join(
        f'<div><h3>{p.stem}</h3><img src="{p.name}" width="640"></div>'
        for p in produced
    )
    index.write_text(
        "<!doctype html>\n<html><head><title>run figures</title></head>\n"
        f"<body>\n<h1>figures</h1>\n{items}\n</body></html>\n"
    )
    return produced
