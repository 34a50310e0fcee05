"""CSV and SVG report artifacts for the evaluation pipeline.

The CSV is the contract-bearing output; the SVGs are small self-contained
renderings (axes, points, polylines) of the same data: one scatter of
target versus metric value per correlation cell, and one rho-versus-epoch
evolution chart per target when the grouping includes the epoch.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .stats import CorrelationCell, _sort_component

WIDTH, HEIGHT = 480, 360
MARGIN = 54

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


@dataclass
class ReportBundle:
    correlations_csv: Path
    scatter_svgs: list[Path] = field(default_factory=list)
    evolution_svgs: list[Path] = field(default_factory=list)


def _slug(*parts: str) -> str:
    cleaned = [re.sub(r"[^A-Za-z0-9_.-]+", "-", p).strip("-") for p in parts]
    return "_".join(c for c in cleaned if c) or "all"


def _axis_range(values):
    lo, hi = min(values), max(values)
    if hi == lo:
        pad = abs(hi) * 0.05 or 0.5
    else:
        pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def _scale(v, lo, hi, out_lo, out_hi):
    return out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)


def _frame(title: str, xlabel: str, ylabel: str, xlo, xhi, ylo, yhi) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="16" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {HEIGHT / 2})">{ylabel}</text>',
    ]
    for i in range(5):
        fx = xlo + (xhi - xlo) * i / 4
        fy = ylo + (yhi - ylo) * i / 4
        px = _scale(fx, xlo, xhi, MARGIN, WIDTH - MARGIN)
        py = _scale(fy, ylo, yhi, HEIGHT - MARGIN, MARGIN)
        parts.append(
            f'<line x1="{px:.1f}" y1="{HEIGHT - MARGIN}" x2="{px:.1f}" y2="{HEIGHT - MARGIN + 4}" stroke="black"/>'
            f'<text x="{px:.1f}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{fx:.4g}</text>'
        )
        parts.append(
            f'<line x1="{MARGIN - 4}" y1="{py:.1f}" x2="{MARGIN}" y2="{py:.1f}" stroke="black"/>'
            f'<text x="{MARGIN - 6}" y="{py:.1f}" text-anchor="end" dominant-baseline="middle">{fy:.4g}</text>'
        )
    return parts


def render_scatter(points, title: str, xlabel: str, ylabel: str) -> str:
    xlo, xhi = _axis_range([p[0] for p in points])
    ylo, yhi = _axis_range([p[1] for p in points])
    parts = _frame(title, xlabel, ylabel, xlo, xhi, ylo, yhi)
    for x, y in points:
        px = _scale(x, xlo, xhi, MARGIN, WIDTH - MARGIN)
        py = _scale(y, ylo, yhi, HEIGHT - MARGIN, MARGIN)
        parts.append(f'<circle cx="{px:.1f}" cy="{py:.1f}" r="3" fill="#1f77b4" fill-opacity="0.7"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def render_evolution(series: dict[str, list[tuple[float, float]]], title: str, xlabel: str) -> str:
    """One polyline per metric: x is the epoch, y the correlation."""
    xs = [x for pts in series.values() for x, _ in pts]
    xlo, xhi = _axis_range(xs)
    ylo, yhi = -1.05, 1.05
    parts = _frame(title, xlabel, "spearman rho", xlo, xhi, ylo, yhi)
    zero_y = _scale(0.0, ylo, yhi, HEIGHT - MARGIN, MARGIN)
    parts.append(
        f'<line x1="{MARGIN}" y1="{zero_y:.1f}" x2="{WIDTH - MARGIN}" y2="{zero_y:.1f}" '
        f'stroke="#cccccc" stroke-dasharray="4 3"/>'
    )
    for i, (metric_id, pts) in enumerate(sorted(series.items())):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(
            f"{_scale(x, xlo, xhi, MARGIN, WIDTH - MARGIN):.1f},"
            f"{_scale(y, ylo, yhi, HEIGHT - MARGIN, MARGIN):.1f}"
            for x, y in sorted(pts)
        )
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{WIDTH - MARGIN + 4}" y="{MARGIN + 14 * i}" fill="{color}">{metric_id}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def write_correlations_csv(cells: list[CorrelationCell], group_by: list[str], path: Path) -> None:
    lines = [",".join([*group_by, "metric_id", "target", "rho", "n"])]
    for c in cells:
        lines.append(
            ",".join([*(c.group_key[k] for k in group_by), c.metric_id, c.target, repr(c.rho), str(c.n)])
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_report(
    out_dir,
    cells: list[CorrelationCell],
    scatter_points: dict[tuple, list[tuple[float, float]]],
    group_by: list[str],
) -> ReportBundle:
    """Write correlations.csv plus scatter and evolution SVGs.

    ``scatter_points`` maps (group value tuple, metric_id, target) to the
    raw (metric value, target value) points of that cell.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "correlations.csv"
    write_correlations_csv(cells, group_by, csv_path)
    bundle = ReportBundle(correlations_csv=csv_path)

    for c in cells:
        key = (tuple(c.group_key.values()), c.metric_id, c.target)
        points = scatter_points.get(key)
        if not points:
            continue
        group_txt = " ".join(f"{k}={v}" for k, v in c.group_key.items())
        name = _slug("scatter", group_txt, c.metric_id, c.target) + ".svg"
        svg = render_scatter(
            points,
            title=f"{c.target} vs {c.metric_id}" + (f" ({group_txt})" if group_txt else ""),
            xlabel=c.metric_id,
            ylabel=c.target,
        )
        (out / name).write_text(svg, encoding="utf-8")
        bundle.scatter_svgs.append(out / name)

    if "epoch" in group_by:
        rest = [k for k in group_by if k != "epoch"]
        targets = sorted({c.target for c in cells})
        for target in targets:
            combos = sorted(
                {tuple(c.group_key[k] for k in rest) for c in cells if c.target == target},
                key=lambda vs: tuple(_sort_component(v) for v in vs),
            )
            for combo in combos:
                series: dict[str, list[tuple[float, float]]] = {}
                for c in cells:
                    if c.target != target or tuple(c.group_key[k] for k in rest) != combo:
                        continue
                    series.setdefault(c.metric_id, []).append((float(c.group_key["epoch"]), c.rho))
                if not series:
                    continue
                combo_txt = " ".join(f"{k}={v}" for k, v in zip(rest, combo))
                name = _slug("evolution", combo_txt, target) + ".svg"
                svg = render_evolution(
                    series,
                    title=f"rho({target}) over training" + (f" ({combo_txt})" if combo_txt else ""),
                    xlabel="epoch",
                )
                (out / name).write_text(svg, encoding="utf-8")
                bundle.evolution_svgs.append(out / name)
    return bundle
