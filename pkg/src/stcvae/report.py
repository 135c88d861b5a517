"""Self-contained SVG reports and image-strip export.

The SVG is hand-assembled text with fixed-precision coordinates, so the
same records always yield byte-identical output.  No plotting library.
"""

from pathlib import Path

import numpy as np

from . import models
from .models import decode
from .sweep import (
    FitError,
    TrialRecord,
    baseline_granularity,
    fit_trajectory_curve,
    omniscient_region,
    optimal_granularity_points,
)

# Fixed drawing reference for the ungrouped-baseline granularity, used as
# a comparison line alongside the computed baseline of the records.
BASELINE_REFERENCE_G = 0.0892

_BETA_COLORS = ("#2e8b57", "#e08020", "#3060c0", "#b040b0", "#807020")

_WIDTH = 760
_PLOT_H = 420
_MARGIN = 64


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Svg:
    def __init__(self):
        self.parts: list[str] = []

    def line(self, x1, y1, x2, y2, stroke="#444", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" '
            f'y2="{_fmt(y2)}" stroke="{stroke}" stroke-width="{width}"{d}/>'
        )

    def circle(self, x, y, r, fill):
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{r}" fill="{fill}"/>'
        )

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
            f'height="{_fmt(h)}" fill="{fill}" stroke="{stroke}"/>'
        )

    def text(self, x, y, s, size=12, anchor="start", fill="#222"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="monospace" text-anchor="{anchor}" fill="{fill}">{s}</text>'
        )

    def polyline(self, pts, stroke, width=1.5):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}"/>'
        )


def render_report_svg(
    records: list[TrialRecord], region_threshold: float = 0.5
) -> str:
    """One SVG: optimal-granularity trajectory on top, collapsed-latent
    occurrence heat table below."""
    ok = [r for r in records if r.status == "ok" and np.isfinite(r.final_elbo)]
    if not ok:
        raise FitError("no successful records to report on")
    betas = sorted({r.beta for r in ok})
    caps = sorted({r.neuron_num for r in ok})
    gs = sorted({r.g for r in ok})

    cells = omniscient_region(records, region_threshold)
    heat_h = 40 + 26 * len(gs) + 30
    total_h = _PLOT_H + heat_h + 40
    svg = _Svg()

    # Trajectory panel ----------------------------------------------------
    x_lo, x_hi = min(caps), max(caps)
    span = max(x_hi - x_lo, 1)
    x_lo, x_hi = x_lo - 0.08 * span, x_hi + 0.08 * span

    def sx(c):
        return _MARGIN + (c - x_lo) / (x_hi - x_lo) * (_WIDTH - 2 * _MARGIN)

    def sy(g):
        return _PLOT_H - 40 - g * (_PLOT_H - 90)  # g in [0, 1]

    svg.text(_MARGIN, 22, "optimal-ELBO granularity vs parameter capacity", size=14)
    svg.line(_MARGIN, sy(0), _WIDTH - _MARGIN / 2, sy(0))
    svg.line(_MARGIN, sy(0), _MARGIN, sy(1.02))
    for g in (0.0, 0.25, 0.5, 0.75, 1.0):
        svg.line(_MARGIN - 4, sy(g), _MARGIN, sy(g))
        svg.text(_MARGIN - 8, sy(g) + 4, f"{g:.2f}", size=10, anchor="end")
    for c in caps:
        svg.line(sx(c), sy(0), sx(c), sy(0) + 4)
        svg.text(sx(c), sy(0) + 16, str(c), size=10, anchor="middle")
    svg.text(_WIDTH / 2, sy(0) + 32, "neuron_num (capacity)", size=11, anchor="middle")
    svg.text(14, _PLOT_H / 2, "g", size=12)

    base = baseline_granularity(ok)
    svg.line(_MARGIN, sy(base), _WIDTH - _MARGIN / 2, sy(base), stroke="#c03030",
             dash="6,4")
    svg.text(
        _WIDTH - _MARGIN / 2, sy(base) - 6,
        f"baseline g={base:.4f} (reference {BASELINE_REFERENCE_G})",
        size=10, anchor="end", fill="#c03030",
    )

    legend_y = 40
    for bi, beta in enumerate(betas):
        color = _BETA_COLORS[bi % len(_BETA_COLORS)]
        points = optimal_granularity_points([r for r in ok if r.beta == beta])
        for p in points:
            svg.circle(sx(p.capacity), sy(p.mean_best_g), 4, color)
        if len({p.capacity for p in points}) >= 3:
            fit = fit_trajectory_curve(points)
            xs = np.linspace(min(caps), max(caps), 100)
            svg.polyline([(sx(x), sy(float(fit(x)))) for x in xs], color)
        svg.circle(_WIDTH - 170, legend_y, 4, color)
        svg.text(_WIDTH - 160, legend_y + 4, f"beta={beta:g}", size=11)
        legend_y += 16

    # Heat panel ----------------------------------------------------------
    y0 = _PLOT_H + 30
    svg.text(
        _MARGIN, y0 - 8,
        f"collapsed-latent occurrence fraction per cell "
        f"(region threshold {region_threshold:g})",
        size=13,
    )
    cell_w = (_WIDTH - 2 * _MARGIN - 60) / max(len(caps), 1)
    lookup = {(c.capacity, c.g): c for c in cells}
    for gi, g in enumerate(gs):
        y = y0 + 10 + 26 * gi
        svg.text(_MARGIN - 8, y + 17, f"g={g:.3f}", size=10, anchor="end")
        for ci, cap in enumerate(caps):
            x = _MARGIN + 60 + ci * cell_w
            cell = lookup.get((cap, g))
            if cell is None:
                svg.rect(x, y, cell_w - 2, 24, "#eeeeee")
                continue
            shade = int(255 - 180 * cell.fraction)
            fill = f"#{shade:02x}{shade:02x}ff" if cell.in_region else (
                f"#{shade:02x}{shade:02x}{shade:02x}"
            )
            svg.rect(x, y, cell_w - 2, 24, fill, stroke="#999")
            svg.text(x + cell_w / 2, y + 16, f"{cell.fraction:.2f}", size=10,
                     anchor="middle")
    for ci, cap in enumerate(caps):
        x = _MARGIN + 60 + ci * cell_w
        svg.text(x + cell_w / 2, y0 + 10 + 26 * len(gs) + 14, str(cap),
                 size=10, anchor="middle")

    body = "\n".join(svg.parts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{total_h}" viewBox="0 0 {_WIDTH} {total_h}">\n'
        f'<rect x="0" y="0" width="{_WIDTH}" height="{total_h}" fill="white"/>\n'
        f"{body}\n</svg>\n"
    )


def report_summary_lines(
    records: list[TrialRecord], region_threshold: float = 0.5
) -> list[str]:
    """Human-readable lines: baseline comparison, fits, region cells."""
    ok = [r for r in records if r.status == "ok" and np.isfinite(r.final_elbo)]
    lines = []
    base = baseline_granularity(ok)
    lines.append(
        f"baseline granularity (singleton-block rows, mean 1/m): {base:.4f} "
        f"| drawing reference: {BASELINE_REFERENCE_G}"
    )
    for beta in sorted({r.beta for r in ok}):
        points = optimal_granularity_points([r for r in ok if r.beta == beta])
        pts = ", ".join(f"({p.capacity}, {p.mean_best_g:.3f})" for p in points)
        line = f"beta={beta:g}: optimal points {pts}"
        if len({p.capacity for p in points}) >= 3:
            fit = fit_trajectory_curve(points)
            line += (
                f" | fit g = {fit.a:.3e}*cap^2 + {fit.b:.3e}*cap + {fit.c:.3f} "
                f"(residual {fit.residual_norm:.4f})"
            )
        lines.append(line)
    region = [c for c in omniscient_region(records, region_threshold) if c.in_region]
    if region:
        cells = ", ".join(f"(cap={c.capacity}, g={c.g:.3f})" for c in region)
        lines.append(f"collapsed-latent region (threshold {region_threshold:g}): {cells}")
    else:
        lines.append(f"collapsed-latent region (threshold {region_threshold:g}): empty")
    return lines


# -- latent traversal strips -------------------------------------------------


def traversal_strip(
    spec, store, dims=None, steps: int = 7, lo: float = -2.0, hi: float = 2.0
) -> np.ndarray:
    """Decode a grid traversing each latent dim over [lo, hi], others 0.

    Returns a uint8 image of (len(dims) * H) x (steps * W) tiles: one row
    per traversed dimension, one column per traversal step.
    """
    if dims is None:
        dims = range(spec.latent_dim)
    dims = list(dims)
    h, w, c = spec.input_shape
    values = np.linspace(lo, hi, steps)
    grid = np.zeros((len(dims) * h, steps * w, c), dtype=np.uint8)
    for ri, dim in enumerate(dims):
        z = np.zeros((steps, spec.latent_dim), dtype=np.float32)
        z[:, dim] = values
        logits = decode(spec, store, z).data
        pixels = 1.0 / (1.0 + np.exp(-logits))
        tiles = (pixels.reshape(steps, h, w, c) * 255).astype(np.uint8)
        for si in range(steps):
            grid[ri * h : (ri + 1) * h, si * w : (si + 1) * w] = tiles[si]
    return grid


def write_image(img: np.ndarray, path):
    """Write a grayscale (PGM) or RGB (PPM) binary image file."""
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, c = img.shape
    path = Path(path)
    if c == 1:
        header = f"P5\n{w} {h}\n255\n".encode()
        path.write_bytes(header + img[:, :, 0].tobytes())
    elif c == 3:
        header = f"P6\n{w} {h}\n255\n".encode()
        path.write_bytes(header + img.tobytes())
    else:
        raise models.ModelError(f"cannot write image with {c} channels")
