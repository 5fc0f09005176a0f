"""Phase classification of grid cells and SVG heatmap rendering.

A converged cell is locally sharp or flat by comparing its Hessian
trace with a grid-relative quantile, and globally poorly-connected
when its mean mode connectivity sits below ``-eps_mc``.  Sharp + poor
is phase I, sharp otherwise II, flat + poor III, and flat + connected
IV, with IV split by mean CKA into IV-A (dissimilar replicas) and IV-B
(similar replicas, the "globally nice" corner).  Cells whose replicates
all diverged stay NC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curves import CurveProfile
from .errors import ParameterError

PHASE_LABELS = ("I", "II", "III", "IV-A", "IV-B", "NC")

# 16-stop perceptually-uniform sequential lookup table (viridis anchors)
SEQUENTIAL_LUT = (
    "#440154", "#481567", "#482677", "#453781", "#404788", "#39568c",
    "#33638d", "#2d708e", "#287d8e", "#238a8d", "#1f968b", "#20a387",
    "#29af7f", "#3cbb75", "#55c667", "#73d055",
)

# negative mc is a barrier (blue), zero is white, positive red
DIVERGING_LOW = (33, 102, 172)
DIVERGING_MID = (247, 247, 247)
DIVERGING_HIGH = (178, 24, 43)

PHASE_COLORS = {
    "I": "#d73027",
    "II": "#fc8d59",
    "III": "#91bfdb",
    "IV-A": "#4575b4",
    "IV-B": "#313695",
}

DIVERGING_METRICS = ("mc_mean", "beta_hat")


@dataclass(frozen=True)
class PhaseThresholds:
    eps_mc: float = 2.0
    sharp_quantile: float = 0.5
    tau_cka: float = 0.9
    loss_converged: float = 10.0

    def __post_init__(self):
        if not self.eps_mc > 0:
            raise ParameterError("eps_mc must be positive")
        if not 0.0 < self.sharp_quantile < 1.0:
            raise ParameterError("sharp_quantile must lie in (0, 1)")
        if not 0.0 < self.tau_cka < 1.0:
            raise ParameterError("tau_cka must lie in (0, 1)")
        if not self.loss_converged > 1.0:
            raise ParameterError("loss_converged must exceed 1")


@dataclass
class GridContext:
    """Grid-relative reference values the classifier compares against."""

    trace_threshold: float
    min_train_loss: float


def _converged(row: dict) -> bool:
    return row.get("n_converged", 0) > 0


def build_context(rows: list[dict], thresholds: PhaseThresholds) -> GridContext:
    traces = [r["hessian_trace_mean"] for r in rows
              if _converged(r) and r.get("hessian_trace_mean") is not None]
    losses = [r["train_loss_mean"] for r in rows
              if _converged(r) and r.get("train_loss_mean") is not None]
    if not traces:
        raise ParameterError("no converged cells to build a grid context from")
    threshold = float(np.quantile(np.asarray(traces), thresholds.sharp_quantile))
    return GridContext(trace_threshold=threshold, min_train_loss=float(min(losses)))


def is_low_loss(row: dict, ctx: GridContext, thresholds: PhaseThresholds) -> bool:
    """Whether the cell trained to within loss_converged x the grid minimum."""
    loss = row.get("train_loss_mean")
    return loss is not None and loss <= thresholds.loss_converged * ctx.min_train_loss


def classify_cell(row: dict, ctx: GridContext, thresholds: PhaseThresholds) -> str:
    """One of I, II, III, IV-A, IV-B for a converged cell, NC otherwise."""
    if not _converged(row):
        return "NC"
    trace = row.get("hessian_trace_mean")
    beta = row.get("beta_hat")
    mu = row.get("mu_hat")
    if trace is None or beta is None or mu is None:
        return "NC"
    sharp = trace > ctx.trace_threshold
    poor = beta < -thresholds.eps_mc
    if sharp:
        return "I" if poor else "II"
    if poor:
        return "III"
    return "IV-B" if mu >= thresholds.tau_cka else "IV-A"


def label_rows(rows: list[dict], thresholds: PhaseThresholds) -> list[str]:
    """Classify every row against the grid-wide context."""
    ctx = build_context(rows, thresholds)
    return [classify_cell(row, ctx, thresholds) for row in rows]


# -- SVG rendering -------------------------------------------------------


def _hex_to_rgb(color: str) -> tuple[int, int, int]:
    return tuple(int(color[i : i + 2], 16) for i in (1, 3, 5))


def _sequential_color(frac: float) -> str:
    idx = min(int(frac * len(SEQUENTIAL_LUT)), len(SEQUENTIAL_LUT) - 1)
    return SEQUENTIAL_LUT[idx]


def _diverging_color(value: float, span: float) -> str:
    if span == 0.0:
        rgb = DIVERGING_MID
    else:
        frac = max(-1.0, min(1.0, value / span))
        lo, mid, hi = DIVERGING_LOW, DIVERGING_MID, DIVERGING_HIGH
        if frac < 0:
            w = -frac
            rgb = tuple(round(m + w * (l - m)) for l, m in zip(lo, mid))
        else:
            rgb = tuple(round(m + frac * (h - m)) for h, m in zip(hi, mid))
    return "#%02x%02x%02x" % rgb


CELL = 48
MARGIN_LEFT = 86
MARGIN_TOP = 30
MARGIN_BOTTOM = 56
LEGEND_W = 96


def _fmt_tick(value: float) -> str:
    return "%.4g" % value


def emit_heatmap(rows: list[dict], metric: str, path, orientation: str = "auto") -> None:
    """One SVG rect per grid cell, colored by the chosen metric.

    Load increases to the right; temperature increases toward the top,
    which for a batch-size axis puts the *smallest* batch on top (batch
    size is inverse temperature).  Non-converged cells are hatched.
    """
    if not rows:
        raise ParameterError("no rows to plot")
    load_vals = sorted({r["load_value"] for r in rows})
    temp_vals = sorted({r["temp_value"] for r in rows})
    index = {(r["load_value"], r["temp_value"]): r for r in rows}
    if len(index) != len(load_vals) * len(temp_vals):
        raise ParameterError("rows do not form a full rectangular grid")

    temp_kind = rows[0]["temp_kind"]
    top_to_bottom = list(temp_vals) if temp_kind == "batch_size" else list(reversed(temp_vals))
    if orientation == "flip":
        top_to_bottom = list(reversed(top_to_bottom))
    elif orientation != "auto":
        raise ParameterError("orientation must be 'auto' or 'flip'")

    categorical = metric == "phase_label"
    if categorical:
        values = {k: (r[metric] or "NC") for k, r in index.items()}
        present = [v for v in values.values() if v != "NC"]
        vmin = vmax = None
    else:
        values = {k: r.get(metric) for k, r in index.items()}
        present = [v for v in values.values() if v is not None]
        if present:
            vmin, vmax = min(present), max(present)
        else:
            vmin = vmax = 0.0
    diverging = metric in DIVERGING_METRICS

    width = MARGIN_LEFT + CELL * len(load_vals) + LEGEND_W
    height = MARGIN_TOP + CELL * len(top_to_bottom) + MARGIN_BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<defs><pattern id="nc" width="8" height="8" patternUnits="userSpaceOnUse">'
        '<rect width="8" height="8" fill="#dddddd"/>'
        '<path d="M0,8 L8,0" stroke="#888888" stroke-width="1.5"/></pattern></defs>',
        f'<text x="{MARGIN_LEFT}" y="{MARGIN_TOP - 12}" font-size="13" '
        f'font-family="sans-serif">{metric}</text>',
    ]

    span = max(abs(vmin), abs(vmax)) if (diverging and present) else 0.0
    for col, lv in enumerate(load_vals):
        for rix, tv in enumerate(top_to_bottom):
            x = MARGIN_LEFT + col * CELL
            y = MARGIN_TOP + rix * CELL
            v = values[(lv, tv)]
            if categorical:
                fill = "url(#nc)" if v == "NC" else PHASE_COLORS.get(v, "url(#nc)")
            elif v is None:
                fill = "url(#nc)"
            elif diverging:
                fill = _diverging_color(v, span)
            elif vmax == vmin:
                fill = _sequential_color(0.5)
            else:
                fill = _sequential_color((v - vmin) / (vmax - vmin))
            out.append(
                f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                f'fill="{fill}" stroke="#ffffff" stroke-width="1"/>'
            )

    for col, lv in enumerate(load_vals):
        x = MARGIN_LEFT + col * CELL + CELL / 2
        y = MARGIN_TOP + CELL * len(top_to_bottom) + 16
        out.append(
            f'<text x="{x}" y="{y}" font-size="11" text-anchor="middle" '
            f'font-family="sans-serif">{_fmt_tick(lv)}</text>'
        )
    for rix, tv in enumerate(top_to_bottom):
        x = MARGIN_LEFT - 6
        y = MARGIN_TOP + rix * CELL + CELL / 2 + 4
        out.append(
            f'<text x="{x}" y="{y}" font-size="11" text-anchor="end" '
            f'font-family="sans-serif">{_fmt_tick(tv)}</text>'
        )
    out.append(
        f'<text x="{MARGIN_LEFT + CELL * len(load_vals) / 2}" y="{height - 8}" '
        f'font-size="12" text-anchor="middle" font-family="sans-serif">'
        f'{rows[0]["load_kind"]} (load &#8594;)</text>'
    )
    out.append(
        f'<text x="14" y="{MARGIN_TOP + CELL * len(top_to_bottom) / 2}" font-size="12" '
        f'text-anchor="middle" font-family="sans-serif" '
        f'transform="rotate(-90 14 {MARGIN_TOP + CELL * len(top_to_bottom) / 2})">'
        f'{temp_kind} (temperature &#8593;)</text>'
    )

    lx = MARGIN_LEFT + CELL * len(load_vals) + 18
    if categorical:
        seen = [p for p in PHASE_LABELS if p in present or p == "NC"]
        for k, lab in enumerate(seen):
            y = MARGIN_TOP + k * 22
            fill = PHASE_COLORS.get(lab, "url(#nc)")
            out.append(f'<rect x="{lx}" y="{y}" width="16" height="16" fill="{fill}"/>')
            out.append(
                f'<text x="{lx + 22}" y="{y + 12}" font-size="11" '
                f'font-family="sans-serif">{lab}</text>'
            )
    elif present:
        bar_h = CELL * len(top_to_bottom)
        steps = 32
        for s in range(steps):
            frac = 1.0 - (s + 0.5) / steps
            if diverging:
                fill = _diverging_color(-span + 2 * span * frac, span)
            else:
                fill = _sequential_color(frac)
            out.append(
                f'<rect x="{lx}" y="{MARGIN_TOP + s * bar_h / steps:.2f}" width="14" '
                f'height="{bar_h / steps + 0.5:.2f}" fill="{fill}"/>'
            )
        top_val = span if diverging else vmax
        bot_val = -span if diverging else vmin
        out.append(
            f'<text x="{lx + 18}" y="{MARGIN_TOP + 10}" font-size="11" '
            f'font-family="sans-serif">{_fmt_tick(top_val)}</text>'
        )
        out.append(
            f'<text x="{lx + 18}" y="{MARGIN_TOP + bar_h}" font-size="11" '
            f'font-family="sans-serif">{_fmt_tick(bot_val)}</text>'
        )
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


PROFILE_W = 400
PROFILE_H = 300
PAD = 46


def render_curve_profile(profile: CurveProfile, path) -> None:
    """Training error along the curve as a polyline with endpoint markers."""

    def sx(t):
        return PAD + t * (PROFILE_W - 2 * PAD)

    def sy(err):
        return PROFILE_H - PAD - (err / 100.0) * (PROFILE_H - 2 * PAD)

    pts = " ".join(f"{sx(t):.2f},{sy(e):.2f}" for t, e in zip(profile.t_values, profile.err01))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{PROFILE_W}" height="{PROFILE_H}" viewBox="0 0 {PROFILE_W} {PROFILE_H}">',
        f'<rect x="{PAD}" y="{PAD}" width="{PROFILE_W - 2 * PAD}" '
        f'height="{PROFILE_H - 2 * PAD}" fill="none" stroke="#333333"/>',
        f'<polyline points="{pts}" fill="none" stroke="#2166ac" stroke-width="2"/>',
    ]
    for t, e in zip(profile.t_values, profile.err01):
        marker = t in (0.0, 1.0)
        r = 5 if marker else 3
        fill = "#b2182b" if marker else "#2166ac"
        out.append(f'<circle cx="{sx(t):.2f}" cy="{sy(e):.2f}" r="{r}" fill="{fill}"/>')
    for t in (0.0, 0.5, 1.0):
        out.append(
            f'<text x="{sx(t):.2f}" y="{PROFILE_H - PAD + 16}" font-size="11" '
            f'text-anchor="middle" font-family="sans-serif">{t:g}</text>'
        )
    for e in (0, 50, 100):
        out.append(
            f'<text x="{PAD - 8}" y="{sy(e) + 4:.2f}" font-size="11" '
            f'text-anchor="end" font-family="sans-serif">{e}</text>'
        )
    out.append(
        f'<text x="{PROFILE_W / 2}" y="{PROFILE_H - 8}" font-size="12" '
        f'text-anchor="middle" font-family="sans-serif">t</text>'
    )
    out.append(
        f'<text x="14" y="{PROFILE_H / 2}" font-size="12" text-anchor="middle" '
        f'font-family="sans-serif" transform="rotate(-90 14 {PROFILE_H / 2})">'
        f'training error %</text>'
    )
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
