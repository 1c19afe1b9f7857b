"""Dependency-free SVG learning-curve rendering.

Output is deterministic text: fixed-precision coordinates, stable element
order, one mean polyline plus a min/max band per strategy, a horizontal
line at the target accuracy, and dashed verticals at each strategy's mean
labels-to-target.
"""

from __future__ import annotations

WIDTH = 860
HEIGHT = 520
MARGIN_L = 70
MARGIN_R = 160
MARGIN_T = 40
MARGIN_B = 60

PALETTE = {
    "random": "#1f77b4",
    "fps": "#ff7f0e",
    "osal": "#2ca02c",
    "mcfps": "#d62728",
}
_FALLBACK = "#7f7f7f"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Scale:
    def __init__(self, x_max: float, y_min: float = 0.0, y_max: float = 1.0):
        self.x_max = max(x_max, 1.0)
        self.y_min = y_min
        self.y_span = max(y_max - y_min, 1e-9)

    def x(self, v: float) -> float:
        frac = v / self.x_max
        return MARGIN_L + frac * (WIDTH - MARGIN_L - MARGIN_R)

    def y(self, v: float) -> float:
        frac = (v - self.y_min) / self.y_span
        return HEIGHT - MARGIN_B - frac * (HEIGHT - MARGIN_T - MARGIN_B)


def render_learning_curves(curves: dict, target: float, labels_to_target: dict) -> str:
    """Build the SVG document.

    curves: strategy -> list of (labels, mean_acc, min_acc, max_acc) rows.
    labels_to_target: strategy -> mean labels-to-target or None.
    """
    x_max = 1.0
    for rows in curves.values():
        for labels, *_ in rows:
            x_max = max(x_max, float(labels))
    scale = _Scale(x_max)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]

    # axes
    x0, y0 = scale.x(0.0), scale.y(0.0)
    x1, y1 = scale.x(x_max), scale.y(1.0)
    parts.append(
        f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x1)}" y2="{_fmt(y0)}" '
        'stroke="black" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x0)}" y2="{_fmt(y1)}" '
        'stroke="black" stroke-width="1"/>'
    )
    for i in range(0, 11):
        acc = i / 10.0
        y = scale.y(acc)
        parts.append(
            f'<line x1="{_fmt(x0 - 4)}" y1="{_fmt(y)}" x2="{_fmt(x0)}" y2="{_fmt(y)}" '
            'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(x0 - 8)}" y="{_fmt(y + 4)}" font-size="11" '
            f'text-anchor="end">{acc:.1f}</text>'
        )
    n_ticks = 8
    for i in range(n_ticks + 1):
        v = x_max * i / n_ticks
        x = scale.x(v)
        parts.append(
            f'<line x1="{_fmt(x)}" y1="{_fmt(y0)}" x2="{_fmt(x)}" y2="{_fmt(y0 + 4)}" '
            'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y0 + 18)}" font-size="11" '
            f'text-anchor="middle">{v:.0f}</text>'
        )
    parts.append(
        f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(HEIGHT - 16)}" font-size="13" '
        'text-anchor="middle">cumulative labels</text>'
    )
    parts.append(
        f'<text x="16" y="{_fmt((y0 + y1) / 2)}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {_fmt((y0 + y1) / 2)})">test accuracy</text>'
    )

    # target accuracy line
    ty = scale.y(target)
    parts.append(
        f'<line class="target" x1="{_fmt(x0)}" y1="{_fmt(ty)}" x2="{_fmt(x1)}" '
        f'y2="{_fmt(ty)}" stroke="#444444" stroke-width="1" stroke-dasharray="6,3"/>'
    )

    legend_y = MARGIN_T + 10
    for name in sorted(curves):
        rows = curves[name]
        color = PALETTE.get(name, _FALLBACK)
        band = [(r[0], r[3]) for r in rows] + [(r[0], r[2]) for r in reversed(rows)]
        band_pts = " ".join(f"{_fmt(scale.x(x))},{_fmt(scale.y(y))}" for x, y in band)
        parts.append(
            f'<polygon class="band" points="{band_pts}" fill="{color}" '
            'fill-opacity="0.15" stroke="none"/>'
        )
        mean_pts = " ".join(
            f"{_fmt(scale.x(r[0]))},{_fmt(scale.y(r[1]))}" for r in rows
        )
        parts.append(
            f'<polyline class="mean" data-strategy="{name}" points="{mean_pts}" '
            f'fill="none" stroke="{color}" stroke-width="2"/>'
        )
        ltt = labels_to_target.get(name)
        if ltt is not None:
            lx = scale.x(ltt)
            parts.append(
                f'<line class="labels-to-target" data-strategy="{name}" '
                f'x1="{_fmt(lx)}" y1="{_fmt(y0)}" x2="{_fmt(lx)}" y2="{_fmt(y1)}" '
                f'stroke="{color}" stroke-width="1.5" stroke-dasharray="4,4"/>'
            )
        parts.append(
            f'<rect x="{WIDTH - MARGIN_R + 10}" y="{legend_y - 9}" width="14" '
            f'height="4" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{WIDTH - MARGIN_R + 30}" y="{legend_y - 2}" '
            f'font-size="12">{name}</text>'
        )
        legend_y += 18

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
