"""SVG map of per-site infection probability on a given day."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .geometry import CommunityMap

WIDTH = 640
MARGIN = 40
LEGEND_W = 90
POINT_RADIUS = 7
PATIENT_RADIUS = 5


def ramp(p: float) -> str:
    """Linear white-to-red colour for an infection probability in [0, 1]."""
    p = float(np.clip(p, 0.0, 1.0))
    g = int(round(255 * (1.0 - p)))
    return f"#ff{g:02x}{g:02x}"


def render_heatmap(cmap: CommunityMap, infection: dict[int, float], day: float, title: str = "") -> str:
    """Infection probability ``1 - P_j(day)`` per site id, drawn on the site geometry."""
    boxes = [s.area for s in cmap.sites]
    xs = [b[0] for b in boxes] + [b[2] for b in boxes]
    ys = [b[1] for b in boxes] + [b[3] for b in boxes]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    span = max(x1 - x0, y1 - y0, 1.0)
    pad = 0.08 * span
    x0, x1, y0, y1 = x0 - pad, x1 + pad, y0 - pad, y1 + pad
    scale = (WIDTH - 2 * MARGIN - LEGEND_W) / max(x1 - x0, y1 - y0)
    height = int(2 * MARGIN + scale * (y1 - y0))

    def px(x, y):
        # flip y so north is up
        return MARGIN + scale * (x - x0), MARGIN + scale * (y1 - y)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
        f'viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">',
        '<rect width="100%" height="100%" fill="#fafafa"/>',
        f'<text x="{MARGIN}" y="{MARGIN / 2 + 4:.1f}" font-size="13">{escape(title or "infection probability")}, day {day:g}</text>',
    ]
    for s in cmap.susceptible:
        p = infection.get(s.id, 0.0)
        if s.rect is not None and s.rect[2] > s.rect[0] and s.rect[3] > s.rect[1]:
            ax, ay = px(s.rect[0], s.rect[3])
            bx, by = px(s.rect[2], s.rect[1])
            out.append(
                f'<rect x="{ax:.2f}" y="{ay:.2f}" width="{bx - ax:.2f}" height="{by - ay:.2f}" '
                f'fill="{ramp(p)}" stroke="#333" stroke-width="1"><title>site {s.id}: {p:.4f}</title></rect>'
            )
            cx, cy = px(*s.center)
        else:
            cx, cy = px(*s.center)
            out.append(
                f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{POINT_RADIUS + 4}" fill="{ramp(p)}" '
                f'stroke="#333" stroke-width="1"><title>site {s.id}: {p:.4f}</title></circle>'
            )
            cy -= POINT_RADIUS + 8
        out.append(f'<text x="{cx:.2f}" y="{cy:.2f}" text-anchor="middle">{s.id}: {p:.3f}</text>')
    for s in cmap.index_patients:
        cx, cy = px(*s.position)
        out.append(
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{PATIENT_RADIUS}" fill="#b00000" stroke="#000" '
            f'stroke-width="1"><title>index patient {s.id}</title></circle>'
        )
    # legend: vertical ramp 0 (bottom) to 1 (top)
    lx = WIDTH - LEGEND_W + 10
    ly, lh = MARGIN + 10, height - 2 * MARGIN - 60
    out.append('<defs><linearGradient id="ramp" x1="0" y1="1" x2="0" y2="0">')
    out.append(f'<stop offset="0" stop-color="{ramp(0)}"/><stop offset="1" stop-color="{ramp(1)}"/>')
    out.append("</linearGradient></defs>")
    out.append(f'<rect x="{lx}" y="{ly}" width="16" height="{lh}" fill="url(#ramp)" stroke="#333"/>')
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        ty = ly + lh * (1.0 - v)
        out.append(f'<text x="{lx + 22}" y="{ty + 4:.1f}">{v:.2f}</text>')
    out.append(f'<text x="{lx - 4}" y="{ly - 6}">infected</text>')
    out.append(
        f'<circle cx="{lx + 8}" cy="{ly + lh + 24}" r="{PATIENT_RADIUS}" fill="#b00000" stroke="#000"/>'
        f'<text x="{lx + 18}" y="{ly + lh + 28}">index</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
