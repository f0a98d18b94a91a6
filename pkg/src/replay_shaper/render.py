"""Text and SVG renderings of grid-world policies."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .mdp import ACTION_ARROWS, MOVES, GridWorldSpec


def policy_grid(spec: GridWorldSpec, policy: Sequence[int]) -> list[list[str]]:
    """One symbol per cell: an arrow, ``G`` for goal, ``C`` for cliff."""
    out = []
    for r in range(spec.rows):
        row = []
        for c in range(spec.cols):
            if (r, c) in spec.goal:
                row.append("G")
            elif (r, c) in spec.cliff:
                row.append("C")
            elif (r, c) in spec.terminal_cells:
                row.append(" ")
            else:
                row.append(ACTION_ARROWS[int(policy[spec.state_of((r, c))])])
        out.append(row)
    return out


def policy_ascii(spec: GridWorldSpec, policy: Sequence[int]) -> str:
    return "\n".join(" ".join(row) for row in policy_grid(spec, policy)) + "\n"


def side_by_side(blocks: dict[str, str], gap: int = 4) -> str:
    """Place several ASCII grids next to each other under their titles."""
    names = list(blocks)
    lines = {n: blocks[n].rstrip("\n").split("\n") for n in names}
    width = {n: max(len(n), *(len(x) for x in lines[n])) for n in names}
    height = max(len(v) for v in lines.values())
    pad = " " * gap
    out = [pad.join(n.ljust(width[n]) for n in names).rstrip()]
    for i in range(height):
        out.append(pad.join((lines[n][i] if i < len(lines[n]) else "").ljust(width[n]) for n in names).rstrip())
    return "\n".join(out) + "\n"


_CELL = 60


def policy_svg(spec: GridWorldSpec, policy: Sequence[int], values: np.ndarray | None = None,
               title: str | None = None) -> str:
    """SVG grid with greedy arrows; risky transitions drawn as red edge arrows.

    ``values`` (per state) are printed small in each cell when given.
    No timestamps or random ids, so output is stable for identical input.
    """
    w, h = spec.cols * _CELL, spec.rows * _CELL
    top = 24 if title else 0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w + 2}" height="{h + top + 2}" '
        f'viewBox="-1 {-top - 1} {w + 2} {h + top + 2}">',
        '<defs><marker id="head" markerWidth="6" markerHeight="6" refX="3" refY="3" orient="auto">'
        '<path d="M0,0 L6,3 L0,6 z" fill="#222"/></marker>'
        '<marker id="risk" markerWidth="6" markerHeight="6" refX="3" refY="3" orient="auto">'
        '<path d="M0,0 L6,3 L0,6 z" fill="#c0392b"/></marker></defs>',
    ]
    if title:
        parts.append(f'<text x="{w / 2}" y="-8" text-anchor="middle" font-family="monospace" '
                     f'font-size="14">{_escape(title)}</text>')
    for r in range(spec.rows):
        for c in range(spec.cols):
            x, y = c * _CELL, r * _CELL
            cell = (r, c)
            fill = "#2e8b57" if cell in spec.goal else "#555" if cell in spec.cliff else "#fff"
            parts.append(f'<rect x="{x}" y="{y}" width="{_CELL}" height="{_CELL}" fill="{fill}" stroke="#999"/>')
            cx, cy = x + _CELL / 2, y + _CELL / 2
            if cell in spec.goal or cell in spec.cliff:
                label = "G" if cell in spec.goal else "C"
                parts.append(f'<text x="{cx}" y="{cy + 6}" text-anchor="middle" font-family="monospace" '
                             f'font-size="18" fill="#fff">{label}</text>')
                continue
            a = int(policy[spec.state_of(cell)])
            dr, dc = MOVES[a]
            risky = (cell, a) in spec.risky
            L = _CELL * 0.3
            parts.append(
                f'<line x1="{cx - dc * L:.1f}" y1="{cy - dr * L:.1f}" x2="{cx + dc * L:.1f}" '
                f'y2="{cy + dr * L:.1f}" stroke="{"#c0392b" if risky else "#222"}" stroke-width="3" '
                f'marker-end="url(#{"risk" if risky else "head"})"/>'
            )
            if values is not None:
                parts.append(f'<text x="{x + 3}" y="{y + _CELL - 4}" font-family="monospace" '
                             f'font-size="9" fill="#666">{float(values[spec.state_of(cell)]):.1f}</text>')
    # risky transitions as thin red marks on the cell edge they cross
    for cell, a in sorted(spec.risky):
        r, c = cell
        dr, dc = MOVES[a]
        cx, cy = c * _CELL + _CELL / 2, r * _CELL + _CELL / 2
        ex, ey = cx + dc * _CELL / 2, cy + dr * _CELL / 2
        parts.append(f'<line x1="{ex - dr * 10:.1f}" y1="{ey - dc * 10:.1f}" x2="{ex + dr * 10:.1f}" '
                     f'y2="{ey + dc * 10:.1f}" stroke="#c0392b" stroke-width="4"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
