"""Plot-data emission: overlay CSV plus a dependency-free line-plot SVG.

The SVG is written by hand so its bytes are a pure function of the inputs;
each series renders as one polyline with exactly one point per epoch row.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

from ..errors import ConfigError

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_WIDTH, _HEIGHT = 800, 500
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 20, 45


def _read_series(path: Path) -> list[tuple[int, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "epoch" not in reader.fieldnames or "proxy" not in reader.fieldnames:
            raise ConfigError(f"{path}: not a run record CSV (need epoch and proxy columns)")
        rows = [(int(r["epoch"]), float(r["proxy"])) for r in reader]
    if not rows:
        raise ConfigError(f"{path}: no epoch rows")
    return rows


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def render_svg(series: dict[str, list[tuple[int, float]]]) -> str:
    """Line plot of proxy against epoch; log10 proxy axis when possible."""
    all_vals = [v for rows in series.values() for _, v in rows]
    all_epochs = [e for rows in series.values() for e, _ in rows]
    log_y = all(v > 0 for v in all_vals)
    ys = [math.log10(v) for v in all_vals] if log_y else list(all_vals)
    y_lo, y_hi = min(ys), max(ys)
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    x_lo, x_hi = min(all_epochs), max(all_epochs)
    if x_hi == x_lo:
        x_hi = x_lo + 1
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(e: float) -> float:
        return _MARGIN_L + (e - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v: float) -> float:
        y = math.log10(v) if log_y else v
        return _MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T}" x2="{_MARGIN_L}" '
        f'y2="{_HEIGHT - _MARGIN_B}" stroke="black"/>',
        f'<line x1="{_MARGIN_L}" y1="{_HEIGHT - _MARGIN_B}" x2="{_WIDTH - _MARGIN_R}" '
        f'y2="{_HEIGHT - _MARGIN_B}" stroke="black"/>',
    ]
    for tick in _ticks(y_lo, y_hi):
        py = _MARGIN_T + (y_hi - tick) / (y_hi - y_lo) * plot_h
        label = f"1e{tick:.2f}" if log_y else f"{tick:.3g}"
        parts.append(
            f'<text x="{_MARGIN_L - 6}" y="{py + 4:.1f}" font-size="11" '
            f'text-anchor="end">{label}</text>'
        )
    for tick in _ticks(x_lo, x_hi):
        px = sx(tick)
        parts.append(
            f'<text x="{px:.1f}" y="{_HEIGHT - _MARGIN_B + 16}" font-size="11" '
            f'text-anchor="middle">{tick:.0f}</text>'
        )
    parts.append(
        f'<text x="{_WIDTH / 2}" y="{_HEIGHT - 8}" font-size="12" '
        f'text-anchor="middle">epoch</text>'
    )
    for idx, (label, rows) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{sx(e):.2f},{sy(v):.2f}" for e, v in rows)
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'
        )
        parts.append(
            f'<text x="{_WIDTH - _MARGIN_R - 6}" y="{_MARGIN_T + 16 + 16 * idx}" '
            f'font-size="12" text-anchor="end" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_plotdata(csv_paths: list[str], out_dir: str) -> int:
    """Combine run records into a long-format CSV and one overlay SVG."""
    if not csv_paths:
        raise ConfigError("plotdata needs at least one run record CSV")
    series: dict[str, list[tuple[int, float]]] = {}
    for raw in csv_paths:
        path = Path(raw)
        label = path.stem
        if label in series:
            label = f"{label}:{len(series)}"
        series[label] = _read_series(path)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["epoch,proxy,label"]
    for label, rows in series.items():
        for epoch, proxy in rows:
            lines.append(f"{epoch},{format(proxy, '.17g')},{label}")
    (out / "plot.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    (out / "plot.svg").write_text(render_svg(series), encoding="ascii")
    print(f"wrote {out / 'plot.csv'} and {out / 'plot.svg'}")
    return 0
