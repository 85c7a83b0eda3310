#!/usr/bin/env python3
"""
Static SVG rendering of mean per-episode regret curves with 95% CI bands.
Pure function of aggregate results; never re-runs learners.
"""

import logging
import os
from typing import Dict, List, Optional

import numpy as np
from jinja2 import Environment, FileSystemLoader, select_autoescape

from harness import AggregateResult

logger = logging.getLogger(__name__)

TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'templates')
TEMPLATE_NAME = 'regret_plot.svg.j2'

PALETTE = ['#1f77b4', '#d62728', '#2ca02c', '#ff7f0e', '#9467bd', '#8c564b']
WIDTH, HEIGHT = 720, 440
MARGINS = {'left': 70, 'right': 20, 'top': 40, 'bottom': 50}


def trailing_average(values: np.ndarray, window: int) -> np.ndarray:
    """Mean of the last `window` values up to and including each point"""
    if window < 1:
        raise ValueError(f"smoothing window must be at least 1, got {window}")
    values = np.asarray(values, dtype=float)
    sums = np.cumsum(np.concatenate([[0.0], values]))
    idx = np.arange(1, len(values) + 1)
    start = np.maximum(idx - window, 0)
    return (sums[idx] - sums[start]) / (idx - start)


def _ticks(low: float, high: float, count: int = 5) -> List[float]:
    if high <= low:
        return [low]
    return list(np.linspace(low, high, count))


def render_svg(aggregates: Dict[str, AggregateResult], smooth: Optional[int] = None,
               title: str = "Per Episode Regret") -> str:
    if not aggregates:
        raise ValueError("nothing to plot")

    curves = []
    for name, agg in aggregates.items():
        mean, half = agg.mean_per, agg.ci_half_width
        if smooth is not None:
            mean, half = trailing_average(mean, smooth), trailing_average(half, smooth)
        curves.append((name, mean, half))

    K = max(len(mean) for _, mean, _ in curves)
    y_max = max(float(np.max(mean + half)) for _, mean, half in curves)
    y_min = min(0.0, min(float(np.min(mean - half)) for _, mean, half in curves))
    if y_max <= y_min:
        y_max = y_min + 1.0

    left, top = MARGINS['left'], MARGINS['top']
    right, bottom = WIDTH - MARGINS['right'], HEIGHT - MARGINS['bottom']

    def sx(episode):
        return left + (episode - 1) / max(K - 1, 1) * (right - left)

    def sy(value):
        return bottom - (value - y_min) / (y_max - y_min) * (bottom - top)

    series = []
    for i, (name, mean, half) in enumerate(curves):
        episodes = np.arange(1, len(mean) + 1)
        line = ' '.join(f"{sx(e):.2f},{sy(v):.2f}" for e, v in zip(episodes, mean))
        upper = [f"{sx(e):.2f},{sy(v):.2f}" for e, v in zip(episodes, mean + half)]
        lower = [f"{sx(e):.2f},{sy(v):.2f}" for e, v in zip(episodes[::-1], (mean - half)[::-1])]
        band = 'M ' + ' L '.join(upper + lower) + ' Z'
        series.append({'name': name, 'color': PALETTE[i % len(PALETTE)], 'line': line, 'band': band})

    env = Environment(loader=FileSystemLoader(TEMPLATE_DIR), autoescape=select_autoescape(['svg', 'j2']))
    template = env.get_template(TEMPLATE_NAME)
    return template.render(
        width=WIDTH, height=HEIGHT, left=left, right=right, top=top, bottom=bottom, title=title,
        x_ticks=[{'pos': sx(e), 'label': str(int(round(e)))} for e in _ticks(1, K)],
        y_ticks=[{'pos': sy(v), 'label': f"{v:.2f}"} for v in _ticks(y_min, y_max)],
        curves=series,
    )


def write_svg(aggregates: Dict[str, AggregateResult], path: str, smooth: Optional[int] = None) -> str:
    svg = render_svg(aggregates, smooth=smooth)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(svg)
    logger.info(f"Wrote plot with {len(aggregates)} curve(s) to {path}")
    return path
