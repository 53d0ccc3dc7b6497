"""Deterministic quadrature references for low-dimensional posteriors.

These routines exist to provide ground truth that is independent of any
sampler: a zooming trapezoidal grid for two-parameter posteriors and a
tensorised Gauss-Legendre rule for the three-parameter evidence model.
They are slow and exact-ish on purpose.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .targets import Box


def _grid_eval(batch_logpdf, xs, ys):
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return batch_logpdf(pts).reshape(len(xs), len(ys))


def _trapezoid_logsum(logf, xs, ys):
    """log of the trapezoidal integral of exp(logf) on the grid."""
    wx = np.gradient(xs)
    wx[0] *= 0.5
    wx[-1] *= 0.5
    wy = np.gradient(ys)
    wy[0] *= 0.5
    wy[-1] *= 0.5
    logw = np.log(wx)[:, None] + np.log(wy)[None, :]
    return logsumexp(logf + logw)


def grid_posterior_moments(batch_logpdf, search_box: Box, *,
                           coarse: int = 400, zoom: int = 96,
                           zoom_levels: int = 14, final: int = 500,
                           pad: float = 10.0):
    """Mean, covariance, and log normaliser of a 2D density.

    Stage 1 locates the dominant mode on a coarse grid over
    ``search_box``. Stage 2 iterates a self-consistent window: weighted
    moments on the current window choose the next window as ``pad``
    standard deviations around the running mean, clipped to the box, so
    the window grows toward a broad density and shrinks onto a spike.
    The final pass integrates on a fine grid over the settled window.

    Returns ``(log_z, mean, cov)``, where ``log_z`` is the integral over
    the search box. Assumes the mass that matters sits in a single
    contiguous region, which holds for the models this package ships.
    """
    lows, highs = search_box.lows.copy(), search_box.highs.copy()
    xs = np.linspace(lows[0], highs[0], coarse)
    ys = np.linspace(lows[1], highs[1], coarse)
    logf = _grid_eval(batch_logpdf, xs, ys)
    i, j = np.unravel_index(np.argmax(logf), logf.shape)
    cx, cy = float(xs[i]), float(ys[j])
    half_x = (highs[0] - lows[0]) / (coarse - 1) * 4.0
    half_y = (highs[1] - lows[1]) / (coarse - 1) * 4.0

    for _ in range(zoom_levels):
        xs = np.linspace(max(lows[0], cx - half_x), min(highs[0], cx + half_x), zoom)
        ys = np.linspace(max(lows[1], cy - half_y), min(highs[1], cy + half_y), zoom)
        logf = _grid_eval(batch_logpdf, xs, ys)
        w = np.exp(logf - logf.max())
        w /= w.sum()
        mx = float(np.sum(w * xs[:, None]))
        my = float(np.sum(w * ys[None, :]))
        sx = float(np.sqrt(np.sum(w * (xs[:, None] - mx) ** 2)))
        sy = float(np.sqrt(np.sum(w * (ys[None, :] - my) ** 2)))
        # resolution floor keeps an under-resolved spike shrinking gently
        sx = max(sx, 0.5 * (xs[1] - xs[0]))
        sy = max(sy, 0.5 * (ys[1] - ys[0]))
        new_half_x = pad * sx
        new_half_y = pad * sy
        cx, cy = mx, my
        settled = (
            abs(new_half_x - half_x) < 1e-3 * half_x
            and abs(new_half_y - half_y) < 1e-3 * half_y
        )
        half_x, half_y = new_half_x, new_half_y
        if settled:
            break

    xs = np.linspace(max(lows[0], cx - half_x), min(highs[0], cx + half_x), final)
    ys = np.linspace(max(lows[1], cy - half_y), min(highs[1], cy + half_y), final)
    logf = _grid_eval(batch_logpdf, xs, ys)
    log_z = _trapezoid_logsum(logf, xs, ys)

    wx = np.gradient(xs)
    wx[0] *= 0.5
    wx[-1] *= 0.5
    wy = np.gradient(ys)
    wy[0] *= 0.5
    wy[-1] *= 0.5
    dens = np.exp(logf - logf.max()) * wx[:, None] * wy[None, :]
    dens /= dens.sum()
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    mean = np.array([np.sum(dens * gx), np.sum(dens * gy)])
    dx = gx - mean[0]
    dy = gy - mean[1]
    cov = np.array(
        [
            [np.sum(dens * dx * dx), np.sum(dens * dx * dy)],
            [np.sum(dens * dx * dy), np.sum(dens * dy * dy)],
        ]
    )
    return float(log_z), mean, cov


def evidence_quadrature_3d(log_joint, ranges, nodes: int = 80) -> float:
    """log of a 3D integral by tensorised Gauss-Legendre.

    ``log_joint(a, b, c)`` must accept scalars; ``ranges`` holds three
    (low, high) pairs covering essentially all of the mass.
    """
    xs, ws = [], []
    for lo, hi in ranges:
        x, w = np.polynomial.legendre.leggauss(nodes)
        xs.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w)
    logw = [np.log(w) for w in ws]
    vals = np.empty((nodes, nodes, nodes))
    for i, a in enumerate(xs[0]):
        for j, b in enumerate(xs[1]):
            for k, c in enumerate(xs[2]):
                vals[i, j, k] = log_joint(a, b, c)
    vals = vals + logw[0][:, None, None] + logw[1][None, :, None] + logw[2][None, None, :]
    return float(logsumexp(vals))
