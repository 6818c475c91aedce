"""Shared experiment plumbing: observation layouts, posterior summaries from
reduced chains, and the run manifest."""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from .. import __version__
from ..diagnostics import PosteriorSummary, ess
from ..io_utils import write_json


def interior_grid(x0, x1, y0, y1, nx, ny):
    """nx * ny regularly spaced points strictly inside a rectangle
    (half-cell inset, row-major order)."""
    xs = x0 + (x1 - x0) * (np.arange(nx) + 0.5) / nx
    ys = y0 + (y1 - y0) * (np.arange(ny) + 0.5) / ny
    xx, yy = np.meshgrid(xs, ys)
    return np.column_stack([xx.ravel(), yy.ravel()])


def well_points(lx, ly, n_wells, per_well):
    """Vertical well paths: n_wells x-stations, per_well depths each."""
    xs = lx * (np.arange(n_wells) + 0.5) / n_wells
    ys = ly * (np.arange(per_well) + 0.5) / per_well
    pts = [(x, y) for x in xs for y in ys]
    return np.asarray(pts)


def range_noise_std(values, percent):
    """Noise standard deviation as a percentage of the observed range."""
    values = np.asarray(values, dtype=float)
    spread = float(values.max() - values.min())
    if spread <= 0:
        raise ValueError("observed values have zero range; cannot set relative noise")
    return percent / 100.0 * spread


def reduced_chain_field_summary(states, basis_p, basis_m, mean_p, mean_m,
                                batch=2000):
    """Posterior mean and pointwise variance of the reconstructed fields
    from a chain of reduced coordinates, accumulated in batches."""
    states = np.asarray(states, dtype=float)
    kp = basis_p.k
    n1, n2 = basis_p.n, basis_m.n
    count = 0
    s1 = np.zeros(n1 + n2)
    s2 = np.zeros(n1 + n2)
    for start in range(0, states.shape[0], batch):
        block = states[start : start + batch]
        p = mean_p[:, None] + basis_p.expand(block[:, :kp].T)
        m = mean_m[:, None] + basis_m.expand(block[:, kp:].T)
        f = np.vstack([p, m])
        s1 += f.sum(axis=1)
        s2 += (f**2).sum(axis=1)
        count += block.shape[0]
    mean = s1 / count
    var = s2 / count - mean**2
    return PosteriorSummary(mean[:n1], mean[n1:], np.maximum(var[:n1], 0.0),
                            np.maximum(var[n1:], 0.0))


def median_ess(states):
    """Median effective sample size over the columns of a chain block."""
    states = np.asarray(states, dtype=float)
    vals = []
    for j in range(states.shape[1]):
        col = states[:, j]
        if col.std() == 0.0:
            continue
        vals.append(ess(col))
    return float(np.median(vals)) if vals else float("nan")


def write_manifest(out_dir, subcommand, cfg_dict, extras=None):
    payload = {
        "subcommand": subcommand,
        "version": __version__,
        "seed": cfg_dict.get("seed"),
        "config": cfg_dict,
    }
    payload.update(extras or {})
    return write_json(Path(out_dir) / "manifest.json", payload)


def write_timings(out_dir, timings):
    """Wall-clock seconds per stage; kept out of the manifest so reruns with
    the same seed stay byte-identical everywhere else."""
    return write_json(Path(out_dir) / "timings.json", timings)


class StageTimer:
    def __init__(self):
        self.timings = {}
        self._t0 = time.perf_counter()

    def mark(self, name):
        t = time.perf_counter()
        self.timings[name] = round(t - self._t0, 3)
        self._t0 = t

    def total(self):
        self.timings["total"] = round(sum(self.timings.values()), 3)
        return self.timings


def write_plot_script(out_dir, body):
    """Drop a self-contained matplotlib script next to the data files."""
    path = Path(out_dir) / "plot.py"
    path.write_text(body)
    return path
