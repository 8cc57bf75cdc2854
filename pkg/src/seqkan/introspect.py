"""Post-hoc analysis: spline export, the learned-proxy correlation and the term-dominance check.

Every writer emits plain CSV plus a hand-built SVG. The SVG text depends only
on the numbers plotted, so identical inputs give byte-identical files.
"""

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DegenerateStepError, UsageError
from .models import atomic_write
from .pendulum import EPS, energy_terms
from .spline import SAMPLE_POINTS

DEFAULT_T_RANGE = (3, 400)
EXTRAPOLATION_START = 200
PALETTE = ("#1f4e9c", "#c0392b", "#2e7d32", "#6a1b9a")


# svg


def _fmt(v):
    return f"{v:.2f}"


def _scale(lo, hi, a, b):
    if hi == lo:
        return lambda v: (a + b) / 2.0
    return lambda v: a + (v - lo) / (hi - lo) * (b - a)


def _polyline(xs, ys, sx, sy, color, opacity=1.0, width=1.5):
    pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys))
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}" '
            f'stroke-opacity="{opacity:.3f}" points="{pts}"/>')


def _esc(text):
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _panel(x0, y0, w, h, series, title=None, legend=True):
    """One framed plot; ``series`` is a list of (xs, ys, color, opacity, label)."""
    xs_all = np.concatenate([np.asarray(s[0], dtype=float) for s in series])
    ys_all = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    ok = np.isfinite(ys_all)
    ylo, yhi = (float(ys_all[ok].min()), float(ys_all[ok].max())) if ok.any() else (0.0, 1.0)
    pad = 0.05 * (yhi - ylo) if yhi > ylo else 1.0
    ylo, yhi = ylo - pad, yhi + pad
    sx = _scale(float(xs_all.min()), float(xs_all.max()), x0 + 40, x0 + w - 10)
    sy = _scale(ylo, yhi, y0 + h - 25, y0 + 20)
    out = [f'<rect x="{x0 + 40}" y="{y0 + 20}" width="{w - 50}" height="{h - 45}" fill="none" stroke="#999"/>']
    if title:
        out.append(f'<text x="{x0 + w / 2:.1f}" y="{y0 + 14}" font-size="11" text-anchor="middle">{_esc(title)}</text>')
    out.append(f'<text x="{x0 + 36}" y="{y0 + 24}" font-size="9" text-anchor="end">{yhi:.3g}</text>')
    out.append(f'<text x="{x0 + 36}" y="{y0 + h - 25}" font-size="9" text-anchor="end">{ylo:.3g}</text>')
    out.append(f'<text x="{x0 + 40}" y="{y0 + h - 12}" font-size="9">{xs_all.min():.3g}</text>')
    out.append(f'<text x="{x0 + w - 10}" y="{y0 + h - 12}" font-size="9" text-anchor="end">{xs_all.max():.3g}</text>')
    for i, (xs, ys, color, opacity, label) in enumerate(series):
        keep = np.isfinite(np.asarray(ys, dtype=float))
        out.append(_polyline(np.asarray(xs)[keep], np.asarray(ys)[keep], sx, sy, color, opacity))
        if legend and label:
            ly = y0 + 34 + 12 * i
            out.append(f'<line x1="{x0 + 50}" y1="{ly - 3}" x2="{x0 + 64}" y2="{ly - 3}" stroke="{color}"/>')
            out.append(f'<text x="{x0 + 68}" y="{ly}" font-size="9">{_esc(label)}</text>')
    return out


def _svg(width, height, body):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def line_plot(series, title="", width=720, height=360):
    return _svg(width, height, _panel(0, 0, width, height, series, title))


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# splines


@dataclass
class SplineCurve:
    layer: str
    p: int
    q: int
    x: np.ndarray
    phi: np.ndarray
    importance: float
    masked: bool

    @property
    def tag(self):
        return f"{self.layer}:{self.p}:{self.q}"


def spline_bundle(model, n=SAMPLE_POINTS):
    """Sampled curve of every edge on a shared grid; masked edges plot as zero."""
    curves = []
    for name, p, q, e in model.edges():
        x, y = e.sample(n)
        if e.masked:
            y = np.zeros_like(y)
        curves.append(SplineCurve(name, p, q, x, y, float(e.importance), bool(e.masked)))
    return curves


def spline_grid_svg(model, curves=None):
    curves = curves if curves is not None else spline_bundle(model)
    top = max((c.importance for c in curves), default=0.0)
    body = []
    cell_w, cell_h = 200, 150
    y = 0
    for name, layer in model.layers().items():
        body.append(f'<text x="6" y="{y + 16}" font-size="13" font-weight="bold">{name}</text>')
        y += 22
        for c in (c for c in curves if c.layer == name):
            opacity = c.importance / top if top > 0 else 0.0
            x0 = c.p * cell_w
            y0 = y + c.q * cell_h
            label = f"in {c.p} -> out {c.q}" + (" (pruned)" if c.masked else f"  imp {c.importance:.3g}")
            body += _panel(x0, y0, cell_w, cell_h, [(c.x, c.phi, "#000000", max(opacity, 0.05), None)], label, False)
        y += layer.out_dim * cell_h + 10
    width = max(layer.in_dim for layer in model.layers().values()) * cell_w
    return _svg(width, y, body)


def export_splines(model, outdir):
    """One ``x,phi`` CSV per edge plus ``splines.svg``; returns the written paths."""
    outdir = Path(outdir)
    curves = spline_bundle(model)
    paths = []
    for c in curves:
        path = outdir / f"spline_{c.layer}_{c.p}_{c.q}.csv"
        atomic_write(path, _csv(["x", "phi"], zip(c.x, c.phi)))
        paths.append(path)
    svg = outdir / "splines.svg"
    atomic_write(svg, spline_grid_svg(model, curves))
    index = outdir / "splines.csv"
    atomic_write(index, _csv(["edge", "importance", "masked"],
                             ((c.tag, c.importance, int(c.masked)) for c in curves)))
    return paths + [svg, index]


# learned proxy vs reference


class ExpressionSeries(NamedTuple):
    t: np.ndarray
    learned_proxy: np.ndarray
    reference: np.ndarray
    skipped: list


def _check_range(traj, t_range):
    lo, hi = t_range
    if lo < 2 or hi >= len(traj) or lo > hi:
        raise UsageError(f"t range {t_range} needs 2 <= start <= end < {len(traj)}")
    return lo, hi


def expression_series(traj, t_range=DEFAULT_T_RANGE):
    """w_{t-1}^2 + (d theta_t)^2 + (d omega_t)^3 against (sin theta_t * omega_t / d omega_t)^2."""
    lo, hi = _check_range(traj, t_range)
    ts, proxy, ref, skipped = [], [], [], []
    for t in range(lo, hi + 1):
        dth = traj.theta[t] - traj.theta[t - 1]
        dw = traj.omega[t] - traj.omega[t - 1]
        if abs(dw) <= EPS:
            skipped.append(t)
            continue
        ts.append(t)
        proxy.append(traj.omega[t - 1] ** 2 + dth**2 + dw**3)
        ref.append((np.sin(traj.theta[t]) * traj.omega[t] / dw) ** 2)
    return ExpressionSeries(np.array(ts), np.array(proxy), np.array(ref), skipped)


def standardize(x):
    x = np.asarray(x, dtype=np.float64)
    sd = x.std()
    if sd == 0:
        raise UsageError("cannot standardize a constant series")
    return (x - x.mean()) / sd


def pearson(a, b):
    za, zb = standardize(a), standardize(b)
    return float(np.clip(np.mean(za * zb), -1.0, 1.0))


def expression_comparison(traj, t_range=DEFAULT_T_RANGE, reference_scale=1.0):
    series = expression_series(traj, t_range)
    za = standardize(series.learned_proxy)
    zb = standardize(series.reference * reference_scale)
    late = series.t > EXTRAPOLATION_START
    report = {
        "t_range": list(t_range),
        "n": int(len(series.t)),
        "skipped": series.skipped,
        "pearson_r": pearson(za, zb),
        "pearson_r_t_gt_200": pearson(za[late], zb[late]) if late.sum() > 1 else None,
        "reference_scale": reference_scale,
    }
    return report, series


def write_expression_comparison(traj, outdir, t_range=DEFAULT_T_RANGE, plot_scale=10.0):
    """Overlay CSV of raw values and an SVG of both series, the reference multiplied by ``plot_scale``."""
    report, s = expression_comparison(traj, t_range)
    outdir = Path(outdir)
    atomic_write(outdir / "expressions.csv", _csv(["t", "learned_proxy", "reference"], zip(s.t, s.learned_proxy, s.reference)))
    svg = line_plot(
        [
            (s.t, s.learned_proxy, PALETTE[0], 1.0, "learned proxy"),
            (s.t, s.reference * plot_scale, PALETTE[1], 0.8, f"reference x{plot_scale:g}"),
        ],
        f"learned proxy vs reference, r = {report['pearson_r']:.3f}",
    )
    atomic_write(outdir / "expressions.svg", svg)
    return report


# term dominance


def dominance_rate(term1, term2):
    """Share of steps where the first term alone gives the sign of term1 + term2."""
    term1 = np.asarray(term1, dtype=np.float64)
    term2 = np.asarray(term2, dtype=np.float64)
    if term1.size == 0:
        raise UsageError("no steps to compare")
    return float(np.mean((term1 >= 0) == (term1 + term2 >= 0)))


class DominanceSeries(NamedTuple):
    t: np.ndarray
    term1: np.ndarray
    term2: np.ndarray
    label: np.ndarray
    skipped: list


def dominance_series(traj, t_range=DEFAULT_T_RANGE):
    lo, hi = _check_range(traj, t_range)
    ts, k, u, skipped = [], [], [], []
    for t in range(lo, hi + 1):
        try:
            terms = energy_terms(traj[t - 2], traj[t - 1], traj[t])
        except DegenerateStepError:
            skipped.append(t)
            continue
        ts.append(t)
        k.append(terms.kinetic)
        u.append(terms.potential)
    k, u = np.array(k), np.array(u)
    return DominanceSeries(np.array(ts), k, u, k + u >= 0, skipped)


def dominance_check(traj, t_range=DEFAULT_T_RANGE):
    s = dominance_series(traj, t_range)
    report = {
        "t_range": list(t_range),
        "n": int(len(s.t)),
        "skipped": s.skipped,
        "agreement": dominance_rate(s.term1, s.term2),
    }
    return report, s


def write_dominance(traj, outdir, t_range=DEFAULT_T_RANGE, name="dominance"):
    report, s = dominance_check(traj, t_range)
    outdir = Path(outdir)
    atomic_write(outdir / f"{name}.csv", _csv(["t", "term1", "term2", "label"],
                                              zip(s.t, s.term1, s.term2, s.label.astype(int))))
    svg = line_plot(
        [(s.t, s.term1, PALETTE[0], 1.0, "first term"), (s.t, s.term2, PALETTE[1], 0.9, "second term")],
        f"Energy-Increasing terms, sign agreement {report['agreement']:.4f}",
    )
    atomic_write(outdir / f"{name}.svg", svg)
    return report
