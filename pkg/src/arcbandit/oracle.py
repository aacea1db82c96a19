"""Numerical value function of the one-and-a-half armed bandit.

One arm pays 1 for sure; the other pays ``theta ~ N(m, d)`` observed with
unit noise, so a pull moves the belief to
``(m + d (1+d)^-1/2 z, d / (1+d))``.  The entropy-regularised value solves

    V(m, d) = lam * log(exp((m + beta E V(m', d')) / lam)
                        + exp((1 + beta V(m, d)) / lam)).

The d-grid is the exact orbit ``1/d -> 1/d + 1`` so d is never interpolated,
and the m-grid is uniform so the expectation over z is a fixed sparse linear
map per d-layer (linear interpolation in m, clamped at the edges).  The orbit
is continued below the reported d range and closed with the no-learning
value.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import _backend
from .errors import ConvergenceError, InvalidArgument

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("m", "d", "v_exact", "v_arc", "rel_err", "p_exact", "p_arc", "p_diff")


def _logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class GridSpec:
    """Reported region ``[m_lo, m_hi] x [d_lo, d_hi]`` plus the padding rules.

    The m-grid is extended by ``pad_sd * sqrt(d_hi)`` on both sides (rounded
    out to whole steps) and the d-orbit continues down to
    ``d_lo / tail_factor`` before the static closure is applied.
    """

    m_lo: float = 0.0
    m_hi: float = 2.0
    m_step: float = 0.02
    d_lo: float = 0.01
    d_hi: float = 0.05
    pad_sd: float = 6.0
    tail_factor: float = 10.0

    def __post_init__(self):
        if not (self.m_hi > self.m_lo and self.m_step > 0):
            raise InvalidArgument("need m_hi > m_lo and m_step > 0")
        if not (0 <= self.d_lo <= self.d_hi):
            raise InvalidArgument("need 0 <= d_lo <= d_hi")
        if self.tail_factor < 1 or self.pad_sd < 0:
            raise InvalidArgument("tail_factor must be >= 1 and pad_sd >= 0")

    def m_axis(self):
        n_core = int(round((self.m_hi - self.m_lo) / self.m_step))
        n_pad = int(math.ceil(self.pad_sd * math.sqrt(self.d_hi) / self.m_step - 1e-9))
        idx = np.arange(-n_pad, n_core + n_pad + 1)
        return self.m_lo + idx * self.m_step, n_pad, n_core

    def d_axis(self):
        """Ascending orbit; returns ``(d, n_tail)`` with tail layers first."""
        if self.d_hi == 0:
            return np.zeros(1), 0
        inv_hi = 1.0 / self.d_hi
        inv_lo = 1.0 / self.d_lo if self.d_lo > 0 else math.inf
        inv_end = inv_lo * self.tail_factor
        steps = np.arange(0, int(math.floor(inv_end - inv_hi + 1e-9)) + 1)
        inv = inv_hi + steps
        n_core = int(np.sum(inv <= inv_lo * (1 + 1e-12)))
        d = 1.0 / inv[::-1]
        return d, d.shape[0] - n_core


@dataclass(frozen=True)
class ValueGrid:
    m_axis: np.ndarray
    d_axis: np.ndarray
    values: np.ndarray
    probs: np.ndarray
    lam: float
    beta: float
    mc_samples: int
    iterations: int
    sup_delta: float
    mc_se: np.ndarray
    clamped_queries: int
    m_core: slice
    d_core: slice
    method: str = "layered"
    extras: dict = field(default_factory=dict)

    @property
    def core_m(self):
        return self.m_axis[self.m_core]

    @property
    def core_d(self):
        return self.d_axis[self.d_core]


def static_value(m, lam, beta):
    """Value with no learning: ``(1-beta)^-1 lam log(exp(m/lam) + exp(1/lam))``."""
    return lam * np.logaddexp(np.asarray(m, dtype=np.float64) / lam, 1.0 / lam) / (1.0 - beta)


def mc_draws(n, rng):
    """Antithetic standard normals rescaled to unit second moment."""
    if n < 2:
        raise InvalidArgument("need at least two Monte-Carlo samples")
    half = rng.standard_normal((n + 1) // 2)
    z = np.concatenate([half, -half])[:n]
    z = z - z.mean()
    return z / math.sqrt(np.mean(z * z))


def _layer_taps(sigma, z, step, n_m):
    """Interpolation template for one layer: integer offsets, fractions."""
    pos = sigma * z / step
    base = np.floor(pos)
    return base.astype(np.int64), pos - base


def _layer_operator(offs, frac, n_m):
    """CSR rows averaging linear interpolation over the draws, clamped."""
    n = offs.shape[0]
    uniq, inv = np.unique(offs, return_inverse=True)
    w_lo = np.bincount(inv, weights=1.0 - frac, minlength=uniq.shape[0]) / n
    w_hi = np.bincount(inv, weights=frac, minlength=uniq.shape[0]) / n
    tap_off = np.concatenate([uniq, uniq + 1])
    tap_w = np.concatenate([w_lo, w_hi])
    keep = tap_w != 0
    tap_off, tap_w = tap_off[keep], tap_w[keep]
    rows = np.arange(n_m)
    cols = np.clip(rows[:, None] + tap_off[None, :], 0, n_m - 1)
    data = np.broadcast_to(tap_w, cols.shape)
    clamped = (np.sum(rows[:, None] + offs[None, :] < 0)
               + np.sum(rows[:, None] + offs[None, :] + (frac > 0)[None, :] > n_m - 1))
    return cols, np.ascontiguousarray(data), int(clamped)


def _pair_se(samples):
    """Standard error of the mean of antithetic pairs along the last axis."""
    n = samples.shape[-1]
    half = n // 2
    pairs = 0.5 * (samples[..., :half] + samples[..., half:2 * half])
    return pairs.std(axis=-1, ddof=1) / math.sqrt(half)


def value_iterate(grid=None, lam=0.1, beta=0.99, mc_samples=1000, rng=None, tol=1e-6,
                  max_iters=10_000, method="layered", z=None):
    """Solve the regularised Bellman equation on the grid.

    ``method="layered"`` walks the d-layers from the smallest d up; each
    layer only depends on the one below it plus its own "stay" branch, which
    is solved exactly by Newton's method.  ``method="jacobi"`` runs plain
    synchronous sweeps from ``V = 0``.  Either way a final sweep measures
    ``sup_delta``; it must end below ``tol``.
    """
    grid = grid or GridSpec()
    if not (lam > 0 and 0 < beta < 1 and tol > 0):
        raise InvalidArgument("need lam > 0, 0 < beta < 1 and tol > 0")
    if method not in ("layered", "jacobi"):
        raise InvalidArgument(f"unknown method {method!r}")
    if z is None:
        if rng is None:
            rng = np.random.default_rng(0)
        z = mc_draws(mc_samples, rng)
    z = np.asarray(z, dtype=np.float64)
    m, m_pad, m_core_n = grid.m_axis()
    d, n_tail = grid.d_axis()
    n_m, n_d = m.shape[0], d.shape[0]
    closure = static_value(m, lam, beta)

    # per-layer templates; layer k moves to layer k-1, layer 0 to the closure
    ops, clamped = [], 0
    for k in range(n_d):
        sigma = d[k] / math.sqrt(1.0 + d[k])
        offs, frac = _layer_taps(sigma, z, grid.m_step, n_m)
        cols, data, c = _layer_operator(offs, frac, n_m)
        ops.append((cols, data, offs, frac))
        clamped += c
    if clamped:
        log.info("oracle: %d interpolation queries clamped to the m-grid", clamped)

    def expect_from(k, below):
        cols, data, _, _ = ops[k]
        return np.sum(data * below[cols], axis=1)

    values = np.empty((n_d, n_m))
    se = np.zeros((n_d, n_m))
    if method == "layered":
        iterations = 1
        for k in range(n_d):
            if d[k] == 0:
                values[k] = closure
                continue
            below = closure if k == 0 else values[k - 1]
            a1 = m + beta * expect_from(k, below)
            values[k] = _backend.solve_layer(a1, beta, lam)
    else:
        values[:] = 0.0
        iterations = 0

    indptr, indices, data, offset = _global_operator(ops, n_m, n_d, closure, d)
    m_nodes = np.tile(m, n_d)
    flat = values.ravel()
    if method == "jacobi":
        delta = math.inf
        while iterations < max_iters:
            flat, delta = _backend.bellman_sweep(indptr, indices, data, offset, m_nodes,
                                                 flat, beta, lam)
            iterations += 1
            if delta < tol:
                break
        if delta >= tol:
            raise ConvergenceError(f"no convergence after {iterations} sweeps", delta)
    new, delta = _backend.bellman_sweep(indptr, indices, data, offset, m_nodes, flat, beta, lam)
    if delta >= tol:
        raise ConvergenceError(f"residual {delta:.3g} above tolerance", delta)
    values = np.asarray(flat).reshape(n_d, n_m)

    probs = np.empty_like(values)
    for k in range(n_d):
        below = closure if k == 0 else values[k - 1]
        if d[k] == 0:
            a1 = m + beta * values[k]
        else:
            a1 = m + beta * expect_from(k, below)
        stay = 1.0 + beta * values[k]
        probs[k] = _logistic((a1 - stay) / lam)
        # MC error: local sampling error plus the error carried from below
        _, _, offs, frac = ops[k]
        if d[k] > 0:
            lo = np.clip(np.arange(n_m)[:, None] + offs[None, :], 0, n_m - 1)
            hi = np.clip(lo + 1, 0, n_m - 1)
            samples = below[lo] * (1.0 - frac) + below[hi] * frac
            carried = 0.0 if k == 0 else expect_from(k, se[k - 1])
            slope = probs[k] / (1.0 - beta * (1.0 - probs[k]))
            se[k] = slope * beta * (_pair_se(samples) + carried)

    return ValueGrid(m_axis=m, d_axis=d, values=values, probs=probs, lam=float(lam),
                     beta=float(beta), mc_samples=int(z.shape[0]), iterations=iterations,
                     sup_delta=float(delta), mc_se=se, clamped_queries=clamped,
                     m_core=slice(m_pad, m_pad + m_core_n + 1), d_core=slice(n_tail, n_d),
                     method=method)


def _global_operator(ops, n_m, n_d, closure, d):
    rows_cols, rows_data = [], []
    offset = np.zeros(n_d * n_m)
    for k, (cols, data, _, _) in enumerate(ops):
        if d[k] == 0:
            # no movement: the risky branch continues from the same node
            rows_cols.append((k * n_m + np.arange(n_m))[:, None])
            rows_data.append(np.ones((n_m, 1)))
        elif k == 0:
            offset[:n_m] = np.sum(data * closure[cols], axis=1)
            rows_cols.append(np.zeros((n_m, 0), dtype=np.int64))
            rows_data.append(np.zeros((n_m, 0)))
        else:
            rows_cols.append(cols + (k - 1) * n_m)
            rows_data.append(data)
    counts = np.concatenate([np.full(c.shape[0], c.shape[1]) for c in rows_cols])
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    indices = np.concatenate([c.ravel() for c in rows_cols]).astype(np.int64)
    data = np.concatenate([x.ravel() for x in rows_data])
    return indptr, indices, data, offset


def bellman_residual(vg, z=None, grid=None):
    """Sup-norm change of one more sweep applied to ``vg.values``.

    Uses the same draw set (pass ``z``) and grid the solution was built on.
    """
    if z is None or grid is None:
        raise InvalidArgument("bellman_residual needs the draw set and the grid spec")
    m, _, _ = grid.m_axis()
    d, _ = grid.d_axis()
    n_m, n_d = m.shape[0], d.shape[0]
    ops = []
    for k in range(n_d):
        offs, frac = _layer_taps(d[k] / math.sqrt(1.0 + d[k]), z, grid.m_step, n_m)
        cols, data, _ = _layer_operator(offs, frac, n_m)
        ops.append((cols, data, offs, frac))
    indptr, indices, data, offset = _global_operator(ops, n_m, n_d,
                                                     static_value(m, vg.lam, vg.beta), d)
    _, delta = _backend.bellman_sweep(indptr, indices, data, offset, np.tile(m, n_d),
                                      vg.values.ravel(), vg.beta, vg.lam)
    return float(delta)


def arc_alpha(m, d, lam, beta):
    m = np.asarray(m, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    nu1 = _logistic((m - 1.0) / lam)
    return m + beta / (1.0 - beta) / (2.0 * lam) * nu1 * (1.0 - nu1) * d * d / (1.0 + d)


def arc_closed_form(m, d, lam, beta):
    """ARC approximation ``(value, probability of the risky arm)``."""
    if np.any(np.asarray(d) < 0):
        raise InvalidArgument("d must be >= 0")
    a1 = arc_alpha(m, d, lam, beta)
    value = lam * np.logaddexp(a1 / lam, 1.0 / lam) / (1.0 - beta)
    prob = _logistic((a1 - 1.0) / lam)
    if np.ndim(value) == 0:
        return float(value), float(prob)
    return value, prob


def interpolate(vg, m, d, what="values"):
    """Bilinear interpolation of ``values`` or ``probs``; clamped to the grid."""
    table = getattr(vg, what)
    fn = RegularGridInterpolator((vg.d_axis, vg.m_axis), table, method="linear")
    m = np.clip(np.asarray(m, dtype=np.float64), vg.m_axis[0], vg.m_axis[-1])
    d = np.clip(np.asarray(d, dtype=np.float64), vg.d_axis[0], vg.d_axis[-1])
    m, d = np.broadcast_arrays(m, d)
    out = fn(np.stack([d.ravel(), m.ravel()], axis=-1)).reshape(m.shape)
    return float(out) if out.ndim == 0 else out


def compare_grid(vg):
    """Node-wise comparison of the numerical solution with the ARC formula.

    Returns ``(rows, summary)``; rows follow ``REPORT_COLUMNS`` and cover the
    reported region only.
    """
    mm, dd = np.meshgrid(vg.core_m, vg.core_d)
    v = vg.values[vg.d_core, vg.m_core]
    p = vg.probs[vg.d_core, vg.m_core]
    v_arc, p_arc = arc_closed_form(mm, dd, vg.lam, vg.beta)
    rel = np.abs(v_arc - v) / np.abs(v)
    diff = p_arc - p
    rows = np.column_stack([mm.ravel(), dd.ravel(), v.ravel(), v_arc.ravel(), rel.ravel(),
                            p.ravel(), p_arc.ravel(), diff.ravel()])
    summary = {
        "max_rel_err": float(rel.max()),
        "mean_rel_err": float(rel.mean()),
        "max_p_diff": float(np.abs(diff).max()),
        "sup_delta": vg.sup_delta,
        "iterations": vg.iterations,
        "clamped_queries": vg.clamped_queries,
        "lambda": vg.lam,
        "beta": vg.beta,
        "mc_samples": vg.mc_samples,
        "n_nodes": int(rel.size),
    }
    return rows, summary
