"""Analytical stream-configuration models used as comparison points.

``liu`` fits linear transfer and compute cost models against task size and
picks the task size that balances pipeline fill against per-task overhead.
``werkhoven`` solves a LogGP-style overlap equation for the stream count.
Both pin partitions equal to the stream count and snap to the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCoefficientsError, NoSolutionError, SingularFitError
from .simulator import StreamConfig, chunk_sizes, snap_to_grid, stage_durations


@dataclass(frozen=True)
class LiuCoefficients:
    alpha: float  # s/element, transfer slope
    beta: float  # s, transfer intercept
    eta: float  # s/element, compute slope
    gamma: float  # s, compute intercept
    r2_transfer: float = 1.0
    r2_compute: float = 1.0


@dataclass(frozen=True)
class LogGPParams:
    g: float
    G_hd: float
    G_dh: float
    B_hd: float
    B_dh: float
    T_kernel: float
    L: float = 0.0  # carried but unused by the overlap equation
    o: float = 0.0
    P: int = 1


def ols(x, y):
    """(slope, intercept, r2) of an ordinary least-squares line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise SingularFitError("need at least two (x, y) samples")
    if np.unique(x).size < 2:
        raise SingularFitError("all sample positions are identical")
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float(((y - ym) ** 2).sum())
    ss_res = float(((y - (slope * x + intercept)) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


def fit_liu(transfer_samples, compute_samples):
    """Fit ``T_t = alpha*m + beta`` and ``T_c = eta*m + gamma`` by OLS.

    Each argument is a sequence of ``(m, seconds)`` pairs.
    """
    tm, tt = zip(*transfer_samples) if transfer_samples else ((), ())
    cm, cc = zip(*compute_samples) if compute_samples else ((), ())
    alpha, beta, r2t = ols(tm, tt)
    eta, gamma, r2c = ols(cm, cc)
    return LiuCoefficients(alpha, beta, eta, gamma, r2t, r2c)


def liu_total(c, N, m):
    """Modelled end-to-end time for task size ``m``."""
    return c.alpha * m + N * c.gamma / m + N * c.eta + c.beta


def liu_optimal_tasks(c, N, grid=None, max_n=224):
    """Continuous optimum task size, the task count and the grid config.

    Returns ``(m_star, n, config)``; ``config`` is ``(n, n)`` snapped to
    ``grid`` when one is given.
    """
    if not c.alpha > 0 or not c.gamma > 0:
        raise InvalidCoefficientsError(f"need alpha > 0 and gamma > 0 (alpha={c.alpha}, gamma={c.gamma})")
    if N < 1:
        raise InvalidCoefficientsError(f"N must be >= 1, got {N}")
    m_star = math.sqrt(N * c.gamma / c.alpha)
    m_clamped = min(max(m_star, 1.0), float(N))
    n = int(min(max(round(N / m_clamped), 1), max_n))
    config = StreamConfig(n, n)
    if grid is not None:
        config = snap_to_grid(config, grid)
    return m_star, n, config


def werkhoven_case(p):
    """RHS of the overlap equation; strict ``B_dh > B_hd`` selects the first case."""
    if p.B_dh > p.B_hd:
        return p.T_kernel + p.B_dh * p.G_dh
    return p.B_hd * p.G_hd + p.T_kernel


def werkhoven_residual(p, x):
    """Relative residual of ``B_dh*G_dh + g*(x-1) = RHS/x`` at ``x``.

    The residual is scaled by the summed magnitudes of the terms, so a root
    near ``x = 1`` is not penalised for the cancellation in ``x - 1``.
    """
    rhs = werkhoven_case(p)
    bg = p.B_dh * p.G_dh
    diff = bg + p.g * x - p.g - rhs / x
    scale = max(abs(bg) + p.g * abs(x) + p.g + abs(rhs / x), 1e-300)
    return abs(diff) / scale


def werkhoven_root(p):
    """Positive continuous root of ``g x^2 + (BG - g) x - RHS = 0``."""
    if p.g < 0 or p.G_hd <= 0 or p.G_dh <= 0 or p.B_hd < 0 or p.B_dh < 0 or p.T_kernel < 0:
        raise InvalidCoefficientsError("LogGP parameters out of range")
    if p.T_kernel == 0 and p.B_hd == 0 and p.B_dh == 0:
        raise InvalidCoefficientsError("T_kernel, B_hd and B_dh are all zero")
    bg = p.B_dh * p.G_dh
    rhs = werkhoven_case(p)
    if p.g == 0:
        if bg == 0:
            raise NoSolutionError("B_dh*G_dh and g are both zero")
        return rhs / bg
    a, b, cc = p.g, bg - p.g, -rhs
    disc = b * b - 4 * a * cc
    # cancellation-free form of the positive root
    if b >= 0:
        return (2 * -cc) / (b + math.sqrt(disc))
    return (-b + math.sqrt(disc)) / (2 * a)


def werkhoven_optimal_streams(p, grid=None):
    """``(N_s, config)``: rounded root (minimum 1) and ``(N_s, N_s)`` on the grid."""
    x = werkhoven_root(p)
    n_s = max(1, int(math.floor(x + 0.5)))
    config = StreamConfig(n_s, n_s)
    if grid is not None:
        config = snap_to_grid(config, grid)
    return n_s, config


# -- construction from workloads -------------------------------------------

PROBE_TASKS = (1, 2, 4, 8, 16, 32, 64)


def liu_probes(w, tasks=PROBE_TASKS):
    """Transfer and compute samples ``(m, seconds)`` from single-partition runs."""
    transfer, compute = [], []
    for t in tasks:
        if t > w.elements:
            continue
        c = StreamConfig(1, t)
        t_in, t_comp, _ = stage_durations(w, c)
        m = float(chunk_sizes(w.elements, t)[0])
        transfer.append((m, float(t_in[0])))
        compute.append((m, float(t_comp[0])))
    return transfer, compute


def liu_for_workload(w, grid):
    coeffs = fit_liu(*liu_probes(w))
    return liu_optimal_tasks(coeffs, w.elements, grid, max_n=max(c.partitions for c in grid))[2]


def loggp_for_workload(w):
    """LogGP parameters read off the workload cost model."""
    _, t_comp, _ = stage_durations(w, StreamConfig(1, 1))
    return LogGPParams(
        g=w.transfer_beta,
        G_hd=w.transfer_alpha,
        G_dh=w.transfer_alpha,
        B_hd=float(w.elements * w.bytes_per_element_in),
        B_dh=float(w.elements * w.bytes_per_element_out),
        T_kernel=float(t_comp[0]),
        P=w.total_cores,
    )


def werkhoven_for_workload(w, grid):
    return werkhoven_optimal_streams(loggp_for_workload(w), grid)[1]
