"""Reproducible synthetic experiments: 1D map recovery, 2D density
estimation and per-iteration timing against the dimension."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import SolverConfig, substream
from .density import (FlowTracker, KLTracker, bimodal_mixture, kl_from_logs, oracle_cost_1d,
                      standard_gaussian, trimodal_mixture)
from .solver import FitResult, fit_general
from .transport import FlowRecord


def true_map_1d(x):
    """Gradient of |x|^1.5: the optimal map of the 1D recovery example."""
    x = np.asarray(x, dtype=float)
    return 1.5 * np.sign(x) * np.abs(x) ** 0.5


RECOVER_1D_DEFAULTS = dict(max_iterations=10000, testfn_bandwidth=0.2, map_scale=0.1)
TRIMODAL_DEFAULTS = dict(max_iterations=3000, testfn_bandwidth=0.2, map_scale=0.1)
BENCH_DEFAULTS = dict(testfn_bandwidth=0.2, map_scale=0.1)


def _config(defaults, cfg, overrides):
    base = SolverConfig(**defaults) if cfg is None else cfg
    return base.updated(**overrides) if overrides else base


def monotone_fraction(x, fx) -> float:
    """Share of adjacent pairs (sorted by x) on which fx does not decrease."""
    x = np.ravel(x)
    fx = np.ravel(fx)
    order = np.argsort(x, kind="stable")
    return float(np.mean(np.diff(fx[order]) >= 0))


@dataclass
class Recovery1D:
    fit: FitResult
    x: np.ndarray                 # source samples, original coordinates
    fitted: np.ndarray            # T_fit(x)
    true: np.ndarray              # T_true(x)
    oracle_cost: float            # sorted-coupling cost in preconditioned coordinates
    tail: int = 500

    @property
    def l1_trace(self):
        return self.fit.diagnostics.column("l1_error")

    @property
    def initial_l1(self) -> float:
        """L1 error of the preconditioning-only map (before any step)."""
        fl = self.fit.flow
        ref = fl.target_transform.apply(self.true[:, None]) if fl.target_transform else self.true[:, None]
        return float(np.mean(np.abs(self.fit.source - ref)))

    @property
    def final_l1(self) -> float:
        return float(self.l1_trace[-1])

    @property
    def final_cost(self) -> float:
        """Cost averaged over the last ``tail`` iterations (it oscillates)."""
        costs = self.fit.diagnostics.column("cost")
        return float(costs[-min(self.tail, costs.size):].mean())

    @property
    def monotone(self) -> float:
        return monotone_fraction(self.x, self.fitted)

    def table(self):
        return np.column_stack([self.x, self.fitted, self.true])


def recover_1d(n_samples: int = 1000, seed: int = 0, cfg: SolverConfig | None = None,
               callback=None, **overrides) -> Recovery1D:
    """Recover T(x) = 1.5 sign(x)|x|^0.5 from two independent Gaussian batches."""
    cfg = _config(RECOVER_1D_DEFAULTS, cfg, {"rng_seed": seed, **overrides})
    x1 = substream(seed, "recover-1d/x1").standard_normal((n_samples, 1))
    x2 = substream(seed, "recover-1d/x2").standard_normal((n_samples, 1))
    res = fit_general(x1, true_map_1d(x2), cfg, reference_map=true_map_1d, callback=callback)
    oracle = oracle_cost_1d(res.source, res.target)
    return Recovery1D(res, x1[:, 0], res.transported_original()[:, 0], true_map_1d(x1[:, 0]),
                      oracle)


@dataclass
class Trimodal2D:
    fit: FitResult
    kl_initial: float
    kl_trace: list                # (iteration, KL, stderr)
    grid: np.ndarray              # density evaluation grid, original coordinates
    densities: dict               # iteration -> log-density on the grid
    passive: np.ndarray           # passive grid points
    trajectories: dict            # iteration -> images of the passive grid

    @property
    def kl_final(self) -> float:
        return float(self.kl_trace[-1][1])


def _grid(lo, hi, n):
    t = np.linspace(lo, hi, n)
    gx, gy = np.meshgrid(t, t)
    return np.column_stack([gx.ravel(), gy.ravel()])


def trimodal_2d(seed: int = 0, n_samples: int = 400, n_representers: int = 100,
                cfg: SolverConfig | None = None, kl_every: int = 100, n_eval: int = 10000,
                snapshots=None, grid_size: int = 41, passive_size: int = 11,
                with_kl: bool = True, **overrides) -> Trimodal2D:
    """Density estimation of the tri-modal mixture by transport to N(0, I).

    KL(true || model) is estimated by Monte Carlo on fresh draws from the
    mixture.  Log-densities on a grid and the images of a passive grid are
    recorded at the ``snapshots`` iterations (default: start, middle, end).
    """
    cfg = _config(TRIMODAL_DEFAULTS, cfg,
                  {"rng_seed": seed, "n_representers": n_representers, **overrides})
    truth = trimodal_mixture()
    target_density = standard_gaussian(2)
    x = truth.sample(n_samples, substream(seed, "trimodal/source"))
    y = target_density.sample(n_samples, substream(seed, "trimodal/target"))
    n_it = cfg.max_iterations
    if snapshots is None:
        snapshots = sorted({0, n_it // 2, max(n_it - 1, 0)})
    snapshots = set(snapshots)

    grid = _grid(-4.0, 4.0, grid_size)
    passive = _grid(-3.0, 3.0, passive_size)
    grid_tr = FlowTracker(grid)
    passive_tr = FlowTracker(passive, with_logdet=False)
    densities, trajectories = {}, {}
    kl = None
    if with_kl:
        eval_pts = truth.sample(n_eval, substream(seed, "evaluation"))
        kl = KLTracker(truth, target_density, eval_pts, every=kl_every)

    def callback(rec, flow):
        if rec.iteration in snapshots:
            densities[rec.iteration] = grid_tr.log_density(flow, target_density)
            trajectories[rec.iteration] = passive_tr.images(flow)
        return kl(rec, flow) if kl is not None else None

    res = fit_general(x, y, cfg, callback=callback)
    start = FlowRecord(2, [], res.flow.source_transform, res.flow.target_transform)
    kl_initial = float("nan")
    trace = []
    if kl is not None:
        log_init = FlowTracker(kl.tracker.points).log_density(start, target_density)
        kl_initial = kl_from_logs(kl.log_true, log_init).value
        trace = [(it, est.value, est.stderr) for it, est in kl.history]
    densities[-1] = FlowTracker(grid).log_density(start, target_density)
    trajectories[-1] = passive_tr.points.copy()
    return Trimodal2D(res, kl_initial, trace, grid, densities, passive, trajectories)


@dataclass
class DimTiming:
    dim: int
    mean: float
    std: float
    times: np.ndarray = field(repr=False, default=None)


def bench_dim(dims=(2, 4, 8, 16, 32, 64), iters: int = 30, warmup: int = 10,
              n_samples: int = 200, n_representers: int = 100, seed: int = 0,
              cfg: SolverConfig | None = None, **overrides) -> list[DimTiming]:
    """Seconds per iteration from the bimodal mixture to N(0, I) for each d.

    The first ``warmup`` iterations are not timed; I/O is never included.
    """
    dims = list(dims)
    if len(dims) < 2:
        raise ValueError("need at least two dimensions to compare")
    cfg = _config(BENCH_DEFAULTS, cfg, {"rng_seed": seed, "n_representers": n_representers,
                                        "max_iterations": iters + warmup, **overrides})
    out = []
    for d in dims:
        x = bimodal_mixture(d).sample(n_samples, substream(seed, f"bench/source/{d}"))
        y = substream(seed, f"bench/target/{d}").standard_normal((n_samples, d))
        stamps = []
        fit_general(x, y, cfg, callback=lambda rec, flow: stamps.append(time.perf_counter()))
        # iteration i ends at stamps[i]; time iterations warmup .. end
        times = np.diff(np.asarray(stamps)[warmup - 1:]) if warmup > 0 else np.diff(stamps)
        out.append(DimTiming(d, float(times.mean()), float(times.std()), times))
    return out


def linear_fit_r2(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    return float(1.0 - resid @ resid / np.sum((y - y.mean()) ** 2))
