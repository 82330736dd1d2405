"""Outer fitting loops for the representer game and the fixed-feature game."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core import (NumericError, RepresenterEnsemble, SampleSet, SolverConfig, ConfigError,
                   init_representers, substream, validate_config)
from .kernel import adaptive_bandwidths, knn_distances
from .maps import ElementaryMap, Monomials, sample_centers
from .precondition import AffineTransform, whiten
from .saddle import FixedFeatureState, SaddleState, gda_step, implicit_step
from .transport import FeatureStep, FlowRecord, RepresenterStep

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiagnosticRecord:
    iteration: int
    objective: float
    cost: float
    constraint: float
    step_norm: float
    pre_clip_norm: float
    clipped: bool
    fallback: bool
    l1_error: float | None = None
    kl: float | None = None


@dataclass
class DiagnosticsTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def append(self, rec: DiagnosticRecord):
        self.records.append(rec)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                         for r in self.records], dtype=float)

    def write_csv(self, path):
        names = [f.name for f in fields(DiagnosticRecord)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(names)
            for rec in self.records:
                row = []
                for name in names:
                    v = getattr(rec, name)
                    if v is None:
                        row.append("")
                    elif isinstance(v, (bool, np.bool_)):
                        row.append(int(v))
                    elif isinstance(v, (int, np.integer)):
                        row.append(int(v))
                    else:
                        row.append(repr(float(v)))
                writer.writerow(row)


@dataclass
class FitResult:
    flow: FlowRecord
    ensemble: RepresenterEnsemble | None
    diagnostics: DiagnosticsTrace
    termination: str
    source: np.ndarray            # preconditioned training source
    target: np.ndarray            # preconditioned training target
    transported: np.ndarray       # T(source) in preconditioned coordinates
    beta: np.ndarray | None = None

    @property
    def iterations(self) -> int:
        return len(self.diagnostics)

    def transported_original(self) -> np.ndarray:
        return self.flow.from_whitened(self.transported)


def convergence_check(trace, window: int, tol: float) -> bool:
    """Moving-average stopping rule on |constraint| and the cost drift."""
    records = trace.records if isinstance(trace, DiagnosticsTrace) else list(trace)
    if window < 1 or window > len(records):
        return False
    cons = np.array([abs(r.constraint) for r in records[-window:]])
    if cons.mean() >= tol:
        return False
    costs = np.array([r.cost for r in records[-window:]])
    half = max(window // 2, 1)
    early, late = costs[:half].mean(), costs[half:].mean() if window > 1 else costs.mean()
    scale = max(abs(early), abs(late))
    if scale == 0.0:
        return True
    return abs(late - early) / scale < tol


def _prepare(X, Y, cfg: SolverConfig):
    X = X if isinstance(X, SampleSet) else SampleSet(X, "source")
    Y = Y if isinstance(Y, SampleSet) else SampleSet(Y, "target")
    errors = validate_config(cfg, X, Y)
    if errors:
        raise ConfigError(errors)
    if cfg.precondition:
        src_t, x0 = whiten(X)
        tgt_t, y0 = whiten(Y)
    else:
        src_t = tgt_t = None
        x0, y0 = X.points.copy(), Y.points.copy()
    return X, Y, src_t, tgt_t, x0, y0


def _reference_in_whitened(reference_map, x_orig, src_t, tgt_t):
    if reference_map is None:
        return None
    ref = np.asarray(reference_map(x_orig), dtype=float).reshape(x_orig.shape)
    return ref if tgt_t is None else tgt_t.apply(ref)


def _check_finite(arr, it, what):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"iteration {it}: non-finite {what}")


def _step(cfg, state, it):
    opt = implicit_step if cfg.optimizer == "implicit" else gda_step
    try:
        return opt(state, cfg.learning_rate, cfg.trust_region)
    except NumericError as exc:
        raise NumericError(f"iteration {it}: {exc}") from exc


def _map_scale(cfg, centers, pooled):
    if not cfg.adaptive_map_scale:
        return float(cfg.map_scale)
    k = cfg.knn_k(pooled.shape[0])
    dist = knn_distances(centers, pooled, k)
    return float(np.clip(dist.mean(), cfg.bandwidth_min, cfg.bandwidth_max))


def fit_general(X, Y, cfg: SolverConfig, reference_map=None, callback=None,
                convergence: tuple | None = None) -> FitResult:
    """Fit a transport flow with representer test functions.

    Parameters
    ----------
    X, Y : SampleSet or (n, d) arrays
        Source and target samples.
    cfg : SolverConfig
    reference_map : callable, optional
        Known map in original coordinates; enables the L1 error diagnostic.
    callback : callable, optional
        ``callback(record, flow)`` after every committed iteration.  It may
        return a dict of extra diagnostic fields (e.g. ``{"kl": ...}``).
    convergence : (window, tol), optional
        Opt-in early stopping via :func:`convergence_check`.
    """
    X, Y, src_t, tgt_t, x0, y0 = _prepare(X, Y, cfg)
    d = X.dim
    ref = _reference_in_whitened(reference_map, X.points, src_t, tgt_t)
    ens = init_representers(cfg, d)
    flow = FlowRecord(d, [], src_t, tgt_t, cfg.to_dict())
    z = x0.copy()
    trace = DiagnosticsTrace()
    rng = substream(cfg.rng_seed, "centers")
    termination = "max_iterations"

    for it in range(cfg.max_iterations):
        pooled = np.concatenate([z, y0])
        if cfg.adaptive_bandwidth:
            k = cfg.knn_k(pooled.shape[0])
            ens = ens.with_bandwidths(
                adaptive_bandwidths(ens.positive, pooled, k, cfg.bandwidth_min, cfg.bandwidth_max),
                adaptive_bandwidths(ens.negative, pooled, k, cfg.bandwidth_min, cfg.bandwidth_max))
        if cfg.map_family == "multinomial":
            skeleton = ElementaryMap.zeros("multinomial", d, degree=cfg.multinomial_degree)
        else:
            centers = sample_centers(z, y0, cfg.n_centers, rng)
            skeleton = ElementaryMap.zeros(cfg.map_family, d, centers,
                                           _map_scale(cfg, centers, pooled))
        state = SaddleState(x0, z, y0, ens, skeleton)
        res = _step(cfg, state, it)
        a_pos, a_neg = state.split(res.d_alpha)
        b_pos, b_neg = state.split(res.d_beta)
        step = RepresenterStep(ens.positive, ens.negative, ens.bandwidths_pos, ens.bandwidths_neg,
                               skeleton.with_params(a_pos), skeleton.with_params(a_neg))
        z = step.apply(z)
        _check_finite(z, it, "transported samples")
        flow.append(step)
        ens = RepresenterEnsemble(skeleton.with_params(b_pos).apply(ens.positive),
                                  skeleton.with_params(b_neg).apply(ens.negative),
                                  ens.bandwidths_pos, ens.bandwidths_neg)
        _check_finite(ens.positive, it, "representers")
        _check_finite(ens.negative, it, "representers")

        rec = DiagnosticRecord(it, res.value, res.cost, res.constraint, res.norm,
                               res.pre_clip_norm, res.clipped, res.fallback,
                               None if ref is None else float(np.mean(np.abs(z - ref))))
        if callback is not None:
            extra = callback(rec, flow)
            if extra:
                rec = DiagnosticRecord(**{**asdict(rec), **extra})
        trace.append(rec)
        if convergence is not None and convergence_check(trace, *convergence):
            termination = "converged"
            break

    return FitResult(flow, ens, trace, termination, x0, y0, z)


def fit_fixed_features(X, Y, cfg: SolverConfig, degree: int = 2, reference_map=None,
                       callback=None, convergence: tuple | None = None) -> FitResult:
    """Fixed-feature variant: monomial test functions of degree 1..``degree``.

    beta accumulates across iterations while alpha is re-solved each time.
    """
    X, Y, src_t, tgt_t, x0, y0 = _prepare(X, Y, cfg)
    d = X.dim
    ref = _reference_in_whitened(reference_map, X.points, src_t, tgt_t)
    features = Monomials(d, degree)
    beta = np.zeros(len(features))
    flow = FlowRecord(d, [], src_t, tgt_t, {**cfg.to_dict(), "feature_degree": degree})
    z = x0.copy()
    trace = DiagnosticsTrace()
    termination = "max_iterations"

    for it in range(cfg.max_iterations):
        state = FixedFeatureState(x0, z, y0, features, beta)
        res = _step(cfg, state, it)
        step = FeatureStep(d, degree, res.d_alpha)
        z = step.apply(z)
        _check_finite(z, it, "transported samples")
        flow.append(step)
        beta = beta + res.d_beta
        rec = DiagnosticRecord(it, res.value, res.cost, res.constraint, res.norm,
                               res.pre_clip_norm, res.clipped, res.fallback,
                               None if ref is None else float(np.mean(np.abs(z - ref))))
        if callback is not None:
            extra = callback(rec, flow)
            if extra:
                rec = DiagnosticRecord(**{**asdict(rec), **extra})
        trace.append(rec)
        if convergence is not None and convergence_check(trace, *convergence):
            termination = "converged"
            break

    return FitResult(flow, None, trace, termination, x0, y0, z, beta)
