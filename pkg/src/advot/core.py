"""Shared value types, solver configuration and seeded random streams."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

MAP_FAMILIES = ("radial_iq", "radial_erf", "multinomial")
OPTIMIZERS = ("implicit", "explicit_gda")
ADAPTIVE = "adaptive"


class ConfigError(ValueError):
    """Invalid solver configuration; carries every violation found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class DataError(ValueError):
    pass


class NumericError(RuntimeError):
    pass


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named consumer of randomness.

    Streams are keyed by ``(seed, name)`` so adding a new consumer never
    shifts the draws seen by existing ones.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(key,))))


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray
    label: str = "source"

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise DataError(f"points must be an N x d matrix, got shape {pts.shape}")
        if pts.shape[0] < 2:
            raise DataError(f"need at least 2 points, got {pts.shape[0]}")
        if pts.shape[1] < 1:
            raise DataError("points must have at least one column")
        if not np.all(np.isfinite(pts)):
            bad = int(np.argwhere(~np.isfinite(pts))[0, 0])
            raise DataError(f"non-finite value in {self.label} point {bad}")
        if self.label not in ("source", "target"):
            raise DataError(f"unknown sample label {self.label!r}")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of a fit. Defaults follow the desk-scale experiments."""

    n_representers: int = 100
    n_centers: int = 1
    trust_region: float = 0.003
    testfn_bandwidth: float | str = 0.2
    map_scale: float | str = 0.1
    map_family: str = "radial_erf"
    multinomial_degree: int = 3
    representer_init_scale: float = 0.5
    max_iterations: int = 1000
    rng_seed: int = 0
    precondition: bool = True
    optimizer: str = "implicit"
    learning_rate: float = 1.0
    # k-NN policy shared by adaptive bandwidths and adaptive map scales
    bandwidth_k: int | None = None
    bandwidth_min: float = 1e-3
    bandwidth_max: float = 10.0

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown config key {k!r}" for k in unknown])
        cfg = cls(**data)
        errors = validate_config(cfg)
        if errors:
            raise ConfigError(errors)
        return cfg

    @classmethod
    def from_json(cls, path) -> "SolverConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def updated(self, **changes) -> "SolverConfig":
        cfg = replace(self, **changes)
        errors = validate_config(cfg)
        if errors:
            raise ConfigError(errors)
        return cfg

    @property
    def adaptive_bandwidth(self) -> bool:
        return self.testfn_bandwidth == ADAPTIVE

    @property
    def adaptive_map_scale(self) -> bool:
        return self.map_scale == ADAPTIVE

    def knn_k(self, n_pooled: int) -> int:
        if self.bandwidth_k is not None:
            return min(self.bandwidth_k, n_pooled)
        return min(math.ceil(math.sqrt(n_pooled)), n_pooled)


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _positive_or_adaptive(v) -> bool:
    if v == ADAPTIVE:
        return True
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v > 0


def validate_config(cfg: SolverConfig, source: SampleSet | None = None,
                    target: SampleSet | None = None) -> list[str]:
    """Every violated invariant of ``cfg`` (and of the sample pair, if given)."""
    errors = []
    if not (isinstance(cfg.trust_region, (int, float)) and cfg.trust_region > 0):
        errors.append("trust region must be positive")
    if not _is_int(cfg.n_representers) or cfg.n_representers < 1:
        errors.append("n_representers must be an integer >= 1")
    if not _is_int(cfg.n_centers) or cfg.n_centers < 1:
        errors.append("n_centers must be an integer >= 1")
    if not _positive_or_adaptive(cfg.testfn_bandwidth):
        errors.append("testfn_bandwidth must be positive or 'adaptive'")
    if not _positive_or_adaptive(cfg.map_scale):
        errors.append("map_scale must be positive or 'adaptive'")
    if cfg.map_family not in MAP_FAMILIES:
        errors.append(f"unknown map family {cfg.map_family!r}")
    if not _is_int(cfg.multinomial_degree) or cfg.multinomial_degree < 1:
        errors.append("multinomial_degree must be a positive integer")
    elif cfg.map_family == "multinomial" and cfg.multinomial_degree < 2:
        errors.append("multinomial_degree must be >= 2 (degree-1 maps only translate)")
    if not (isinstance(cfg.representer_init_scale, (int, float)) and cfg.representer_init_scale >= 0):
        errors.append("representer_init_scale must be non-negative")
    if not _is_int(cfg.max_iterations) or cfg.max_iterations < 0:
        errors.append("max_iterations must be a non-negative integer")
    if not _is_int(cfg.rng_seed):
        errors.append("rng_seed must be an integer")
    if not isinstance(cfg.precondition, bool):
        errors.append("precondition must be a boolean")
    if cfg.optimizer not in OPTIMIZERS:
        errors.append(f"unknown optimizer {cfg.optimizer!r}")
    if not (isinstance(cfg.learning_rate, (int, float)) and cfg.learning_rate > 0):
        errors.append("learning_rate must be positive")
    if cfg.bandwidth_k is not None and (not _is_int(cfg.bandwidth_k) or cfg.bandwidth_k < 1):
        errors.append("bandwidth_k must be a positive integer")
    if not (0 < cfg.bandwidth_min <= cfg.bandwidth_max):
        errors.append("bandwidth clipping range must satisfy 0 < min <= max")
    if source is not None and target is not None and source.dim != target.dim:
        errors.append(f"dimension mismatch: source has d={source.dim}, target has d={target.dim}")
    return errors


@dataclass(frozen=True)
class RepresenterEnsemble:
    """Positive and negative representer clouds with per-particle bandwidths."""

    positive: np.ndarray
    negative: np.ndarray
    bandwidths_pos: np.ndarray
    bandwidths_neg: np.ndarray

    def __post_init__(self):
        for name in ("positive", "negative", "bandwidths_pos", "bandwidths_neg"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.positive.shape != self.negative.shape or self.positive.ndim != 2:
            raise ValueError("positive and negative clouds must share shape (N_r, B)")
        n_r = self.positive.shape[0]
        if self.bandwidths_pos.shape != (n_r,) or self.bandwidths_neg.shape != (n_r,):
            raise ValueError("bandwidth vectors must have length N_r")
        if np.any(self.bandwidths_pos <= 0) or np.any(self.bandwidths_neg <= 0):
            raise ValueError("bandwidths must be positive")

    @property
    def n_representers(self) -> int:
        return self.positive.shape[0]

    @property
    def dim(self) -> int:
        return self.positive.shape[1]

    def stacked(self):
        """(positions, bandwidths, signed weights) with the positive cloud first."""
        n_r = self.n_representers
        pos = np.concatenate([self.positive, self.negative])
        sig = np.concatenate([self.bandwidths_pos, self.bandwidths_neg])
        w = np.concatenate([np.full(n_r, 1.0 / n_r), np.full(n_r, -1.0 / n_r)])
        return pos, sig, w

    def with_bandwidths(self, pos, neg) -> "RepresenterEnsemble":
        return replace(self, bandwidths_pos=pos, bandwidths_neg=neg)


def init_representers(cfg: SolverConfig, dim: int) -> RepresenterEnsemble:
    """Draw both clouds i.i.d. from N(0, c^2 I) on separate substreams."""
    c = cfg.representer_init_scale
    n_r = cfg.n_representers
    pos = c * substream(cfg.rng_seed, "representers/positive").standard_normal((n_r, dim))
    neg = c * substream(cfg.rng_seed, "representers/negative").standard_normal((n_r, dim))
    sigma = 1.0 if cfg.adaptive_bandwidth else float(cfg.testfn_bandwidth)
    bw = np.full(n_r, sigma)
    return RepresenterEnsemble(pos, neg, bw, bw.copy())
