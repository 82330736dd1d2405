"""Transport flow: elementary steps, their composition, replay and log-dets.

A representer step moves points by ``grad F(y; alpha) - grad F(y; 0)``,
where ``F(.; alpha)`` evaluates the test function on clouds branched by the
accepted alpha maps.  A feature step (fixed-feature mode) moves points by
``grad <alpha, phi(y)>``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .maps import ElementaryMap, Monomials
from .precondition import AffineTransform
from .testfn import kernel_sums

FORMAT = "advot-flow"
VERSION = 1


class FlowFormatError(ValueError):
    pass


def _ro(arr):
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


def _map_to_dict(m: ElementaryMap) -> dict:
    out = {"family": m.family, "dim": m.dim, "params": m.params.tolist(),
           "scale": m.scale, "degree": m.degree}
    if m.radial:
        out["centers"] = m.centers.tolist()
    return out


def _map_from_dict(data) -> ElementaryMap:
    return ElementaryMap(data["family"], data["dim"], data["params"], data.get("centers"),
                         data["scale"], data["degree"])


@dataclass(frozen=True)
class RepresenterStep:
    """Snapshot of one committed iteration: pre-commit clouds and the alpha branch."""

    positive: np.ndarray
    negative: np.ndarray
    bandwidths_pos: np.ndarray
    bandwidths_neg: np.ndarray
    alpha_pos: ElementaryMap
    alpha_neg: ElementaryMap

    kind = "representer"

    def __post_init__(self):
        for name in ("positive", "negative", "bandwidths_pos", "bandwidths_neg"):
            object.__setattr__(self, name, _ro(getattr(self, name)))

    @property
    def dim(self) -> int:
        return self.positive.shape[1]

    def _clouds(self):
        n_r = self.positive.shape[0]
        sig = np.concatenate([self.bandwidths_pos, self.bandwidths_neg])
        w = np.concatenate([np.full(n_r, 1.0 / n_r), np.full(n_r, -1.0 / n_r)])
        base = np.concatenate([self.positive, self.negative])
        branched = np.concatenate([self.alpha_pos.apply(self.positive),
                                   self.alpha_neg.apply(self.negative)])
        return base, branched, sig, w

    def apply(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        base, branched, sig, w = self._clouds()
        g_branch = kernel_sums(branched, sig, w, y)[1]
        g_base = kernel_sums(base, sig, w, y)[1]
        return y + (g_branch - g_base)

    def jacobian(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        base, branched, sig, w = self._clouds()
        h_branch = kernel_sums(branched, sig, w, y, order=2)[2]
        h_base = kernel_sums(base, sig, w, y, order=2)[2]
        return np.eye(y.shape[1]) + (h_branch - h_base)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "positive": self.positive.tolist(),
                "negative": self.negative.tolist(),
                "bandwidths_pos": self.bandwidths_pos.tolist(),
                "bandwidths_neg": self.bandwidths_neg.tolist(),
                "alpha_pos": _map_to_dict(self.alpha_pos),
                "alpha_neg": _map_to_dict(self.alpha_neg)}

    @classmethod
    def from_dict(cls, data) -> "RepresenterStep":
        return cls(data["positive"], data["negative"], data["bandwidths_pos"],
                   data["bandwidths_neg"], _map_from_dict(data["alpha_pos"]),
                   _map_from_dict(data["alpha_neg"]))


@dataclass(frozen=True)
class FeatureStep:
    """Fixed-feature step y -> y + sum_j alpha_j grad phi_j(y)."""

    dim: int
    degree: int
    alpha: np.ndarray

    kind = "features"

    def __post_init__(self):
        object.__setattr__(self, "alpha", _ro(np.ravel(self.alpha)))

    def apply(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return y + Monomials(self.dim, self.degree).gradient(y) @ self.alpha

    def jacobian(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        hess = Monomials(self.dim, self.degree).hessian(y)
        return np.eye(self.dim) + np.einsum("nkde,k->nde", hess, self.alpha)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "degree": self.degree,
                "alpha": self.alpha.tolist()}

    @classmethod
    def from_dict(cls, data) -> "FeatureStep":
        return cls(data["dim"], data["degree"], data["alpha"])


_STEP_KINDS = {"representer": RepresenterStep, "features": FeatureStep}


def step_apply(snapshot, y):
    y = np.asarray(y, dtype=float)
    out = snapshot.apply(y)
    return out[0] if y.ndim == 1 else out


def step_logdet(snapshot, y):
    """log|det| of the step Jacobian; ``-inf`` where it is singular."""
    y = np.asarray(y, dtype=float)
    sign, logabs = np.linalg.slogdet(snapshot.jacobian(y))
    logabs = np.where(sign == 0, -np.inf, logabs)
    return logabs[0] if y.ndim == 1 else logabs


@dataclass
class FlowRecord:
    """Ordered, append-only list of committed steps plus end transforms."""

    dim: int
    steps: list = field(default_factory=list)
    source_transform: AffineTransform | None = None
    target_transform: AffineTransform | None = None
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.steps)

    def append(self, step):
        if step.dim != self.dim:
            raise ValueError("step dimension does not match flow")
        self.steps.append(step)

    def to_whitened(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x if self.source_transform is None else self.source_transform.apply(x)

    def from_whitened(self, z):
        return z if self.target_transform is None else self.target_transform.invert(z)

    def apply_whitened(self, z, start: int = 0, stop: int | None = None):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        for step in self.steps[start:stop]:
            z = step.apply(z)
        return z

    def apply(self, x):
        """Replay the full map on points in original coordinates."""
        x = np.asarray(x, dtype=float)
        out = self.from_whitened(self.apply_whitened(self.to_whitened(x)))
        return out[0] if x.ndim == 1 else out

    def apply_with_logdet(self, x):
        """Images, total log|det Jacobian| and count of negative-determinant steps hit.

        Points where some step Jacobian is singular get ``-inf`` log-det.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = self.to_whitened(x)
        logdet = np.zeros(z.shape[0])
        negative = np.zeros(z.shape[0], dtype=int)
        if self.source_transform is not None:
            logdet += self.source_transform.logdet()
        for step in self.steps:
            sign, logabs = np.linalg.slogdet(step.jacobian(z))
            logdet += np.where(sign == 0, -np.inf, logabs)
            negative += sign < 0
            z = step.apply(z)
        if self.target_transform is not None:
            logdet -= self.target_transform.logdet()
        return self.from_whitened(z), logdet, negative

    def logdet(self, x):
        return self.apply_with_logdet(x)[1]

    def to_dict(self) -> dict:
        return {"format": FORMAT, "version": VERSION, "dim": self.dim,
                "config": self.config,
                "source_transform": None if self.source_transform is None else self.source_transform.to_dict(),
                "target_transform": None if self.target_transform is None else self.target_transform.to_dict(),
                "steps": [s.to_dict() for s in self.steps]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, data) -> "FlowRecord":
        if data.get("format") != FORMAT:
            raise FlowFormatError("not a flow record file")
        if data.get("version") != VERSION:
            raise FlowFormatError(f"flow record version {data.get('version')} is not supported "
                                  f"(expected {VERSION})")
        steps = []
        for i, s in enumerate(data["steps"]):
            kind = _STEP_KINDS.get(s.get("kind"))
            if kind is None:
                raise FlowFormatError(f"step {i}: unknown kind {s.get('kind')!r}")
            steps.append(kind.from_dict(s))
        src = data.get("source_transform")
        tgt = data.get("target_transform")
        return cls(data["dim"], steps,
                   None if src is None else AffineTransform.from_dict(src),
                   None if tgt is None else AffineTransform.from_dict(tgt),
                   data.get("config", {}))

    @classmethod
    def from_json(cls, text: str) -> "FlowRecord":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FlowFormatError(f"invalid flow JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "FlowRecord":
        return cls.from_json(Path(path).read_text())


def flow_apply(fr: FlowRecord, y):
    return fr.apply(y)
