"""Orbits, fixed points and heuristic omega-limit classification."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from csx.errors import OrbitOverflow
from csx.model import ModelSpec, _as_state, _response, axial_fixed_point, jacobian_map, support

OVERFLOW = 1e12
FIXED_TOL = 1e-10
HYPERBOLIC_MARGIN = 1e-8
RECURRENCE_TOL = 1e-8


class Stability(str, Enum):
    REPELLOR = "Repellor"
    ATTRACTOR = "Attractor"
    SADDLE = "Saddle"
    NON_HYPERBOLIC = "NonHyperbolic"


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    model_hash: str

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class FixedPointRecord:
    location: np.ndarray
    support: frozenset
    eigenvalues: np.ndarray
    classification: Stability

    def to_dict(self) -> dict:
        return {
            "location": [float(v) for v in self.location],
            "support": [i + 1 for i in sorted(self.support)],
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "classification": self.classification.value,
        }


@dataclass(frozen=True)
class OmegaEstimate:
    kind: str  # "FixedPoint", "PeriodicOrbit" or "Unclassified"
    representative: np.ndarray
    period: int | None = None


def _step(model: ModelSpec, X):
    return X * _response(model, X @ model.A.T)[0]


def iterate(model: ModelSpec, x0, steps: int) -> Trajectory:
    """States ``x0, T(x0), ..., T^steps(x0)``."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    x = _as_state(x0).astype(float)
    states = np.empty((steps + 1, model.n))
    states[0] = x
    for k in range(1, steps + 1):
        x = _step(model, x)
        if not np.all(x <= OVERFLOW):
            raise OrbitOverflow(f"component above {OVERFLOW:g} at step {k}")
        states[k] = x
    return Trajectory(states, model.model_hash)


def advance(model: ModelSpec, X0, steps: int) -> np.ndarray:
    """Push a batch of states ``steps`` times through the map; returns the final batch."""
    X = _as_state(X0).astype(float)
    for k in range(steps):
        X = _step(model, X)
        if not np.all(X <= OVERFLOW):
            raise OrbitOverflow(f"component above {OVERFLOW:g} at step {k + 1}")
    return X


def classify_eigenvalues(ev) -> Stability:
    mod = np.abs(np.asarray(ev))
    if np.any(np.abs(mod - 1.0) <= HYPERBOLIC_MARGIN):
        return Stability.NON_HYPERBOLIC
    if np.all(mod > 1.0):
        return Stability.REPELLOR
    if np.all(mod < 1.0):
        return Stability.ATTRACTOR
    return Stability.SADDLE


def fixed_point_record(model: ModelSpec, x) -> FixedPointRecord:
    x = np.asarray(x, float)
    ev = np.linalg.eigvals(jacobian_map(model, x))
    ev = ev[np.lexsort((ev.imag, ev.real))]
    return FixedPointRecord(x, support(x), ev, classify_eigenvalues(ev))


def find_axial_and_origin(model: ModelSpec) -> list:
    """Records for the origin followed by ``Q_1, ..., Q_n``."""
    n = model.n
    records = [fixed_point_record(model, np.zeros(n))]
    for i in range(n):
        records.append(fixed_point_record(model, axial_fixed_point(model, i) * np.eye(n)[i]))
    return records


def find_interior_fixed_points(model: ModelSpec, seeds_per_axis: int = 4, box=None,
                               max_iter: int = 100) -> list:
    """Interior roots of ``T(x) = x`` by damped Newton from a tensor grid of seeds.

    Seeds fill ``(0, box]`` (default ``box = q``); non-convergent seeds are dropped
    and roots closer than 1e-8 are merged.
    """
    n = model.n
    corner = model.q if box is None else np.asarray(box, float)
    axes = [corner[i] * np.arange(1, seeds_per_axis + 1) / seeds_per_axis for i in range(n)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    eye = np.eye(n)

    def residual(Z):
        return _step(model, Z) - Z

    F = residual(X)
    res = np.abs(F).max(axis=1)
    alive = np.ones(len(X), dtype=bool)
    for _ in range(max_iter):
        act = np.flatnonzero(alive & (res >= 1e-14))
        if act.size == 0:
            break
        J = jacobian_map(model, X[act]) - eye
        try:
            step = np.linalg.solve(J, F[act][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(j, f, rcond=None)[0] for j, f in zip(J, F[act])])
        t = np.ones(act.size)
        done = np.zeros(act.size, dtype=bool)
        for _h in range(40):
            cand = X[act] - t[:, None] * step
            ok = np.all(cand > 0, axis=1) & ~done
            safe = np.where(ok[:, None], cand, X[act])
            Fc = residual(safe)
            rc = np.abs(Fc).max(axis=1)
            take = ok & (rc < res[act])
            idx = act[take]
            X[idx], F[idx], res[idx] = safe[take], Fc[take], rc[take]
            done |= take
            if done.all():
                break
            t[~done] *= 0.5
        alive[act[~done]] = False
    roots = []
    for k in np.flatnonzero(alive & (res < FIXED_TOL)):
        x = X[k]
        if np.all(x > 1e-10) and not any(np.max(np.abs(x - r)) < 1e-8 for r in roots):
            roots.append(x)
    roots.sort(key=lambda v: tuple(v))
    return [fixed_point_record(model, x) for x in roots]


def classify_omega(model: ModelSpec, x0, transient: int = 5000, window: int = 1000) -> OmegaEstimate:
    """Fixed point, minimal-period cycle or Unclassified, from a finite window."""
    x = advance(model, np.asarray(x0, float), transient)
    W = iterate(model, x, window - 1).states
    if np.max(W.max(axis=0) - W.min(axis=0)) < RECURRENCE_TOL:
        return OmegaEstimate("FixedPoint", W[-1].copy(), 1)
    for p in range(2, window // 4 + 1):
        if np.max(np.abs(W[p:] - W[:-p])) < RECURRENCE_TOL:
            return OmegaEstimate("PeriodicOrbit", W[-p:].copy(), p)
    return OmegaEstimate("Unclassified", W[-1:].copy(), None)


def check_periodic_unordered(model: ModelSpec, orbit, tol: float = 1e-9) -> bool:
    """True iff no two distinct orbit points satisfy ``p <= q`` componentwise."""
    pts = np.atleast_2d(np.asarray(orbit, float))
    for p, q in itertools.permutations(pts, 2):
        if np.all(p <= q + tol) and np.any(np.abs(p - q) > tol):
            return False
    return True
