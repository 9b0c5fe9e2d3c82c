"""Radial approximation of the modified carrying simplex.

The simplex is the boundary of the basin of repulsion of the origin, so along
each ray ``{lam * d}`` it is crossed exactly once, at ``lam0(d)``.  A point is
classified as below the surface when its backward orbit (computed with a damped
Newton inverse of ``T``) falls into a small ball around 0, and as on/above it
when the backward orbit leaves ``[0, r]``, the inverse fails, or the orbit
stalls.  ``lam0(d)`` is then located by bisection.

Everything is vectorised over rays: a bisection round classifies all pending
directions at once, and each backward step solves one small Newton system per
ray.  Coordinates outside the support of a point are pinned to zero, which is
exactly the sub-community map on that face.
"""

from __future__ import annotations

import io
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from csx.errors import (
    BracketError,
    BudgetExceeded,
    FormatError,
    HeightUndetermined,
    InverseFailed,
)
from csx.model import ZERO_THRESHOLD, ModelSpec, _response

DIRECTION_BUDGET = 10**6
LAMBDA_LO = 1e-6
DEFAULT_TOL = 1e-6

_BELOW, _ABOVE, _UNDETERMINED = 0, 1, 2

# per-direction outcome codes of a bisection
OK, BRACKET_FAILED, UNDETERMINED = 0, 1, 2


class Membership(str, Enum):
    BELOW = "BelowSigma"
    AT_OR_ABOVE = "AtOrAbove"
    UNDETERMINED = "Undetermined"


_CODE_TO_MEMBERSHIP = {
    _BELOW: Membership.BELOW,
    _ABOVE: Membership.AT_OR_ABOVE,
    _UNDETERMINED: Membership.UNDETERMINED,
}


@dataclass(frozen=True)
class BasinTestConfig:
    max_backward_steps: int = 400
    zero_radius: float = 1e-8
    escape_margin: float = 1e-9
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    shrink_window: int = 20
    max_halvings: int = 30

    def __post_init__(self):
        for name in ("max_backward_steps", "zero_radius", "escape_margin", "newton_tol",
                     "newton_max_iter", "shrink_window"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class RadialSurface:
    directions: np.ndarray
    heights: np.ndarray
    model_hash: str
    resolution: int
    tol: float = DEFAULT_TOL
    residual: float | None = None
    undetermined: tuple = ()
    bracket_failures: tuple = ()

    @property
    def points(self) -> np.ndarray:
        return self.heights[:, None] * self.directions

    @property
    def n(self) -> int:
        return self.directions.shape[1]

    @property
    def gaps(self) -> tuple:
        return tuple(sorted(self.undetermined + self.bracket_failures))

    def vertex_heights(self) -> list:
        """Heights at the axial directions ``e_i`` (NaN if absent)."""
        out = []
        for i in range(self.n):
            hit = np.flatnonzero(self.directions[:, i] == 1.0)
            out.append(float(self.heights[hit[0]]) if hit.size else float("nan"))
        return out

    def summary(self) -> dict:
        h = self.heights[np.isfinite(self.heights)]
        return {
            "resolution": self.resolution,
            "directions": int(len(self.heights)),
            "residual": self.residual,
            "height_min": float(h.min()) if h.size else None,
            "height_max": float(h.max()) if h.size else None,
            "vertex_heights": self.vertex_heights(),
            "gaps": len(self.gaps),
        }


# -- direction lattice ------------------------------------------------------------------


def direction_grid(n: int, resolution: int) -> np.ndarray:
    """All points of the probability simplex with coordinates in ``{k / resolution}``.

    Rows come in lexicographically decreasing order of the integer compositions,
    so ``e_1`` is first and ``e_n`` last.
    """
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    count = math.comb(resolution + n - 1, n - 1)
    if count > DIRECTION_BUDGET:
        raise BudgetExceeded(f"{count} directions exceed the budget of {DIRECTION_BUDGET}")
    return _compositions(n, resolution) / resolution


def _compositions(n: int, total: int) -> np.ndarray:
    if n == 1:
        return np.array([[total]], dtype=float)
    blocks = []
    for k in range(total, -1, -1):
        rest = _compositions(n - 1, total - k)
        blocks.append(np.column_stack([np.full(len(rest), float(k)), rest]))
    return np.concatenate(blocks)


# -- batched Newton inverse -------------------------------------------------------------


def _T(model: ModelSpec, X):
    return X * _response(model, X @ model.A.T)[0]


def _DT(model: ModelSpec, X):
    G, dG = _response(model, X @ model.A.T)
    return G[..., :, None] * np.eye(model.n) + X[..., :, None] * dG[..., :, None] * model.A


def _solve(J, F):
    """Batched solve; rows with a singular matrix get NaN steps."""
    try:
        return np.linalg.solve(J, F[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.full_like(F, np.nan)
        for k in range(len(F)):
            try:
                out[k] = np.linalg.solve(J[k], F[k])
            except np.linalg.LinAlgError:
                pass
        return out


def _inverse_batch(model: ModelSpec, Y, X0, cfg: BasinTestConfig):
    """Solve ``T(x) = y`` row by row inside the face of each ``y``.

    Returns ``(X, ok)``; rows with ``ok == False`` diverged, hit a singular
    restricted Jacobian or could not decrease the residual.
    """
    Y = np.asarray(Y, float)
    m, n = Y.shape
    S = Y > ZERO_THRESHOLD
    X = np.where(S, np.where(X0 > 0, X0, Y), 0.0)
    Y = np.where(S, Y, 0.0)
    eye = np.eye(n, dtype=bool)
    both = S[:, :, None] & S[:, None, :]
    tol = cfg.newton_tol * np.maximum(1.0, Y.max(axis=1))
    ok = np.zeros(m, dtype=bool)
    active = np.arange(m)
    F = _T(model, X) - Y
    res = np.abs(F).max(axis=1)
    for _ in range(cfg.newton_max_iter + 1):
        done = res[active] < tol[active]
        ok[active[done]] = True
        active = active[~done]
        if active.size == 0:
            break
        Xa, Fa, Sa, ra = X[active], F[active], S[active], res[active]
        J = np.where(both[active], _DT(model, Xa), eye)
        step = _solve(J, Fa)
        good = np.all(np.isfinite(step), axis=1)
        t = np.ones(len(active))
        accepted = np.zeros(len(active), dtype=bool)
        newX, newF, newr = Xa.copy(), Fa.copy(), ra.copy()
        pending = np.flatnonzero(good)
        for _h in range(cfg.max_halvings + 1):
            if pending.size == 0:
                break
            cand = Xa[pending] - t[pending, None] * step[pending]
            pos = np.all((cand > 0) | ~Sa[pending], axis=1)
            cand = np.where(Sa[pending], cand, 0.0)
            safe = np.where(pos[:, None], cand, Xa[pending])
            Fc = _T(model, safe) - Y[active[pending]]
            rc = np.abs(Fc).max(axis=1)
            acc = pos & (rc < ra[pending])
            hit = pending[acc]
            newX[hit], newF[hit], newr[hit] = safe[acc], Fc[acc], rc[acc]
            accepted[hit] = True
            pending = pending[~acc]
            t[pending] *= 0.5
        X[active], F[active], res[active] = newX, newF, newr
        stuck = ~accepted
        active = active[~stuck]
    return X, ok


def newton_inverse(model: ModelSpec, y, guess=None, cfg: BasinTestConfig | None = None) -> np.ndarray:
    """Preimage ``x`` of ``y`` under ``T`` in the face of ``y`` (damped Newton)."""
    cfg = cfg or BasinTestConfig()
    y = np.asarray(y, float)
    guess = y if guess is None else np.asarray(guess, float)
    X, ok = _inverse_batch(model, y[None, :], guess[None, :], cfg)
    if not ok[0]:
        raise InverseFailed(f"Newton inverse did not converge for y = {y.tolist()}")
    return X[0]


# -- basin membership -------------------------------------------------------------------


def _membership_batch(model: ModelSpec, X, cfg: BasinTestConfig) -> np.ndarray:
    cur = np.array(X, dtype=float)
    m = len(cur)
    limit = np.asarray(model.r, float) + cfg.escape_margin
    status = np.full(m, -1)
    norms = cur.max(axis=1)
    status[norms < cfg.zero_radius] = _BELOW
    history = deque(maxlen=cfg.shrink_window + 1)
    history.append(norms.copy())
    for _ in range(cfg.max_backward_steps):
        act = np.flatnonzero(status < 0)
        if act.size == 0:
            break
        prev = cur[act]
        nxt, ok = _inverse_batch(model, prev, prev, cfg)
        status[act[~ok]] = _ABOVE
        escaped = ok & np.any(nxt > limit, axis=1)
        status[act[escaped]] = _ABOVE
        live = ok & ~escaped
        cur[act[live]] = nxt[live]
        step_norms = np.full(m, np.nan)
        step_norms[act[live]] = nxt[live].max(axis=1)
        history.append(step_norms)
        small = live & (nxt.max(axis=1) < cfg.zero_radius)
        status[act[small]] = _BELOW
    left = np.flatnonzero(status < 0)
    if left.size:
        hist = np.array(history)[:, left]
        shrinking = (len(hist) == cfg.shrink_window + 1) & np.all(np.diff(hist, axis=0) < 0, axis=0)
        status[left] = np.where(shrinking, _UNDETERMINED, _ABOVE)
    return status


def basin_membership(model: ModelSpec, x, cfg: BasinTestConfig | None = None) -> Membership:
    """Whether ``x`` lies strictly below the simplex (its backward orbit tends to 0)."""
    cfg = cfg or BasinTestConfig()
    x = np.asarray(x, float)
    if not np.any(x > 0):
        raise ValueError("the origin has no membership; x must be nonzero")
    return _CODE_TO_MEMBERSHIP[int(_membership_batch(model, x[None, :], cfg)[0])]


# -- radial heights ---------------------------------------------------------------------


def _box_exit(model: ModelSpec, D) -> np.ndarray:
    r = np.asarray(model.r, float)
    with np.errstate(divide="ignore", over="ignore"):
        scale = np.where(D > 0, r / D, np.inf)
    return scale.min(axis=1)


def _classify_with_retry(model, P, cfg):
    codes = _membership_batch(model, P, cfg)
    und = np.flatnonzero(codes == _UNDETERMINED)
    if und.size:
        longer = replace(cfg, max_backward_steps=2 * cfg.max_backward_steps)
        codes[und] = _membership_batch(model, P[und], longer)
    return codes


def _heights_batch(model: ModelSpec, D, cfg: BasinTestConfig, tol: float):
    D = np.asarray(D, float)
    m = len(D)
    outcome = np.full(m, OK)
    hi = _box_exit(model, D)
    lo = np.full(m, LAMBDA_LO)

    first = _classify_with_retry(model, lo[:, None] * D, cfg)
    retry = np.flatnonzero(first != _BELOW)
    if retry.size:
        lo[retry] /= 100.0
        again = _classify_with_retry(model, lo[retry, None] * D[retry], cfg)
        outcome[retry[again != _BELOW]] = BRACKET_FAILED
    top = _classify_with_retry(model, hi[:, None] * D, cfg)
    outcome[(top == _BELOW) & (outcome == OK)] = BRACKET_FAILED
    outcome[(top == _UNDETERMINED) & (outcome == OK)] = UNDETERMINED

    while True:
        act = np.flatnonzero((outcome == OK) & (hi - lo > tol * hi))
        if act.size == 0:
            break
        mid = 0.5 * (lo[act] + hi[act])
        codes = _classify_with_retry(model, mid[:, None] * D[act], cfg)
        below = codes == _BELOW
        above = codes == _ABOVE
        lo[act[below]] = mid[below]
        hi[act[above]] = mid[above]
        outcome[act[codes == _UNDETERMINED]] = UNDETERMINED
    heights = np.where(outcome == OK, 0.5 * (lo + hi), np.nan)
    return heights, outcome


def _heights_parallel(model, D, cfg, tol, threads):
    if threads <= 1 or len(D) < 2 * threads:
        return _heights_batch(model, D, cfg, tol)
    chunks = np.array_split(np.arange(len(D)), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda idx: _heights_batch(model, D[idx], cfg, tol), chunks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def radial_heights(model: ModelSpec, directions, cfg: BasinTestConfig | None = None,
                   tol: float = DEFAULT_TOL, threads: int = 1):
    """Vectorised :func:`radial_height`; returns ``(heights, outcome_codes)``.

    Failed directions get NaN heights and outcome ``BRACKET_FAILED`` or
    ``UNDETERMINED`` instead of raising.
    """
    cfg = cfg or BasinTestConfig()
    D = np.atleast_2d(np.asarray(directions, float))
    return _heights_parallel(model, D, cfg, tol, threads)


def radial_height(model: ModelSpec, d, cfg: BasinTestConfig | None = None,
                  tol: float = DEFAULT_TOL) -> float:
    """Scale ``lam0`` at which the ray through ``d`` crosses the simplex."""
    d = np.asarray(d, float)
    if np.any(d < 0) or abs(d.sum() - 1.0) > 1e-12:
        raise ValueError("direction must lie on the probability simplex")
    h, code = radial_heights(model, d[None, :], cfg, tol)
    if code[0] == BRACKET_FAILED:
        raise BracketError(f"no bisection bracket along d = {d.tolist()}")
    if code[0] == UNDETERMINED:
        raise HeightUndetermined(f"membership stayed undetermined along d = {d.tolist()}")
    return float(h[0])


# -- surfaces ---------------------------------------------------------------------------


def compute_surface(model: ModelSpec, resolution: int, cfg: BasinTestConfig | None = None,
                    tol: float = DEFAULT_TOL, force: bool = False, threads: int = 1,
                    with_residual: bool = True, verify_resolution: int = 8) -> RadialSurface:
    """Heights over the full direction lattice of the given resolution.

    Unless ``force`` is set the model must first pass :func:`csx.verify.verify_all`.
    Directions whose height could not be bracketed or decided are left as NaN
    and listed in ``undetermined`` / ``bracket_failures``.
    """
    if not force:
        from csx.verify import verify_all

        report = verify_all(model, verify_resolution)
        if not report.simplex_exists:
            raise ValueError("existence conditions not established; pass force=True to override")
    cfg = cfg or BasinTestConfig()
    D = direction_grid(model.n, resolution)
    heights, codes = _heights_parallel(model, D, cfg, tol, threads)
    surface = RadialSurface(
        directions=D,
        heights=heights,
        model_hash=model.model_hash,
        resolution=resolution,
        tol=tol,
        undetermined=tuple(int(k) for k in np.flatnonzero(codes == UNDETERMINED)),
        bracket_failures=tuple(int(k) for k in np.flatnonzero(codes == BRACKET_FAILED)),
    )
    if with_residual:
        surface = replace(surface, residual=invariance_residual(model, surface, cfg, threads=threads))
    return surface


def invariance_residual(model: ModelSpec, surface: RadialSurface, cfg: BasinTestConfig | None = None,
                        threads: int = 1) -> float:
    """Largest relative radial mismatch between ``T(p)`` and the surface, over points ``p``."""
    cfg = cfg or BasinTestConfig()
    keep = np.isfinite(surface.heights)
    Y = _T(model, surface.points[keep])
    total = Y.sum(axis=1)
    lam, codes = _heights_parallel(model, Y / total[:, None], cfg, surface.tol, threads)
    good = codes == OK
    if not np.any(good):
        return float("nan")
    return float(np.max(np.abs(lam[good] - total[good]) / lam[good]))


def unordered_violations(surface: RadialSurface, tol: float | None = None) -> list:
    """Pairs ``(a, b)`` of same-support surface points with ``p_a << p_b`` on that support.

    Dominance must exceed ``2 * tol * max height`` in every supported coordinate.
    """
    tol = surface.tol if tol is None else tol
    P = surface.points
    finite = np.flatnonzero(np.isfinite(surface.heights))
    thr = 2.0 * tol * np.nanmax(surface.heights)
    groups: dict = {}
    for k in finite:
        groups.setdefault(tuple(np.flatnonzero(surface.directions[k] > 0)), []).append(k)
    out = []
    for sup, members in groups.items():
        if len(members) < 2:
            continue
        idx = np.array(members)
        sub = P[np.ix_(idx, list(sup))]
        strictly = np.all(sub[None, :, :] - sub[:, None, :] > thr, axis=2)
        for a, b in zip(*np.nonzero(strictly)):
            out.append((int(idx[a]), int(idx[b])))
    return sorted(out)


def _lattice_index(surface: RadialSurface) -> dict:
    keys = np.rint(surface.directions * surface.resolution).astype(int)
    return {tuple(k): i for i, k in enumerate(keys)}


def export_surface(surface: RadialSurface, fmt: str = "csv") -> bytes:
    """Serialise as ``csv`` (any n) or Wavefront ``obj`` (n = 3 only)."""
    n = surface.n
    buf = io.StringIO()
    if fmt == "csv":
        head = [f"d_{i + 1}" for i in range(n)] + ["lambda"] + [f"x_{i + 1}" for i in range(n)]
        buf.write(",".join(head) + "\n")
        P = surface.points
        for d, h, p in zip(surface.directions, surface.heights, P):
            buf.write(",".join(f"{v:.17g}" for v in (*d, h, *p)) + "\n")
        return buf.getvalue().encode()
    if fmt != "obj":
        raise FormatError(f"unknown format {fmt!r}; expected csv or obj")
    if n != 3:
        raise FormatError(f"obj export needs n = 3, got n = {n}")
    index = _lattice_index(surface)
    R = surface.resolution
    if len(index) != math.comb(R + 2, 2):
        raise FormatError("obj export needs the complete direction lattice")
    for p in surface.points:
        buf.write("v " + " ".join(f"{v:.17g}" for v in p) + "\n")
    for a in range(R):
        for b in range(R - a):
            v0 = index[(a, b, R - a - b)]
            v1 = index[(a + 1, b, R - a - b - 1)]
            v2 = index[(a, b + 1, R - a - b - 1)]
            buf.write(f"f {v0 + 1} {v1 + 1} {v2 + 1}\n")
            if a + b <= R - 2:
                v3 = index[(a + 1, b + 1, R - a - b - 2)]
                buf.write(f"f {v1 + 1} {v3 + 1} {v2 + 1}\n")
    return buf.getvalue().encode()
