"""Species vanishing and dominance from the relative position of nullclines.

``Gamma_i = {x : f_i(x) = 1}``.  A set is *below* ``Gamma_j`` where ``f_j > 1``
and *above* it where ``f_j < 1``.  For every family in :mod:`csx.model` the
nullcline is the hyperplane ``a_i . x = L_i``, so whether
``Gamma_i ∩ [0, r] ∩ face`` lies strictly on one side of ``Gamma_j`` is decided
exactly from the vertices of that polytope, all of which sit on edges of the
(face-restricted) box.  :func:`sampled_relation` answers the same question
using only evaluations of ``f`` and serves as an independent cross-check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from csx.dynamics import FixedPointRecord, fixed_point_record
from csx.errors import BudgetExceeded, NotPlanar
from csx.model import Family, ModelSpec, axial_fixed_point, growth, jacobian_growth

RELATION_MARGIN = 1e-9
DIAG_NEG = 1e-12
PLANE_FAMILIES = frozenset(Family)
MAX_PLANE_DIM = 16


class Relation(str, Enum):
    BELOW = "StrictlyBelow"
    ABOVE = "StrictlyAbove"
    NEITHER = "Neither"
    EMPTY = "EmptyIntersection"


@dataclass(frozen=True)
class NullclinePlane:
    species: int
    normal: np.ndarray
    level: float


@dataclass(frozen=True)
class RelationVerdict:
    """Where ``Gamma_i ∩ box ∩ face`` sits relative to ``Gamma_j``.

    ``margin`` is the smallest slack on the reported side (``L_j - a_j.x`` or
    ``a_j.x - L_j`` for planes, ``|f_j - 1|`` when sampled); ``binding`` is the
    point where it is attained.  For ``Neither`` the witness is a point that
    spoils strictness.
    """

    relation: Relation
    i: int
    j: int
    face: frozenset = frozenset()
    margin: float = 0.0
    witness: np.ndarray | None = None
    binding: np.ndarray | None = None
    method: str = "plane"

    def to_dict(self) -> dict:
        pt = lambda v: None if v is None else [float(z) for z in v]  # noqa: E731
        return {
            "relation": self.relation.value,
            "i": self.i + 1,
            "j": self.j + 1,
            "face_zeroed": [k + 1 for k in sorted(self.face)],
            "margin": float(self.margin),
            "witness": pt(self.witness),
            "binding": pt(self.binding),
            "method": self.method,
        }


@dataclass(frozen=True)
class Evidence:
    tag: str
    verdict: RelationVerdict

    def to_dict(self) -> dict:
        return {"tag": self.tag, **self.verdict.to_dict()}


@dataclass
class DominanceVerdict:
    per_species: dict
    evidence: list = field(default_factory=list)
    gas_point: FixedPointRecord | None = None
    permutation: tuple | None = None
    notes: list = field(default_factory=list)

    def __post_init__(self):
        dom = [k for k, v in self.per_species.items() if v == "Dominant"]
        if len(dom) > 1:
            raise ValueError("at most one species can be dominant")
        if dom and self.gas_point is None:
            raise ValueError("a dominant species needs its axial fixed point")

    @property
    def dominant(self) -> int | None:
        for k, v in self.per_species.items():
            if v == "Dominant":
                return k
        return None

    def to_dict(self) -> dict:
        return {
            "per_species": {str(k + 1): v for k, v in sorted(self.per_species.items())},
            "dominant": None if self.dominant is None else self.dominant + 1,
            "gas_point": None if self.gas_point is None else self.gas_point.to_dict(),
            "permutation": None if self.permutation is None else [k + 1 for k in self.permutation],
            "evidence": [e.to_dict() for e in self.evidence],
            "notes": list(self.notes),
        }


# -- nullclines -------------------------------------------------------------------------


def plane_levels(model: ModelSpec) -> np.ndarray:
    if model.family not in PLANE_FAMILIES:
        raise NotPlanar(f"{model.family.value} nullclines are not hyperplanes")
    if model.family is Family.LESLIE_GOWER:
        return model.c - 1.0
    if model.family is Family.RICKER:
        return np.ones(model.n)
    return np.asarray(model.u, float)


def nullcline_plane(model: ModelSpec, i: int) -> NullclinePlane:
    level = float(plane_levels(model)[i])
    if level <= 0:
        raise ValueError(f"nullcline of species {i + 1} misses the open cone (level {level})")
    return NullclinePlane(i, model.A[i].copy(), level)


def _polytope_vertices(plane: NullclinePlane, r, face) -> np.ndarray:
    """Vertices of ``{a.x = L} ∩ [0, r] ∩ {x_l = 0, l in face}``."""
    n = len(r)
    if n > MAX_PLANE_DIM:
        raise BudgetExceeded(f"vertex enumeration limited to n <= {MAX_PLANE_DIM}")
    a, L = plane.normal, plane.level
    free = [k for k in range(n) if k not in face]
    eps = 1e-12 * max(1.0, L)
    verts = []
    for k in free:
        others = [l for l in free if l != k]
        combos = list(itertools.product(*[(0.0, r[l]) for l in others]))
        corners = np.array(combos, dtype=float).reshape(len(combos), len(others))
        X = np.zeros((len(corners), n))
        X[:, others] = corners
        partial = X @ a
        if a[k] > 0:
            xk = (L - partial) / a[k]
            keep = (xk >= -eps) & (xk <= r[k] + eps)
            V = X[keep]
            V[:, k] = np.clip(xk[keep], 0.0, r[k])
            verts.append(V)
        else:
            on = np.abs(partial - L) <= eps
            for end in (0.0, r[k]):
                V = X[on].copy()
                V[:, k] = end
                verts.append(V)
    if not verts:
        return np.zeros((0, n))
    V = np.concatenate(verts)
    return np.unique(V, axis=0) if len(V) else V


def _decide(values, points, i, j, face, method, margin_tol=RELATION_MARGIN) -> RelationVerdict:
    """``values`` are signed so that positive means 'below Gamma_j'."""
    if len(values) == 0:
        return RelationVerdict(Relation.EMPTY, i, j, face, 0.0, None, None, method)
    lo, hi = int(np.argmin(values)), int(np.argmax(values))
    below_slack, above_slack = values[lo], -values[hi]
    if below_slack > margin_tol:
        return RelationVerdict(Relation.BELOW, i, j, face, float(below_slack), None, points[lo], method)
    if above_slack > margin_tol:
        return RelationVerdict(Relation.ABOVE, i, j, face, float(above_slack), None, points[hi], method)
    if below_slack >= above_slack:
        return RelationVerdict(Relation.NEITHER, i, j, face, float(below_slack), points[lo], points[lo], method)
    return RelationVerdict(Relation.NEITHER, i, j, face, float(above_slack), points[hi], points[hi], method)


def plane_relation(p: NullclinePlane, q_plane: NullclinePlane, box, face=()) -> RelationVerdict:
    """Exact relation of ``Gamma_i ∩ [0, box] ∩ face`` to ``Gamma_j`` by vertex enumeration."""
    if p.species == q_plane.species:
        raise ValueError("relation needs two distinct species")
    face = frozenset(face)
    r = np.asarray(box, float)
    V = _polytope_vertices(p, r, face)
    values = q_plane.level - V @ q_plane.normal
    return _decide(values, V, p.species, q_plane.species, face, "plane")


def _nullcline_samples(model: ModelSpec, i: int, r, face, resolution: int) -> np.ndarray:
    """Points of ``Gamma_i`` found by bisection along axis-parallel lines of the box grid."""
    n = model.n
    free = [k for k in range(n) if k not in face]
    found = []
    for k in free:
        others = [l for l in free if l != k]
        grids = [np.linspace(0.0, r[l], resolution) for l in others]
        if others:
            base = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, len(others))
        else:
            base = np.zeros((1, 0))
        X = np.zeros((len(base), n))
        X[:, others] = base
        lo, hi = X.copy(), X.copy()
        hi[:, k] = r[k]
        f_lo, f_hi = growth(model, lo)[:, i], growth(model, hi)[:, i]
        flat = np.isclose(f_lo, f_hi, rtol=0, atol=1e-15)
        on_line = flat & (np.abs(f_lo - 1.0) <= 1e-12)
        if np.any(on_line):
            found.extend([lo[on_line], hi[on_line]])
        cross = ~flat & (f_lo >= 1.0) & (f_hi <= 1.0)
        a, b = np.zeros(cross.sum()), np.full(cross.sum(), r[k])
        P = X[cross].copy()
        for _ in range(80):
            mid = 0.5 * (a + b)
            P[:, k] = mid
            above = growth(model, P)[:, i] > 1.0
            a = np.where(above, mid, a)
            b = np.where(above, b, mid)
        P[:, k] = 0.5 * (a + b)
        found.append(P)
    return np.concatenate(found) if found else np.zeros((0, n))


def sampled_relation(model: ModelSpec, i: int, j: int, box=None, face=(), resolution: int = 32) -> RelationVerdict:
    """Relation of ``Gamma_i`` to ``Gamma_j`` from samples of ``f`` only.

    ``Gamma_i ∩ box ∩ face`` is sampled by root-finding ``f_i = 1`` along every
    axis-parallel grid line of the restricted box (``f_i`` is nonincreasing in
    each coordinate), which includes every box edge; ``f_j`` is then compared
    with 1 at the roots.
    """
    if i == j:
        raise ValueError("relation needs two distinct species")
    face = frozenset(face)
    r = np.asarray(model.r if box is None else box, float)
    P = _nullcline_samples(model, i, r, face, resolution)
    values = growth(model, P)[:, j] - 1.0 if len(P) else np.zeros(0)
    return _decide(values, P, i, j, face, "sampled")


class _Relations:
    """Memoised relation queries for one model and box."""

    def __init__(self, model: ModelSpec, box=None, method: str = "auto", resolution: int = 32):
        self.model = model
        self.box = np.asarray(model.r if box is None else box, float)
        self.method = method
        self.resolution = resolution
        self._cache = {}
        self._planes = None
        if method in ("auto", "plane"):
            try:
                self._planes = [nullcline_plane(model, k) for k in range(model.n)]
            except (NotPlanar, ValueError):
                if method == "plane":
                    raise

    def __call__(self, i, j, face=frozenset()) -> RelationVerdict:
        key = (i, j, frozenset(face))
        if key not in self._cache:
            if self._planes is not None and self.method != "sampled":
                v = plane_relation(self._planes[i], self._planes[j], self.box, key[2])
            else:
                v = sampled_relation(self.model, i, j, self.box, key[2], self.resolution)
            self._cache[key] = v
        return self._cache[key]


def _self_limited(model: ModelSpec, i: int) -> bool:
    Q = axial_fixed_point(model, i) * np.eye(model.n)[i]
    return bool(jacobian_growth(model, Q)[i, i] < -DIAG_NEG)


# -- single-species criteria ------------------------------------------------------------


def thm31_vanishing(model: ModelSpec, i: int, box=None, method: str = "auto", _rel=None):
    """Species ``i`` vanishes if ``Gamma_i ∩ [0, r]`` is strictly below every other nullcline.

    Returns ``(holds, evidence)``.  Assumes the existence conditions and
    dissipativity have been verified.
    """
    rel = _rel or _Relations(model, box, method)
    evidence = []
    ok = _self_limited(model, i)
    for j in range(model.n):
        if j == i:
            continue
        v = rel(i, j)
        evidence.append(Evidence("vanishing", v))
        ok = ok and v.relation is Relation.BELOW
    return ok, evidence


def thm31_dominant(model: ModelSpec, i: int, box=None, method: str = "auto", _rel=None):
    """Species ``i`` dominates if ``Gamma_i ∩ [0, r]`` is strictly above every other nullcline.

    The evidence also records the converse relations (``Gamma_j`` against
    ``Gamma_i``), which locate the box vertices closest to ``Gamma_i``.
    """
    rel = _rel or _Relations(model, box, method)
    evidence = []
    ok = _self_limited(model, i)
    for j in range(model.n):
        if j == i:
            continue
        v = rel(i, j)
        evidence.append(Evidence("dominant", v))
        ok = ok and v.relation is Relation.ABOVE
    if ok:
        evidence.extend(Evidence("dominant-converse", rel(j, i)) for j in range(model.n) if j != i)
    return ok, evidence


# -- cascades ---------------------------------------------------------------------------


def _cascade(model: ModelSpec, order, k: int, rel) -> DominanceVerdict:
    n = model.n
    per = {s: "Undetermined" for s in range(n)}
    evidence = []
    passed = 0
    for pos in range(k):
        s = order[pos]
        face = frozenset(order[:pos])
        ok = _self_limited(model, s)
        for t in order[pos + 1:]:
            v = rel(s, t, face)
            evidence.append(Evidence("cascade", v))
            ok = ok and v.relation is Relation.BELOW
        if not ok:
            break
        passed += 1
    for pos in range(passed):
        per[order[pos]] = "Vanishing"
    gas = None
    if passed == k == n - 1 and _self_limited(model, order[-1]):
        last = order[-1]
        per[last] = "Dominant"
        gas = fixed_point_record(model, axial_fixed_point(model, last) * np.eye(n)[last])
    return DominanceVerdict(per, evidence, gas, tuple(order) if passed == k else None)


def thm32_cascade(model: ModelSpec, k: int, box=None, order=None, method: str = "auto") -> DominanceVerdict:
    """Nested-face cascade: species ``order[0..k-1]`` vanish one face at a time.

    If the chain breaks at position ``p`` the first ``p`` species are still
    reported vanishing (the cascade holds with ``k = p``).
    """
    n = model.n
    if not 1 <= k <= n - 1:
        raise ValueError("k must lie in 1..n-1")
    order = tuple(range(n)) if order is None else tuple(order)
    return _cascade(model, order, k, _Relations(model, box, method))


def cor31_search(model: ModelSpec, box=None, exhaustive_limit: int = 8, method: str = "auto"):
    """First permutation (lexicographic) for which the full cascade holds, or None.

    Exhaustive depth-first search with prefix pruning for ``n <= exhaustive_limit``;
    beyond that a single greedy order (ascending number of StrictlyAbove relations).
    """
    n = model.n
    rel = _Relations(model, box, method)
    limited = [_self_limited(model, s) for s in range(n)]

    def prefix_ok(prefix):
        s = prefix[-1]
        if not limited[s]:
            return False
        face = frozenset(prefix[:-1])
        rest = [t for t in range(n) if t not in prefix]
        return all(rel(s, t, face).relation is Relation.BELOW for t in rest)

    if n <= exhaustive_limit:
        def dfs(prefix):
            if len(prefix) == n - 1:
                return prefix + [next(t for t in range(n) if t not in prefix)]
            for s in range(n):
                if s not in prefix and prefix_ok(prefix + [s]):
                    found = dfs(prefix + [s])
                    if found:
                        return found
            return None

        order = dfs([])
    else:
        above = [sum(rel(s, t).relation is Relation.ABOVE for t in range(n) if t != s) for s in range(n)]
        order = sorted(range(n), key=lambda s: (above[s], s))
        if not all(prefix_ok(order[: p + 1]) for p in range(n - 1)):
            order = None
    if order is None:
        return None
    return tuple(order), _cascade(model, tuple(order), n - 1, rel)


# -- closed-form sufficient conditions --------------------------------------------------

_TAG_FAMILIES = {
    "e20": {Family.LESLIE_GOWER},
    "e21": {Family.LESLIE_GOWER},
    "e23": {Family.LESLIE_GOWER},
    "e25": {Family.ATKINSON_ALLEN, Family.ATKINSON_ALLEN_STANDARD, Family.PLANE_CUSTOM},
    "e26": {Family.ATKINSON_ALLEN, Family.ATKINSON_ALLEN_STANDARD, Family.PLANE_CUSTOM},
    "e27": {Family.ATKINSON_ALLEN, Family.ATKINSON_ALLEN_STANDARD, Family.PLANE_CUSTOM},
    "e30": {Family.RICKER},
    "e30a": {Family.RICKER},
    "e30b": {Family.RICKER},
    "e31": {Family.RICKER},
    "e32": {Family.RICKER},
    "e33": {Family.RICKER},
}

VANISHING_TAGS = ("e20", "e25", "e31")
DOMINANT_TAGS = ("e21", "e26", "e32")
CASCADE_TAGS = ("e23", "e27", "e33")


def closed_form_check(model: ModelSpec, tag: str, i: int | None = None) -> bool:
    """Evaluate one of the finite parameter inequalities for the plane families.

    Vanishing (``e20``, ``e25``, ``e31``) and dominance (``e21``, ``e26``,
    ``e32``) tags need the species ``i``; cascade tags (``e23``, ``e27``,
    ``e33``) refer to the natural order ending with the last species; ``e30``
    is the Ricker existence bound (``e30a``/``e30b`` for its two forms).
    """
    if tag not in _TAG_FAMILIES:
        raise ValueError(f"unknown tag {tag!r}")
    if model.family not in _TAG_FAMILIES[tag]:
        raise ValueError(f"tag {tag} does not apply to {model.family.value} models")
    A = model.A
    n = model.n
    if tag in ("e30", "e30a", "e30b"):
        u = model.u
        first = bool(np.all(u < np.diag(A) / A.sum(axis=1)))
        second = bool(np.all(u < 1.0 / (A / np.diag(A)[None, :]).sum(axis=1)))
        return {"e30": first or second, "e30a": first, "e30b": second}[tag]
    L = plane_levels(model)
    if tag in VANISHING_TAGS + DOMINANT_TAGS:
        if i is None:
            raise ValueError(f"tag {tag} needs a species index")
        others = [j for j in range(n) if j != i]
        if tag in VANISHING_TAGS:
            return all(A[j, k] * L[i] < A[i, k] * L[j] for j in others for k in range(n))
        return all((A[i, k] == 0 and A[j, k] == 0) or A[i, k] * L[j] < A[j, k] * L[i]
                   for j in others for k in range(n))
    for s in range(n - 1):
        later = range(s + 1, n)
        if not all(A[j, s] * L[s] < A[s, s] * L[j] for j in later):
            return False
        if not all(A[s + 1, k] * L[s] < A[s, k] * L[s + 1] for k in later):
            return False
    return True


# -- driver -----------------------------------------------------------------------------


def analyze_dominance(model: ModelSpec, box=None, verify_resolution: int = 8, method: str = "auto",
                      report=None) -> DominanceVerdict:
    """Combine the single-species criteria and the permutation cascade into one verdict."""
    from csx.verify import verify_all

    n = model.n
    undecided = {s: "Undetermined" for s in range(n)}
    report = report or verify_all(model, verify_resolution)
    if not report.simplex_exists:
        return DominanceVerdict(undecided, notes=["existence conditions not established"])
    if not report.dissipative.passed:
        return DominanceVerdict(undecided, notes=["dissipativity outside [0, r] not established"])
    notes = []
    if model.family is Family.PLANE_CUSTOM:
        notes.append("assumed: each G_i strictly decreasing so every nullcline is a hyperplane")
    rel = _Relations(model, box, method)
    for s in range(n):
        ok, ev = thm31_dominant(model, s, _rel=rel)
        if ok:
            per = {t: "Vanishing" for t in range(n)}
            per[s] = "Dominant"
            gas = fixed_point_record(model, axial_fixed_point(model, s) * np.eye(n)[s])
            return DominanceVerdict(per, ev, gas, notes=notes + [f"Q_{s + 1} globally asymptotically stable"])
    per = dict(undecided)
    evidence = []
    for s in range(n):
        ok, ev = thm31_vanishing(model, s, _rel=rel)
        if ok:
            per[s] = "Vanishing"
            evidence.extend(ev)
    found = cor31_search(model, box, method=method)
    if found is None:
        return DominanceVerdict(per, evidence, notes=notes)
    order, cascade = found
    for s, v in cascade.per_species.items():
        if v != "Undetermined":
            per[s] = v
    if cascade.gas_point is not None:
        notes.append(f"Q_{order[-1] + 1} globally asymptotically stable")
    return DominanceVerdict(per, evidence + cascade.evidence, cascade.gas_point, order, notes)
