"""Competitive Kolmogorov maps ``T_i(x) = x_i f_i(x)`` and their derivatives.

Every built-in family has per-capita growth of the form ``f_i(x) = G_i((Ax)_i)``
with a scalar response ``G_i`` that is strictly decreasing, so all of them
share the evaluation code below and differ only in ``G_i`` and ``G_i'``.

All evaluation functions accept a single state of shape ``(n,)`` or a batch
of states of shape ``(..., n)``; Jacobians then have shape ``(..., n, n)``.
Species are indexed from 0.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from csx.errors import DomainError, ModelError, NoAxialFixedPoint

ZERO_THRESHOLD = 1e-14


class Family(str, Enum):
    LESLIE_GOWER = "LeslieGower"
    ATKINSON_ALLEN = "AtkinsonAllenGeneral"
    ATKINSON_ALLEN_STANDARD = "AtkinsonAllenStandard"
    RICKER = "Ricker"
    PLANE_CUSTOM = "PlaneNullclineCustom"


BUILTIN_FAMILIES = (
    Family.LESLIE_GOWER,
    Family.ATKINSON_ALLEN,
    Family.ATKINSON_ALLEN_STANDARD,
    Family.RICKER,
)


def _vector(values, n, name) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size == 1 and n > 1:
        arr = np.full(n, float(arr[0]))
    if arr.shape != (n,):
        raise ModelError(f"{name} must have length {n}, got {arr.size}", field=name)
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries", field=name)
    arr.setflags(write=False)
    return arr


def _check_positive(arr, name, strict=True):
    bad = np.flatnonzero(arr <= 0) if strict else np.flatnonzero(arr < 0)
    if bad.size:
        k = int(bad[0])
        raise ModelError(f"{name}_{k + 1} = {float(arr[k])!r} must be positive", field=f"{name}_{k + 1}")


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A concrete competitive map together with its analysis box ``[0, r]``.

    Use the family constructors (:meth:`leslie_gower`, :meth:`atkinson_allen`,
    :meth:`atkinson_allen_standard`, :meth:`ricker`, :meth:`plane_custom`)
    rather than calling the dataclass directly.

    Structural constraints (``a_ii > 0``, ``a_ij >= 0``, positivity of every
    ``f_i``) are enforced here.  Whether the model has axial fixed points,
    e.g. ``c_i > 1`` for Leslie-Gower, is a verification question and is left
    to :mod:`csx.verify`.
    """

    family: Family
    A: np.ndarray
    c: np.ndarray | None = None
    u: np.ndarray | None = None
    r: np.ndarray | None = None
    G: tuple[Callable, ...] | None = field(default=None, repr=False)
    dG: tuple[Callable, ...] | None = field(default=None, repr=False)
    expressions: tuple[str, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ModelError("A must be a square matrix", field="A")
        n = A.shape[0]
        if n < 2:
            raise ModelError("at least two species are required", field="n")
        if not np.all(np.isfinite(A)):
            raise ModelError("A contains non-finite entries", field="A")
        for i in range(n):
            if A[i, i] <= 0:
                raise ModelError(f"a_{i + 1}{i + 1} = {float(A[i, i])!r} must be positive",
                                 field=f"a_{i + 1}{i + 1}")
        neg = np.argwhere(A < 0)
        if neg.size:
            i, j = (int(v) for v in neg[0])
            raise ModelError(f"a_{i + 1}{j + 1} = {float(A[i, j])!r} must be nonnegative",
                             field=f"a_{i + 1}{j + 1}")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        c = None if self.c is None else _vector(self.c, n, "c")
        u = None if self.u is None else _vector(self.u, n, "u")

        if fam is Family.LESLIE_GOWER:
            if c is None:
                raise ModelError("Leslie-Gower requires c", field="c")
            _check_positive(c, "c")
            u = None
        elif fam in (Family.ATKINSON_ALLEN, Family.ATKINSON_ALLEN_STANDARD):
            if c is None:
                raise ModelError("Atkinson-Allen requires c", field="c")
            if fam is Family.ATKINSON_ALLEN_STANDARD:
                if not np.all(c == c[0]):
                    raise ModelError("standard Atkinson-Allen uses one common c", field="c")
                u = _vector(np.ones(n), n, "u")
            elif u is None:
                raise ModelError("Atkinson-Allen requires u", field="u")
            _check_positive(c, "c")
            bad = np.flatnonzero(c >= 1)
            if bad.size:
                k = int(bad[0])
                raise ModelError(f"c_{k + 1} = {float(c[k])!r} must lie in (0, 1)", field=f"c_{k + 1}")
            _check_positive(u, "u")
        elif fam is Family.RICKER:
            if u is None:
                raise ModelError("Ricker requires u", field="u")
            _check_positive(u, "u")
            c = None
        else:
            if u is None:
                raise ModelError("plane-nullcline models require u", field="u")
            _check_positive(u, "u")
            if self.G is None or self.dG is None or len(self.G) != n or len(self.dG) != n:
                raise ModelError("plane-nullcline models need n response functions G and dG",
                                 field="G")
            object.__setattr__(self, "G", tuple(self.G))
            object.__setattr__(self, "dG", tuple(self.dG))
            for i in range(n):
                gi = float(np.asarray(self.G[i](np.asarray(u[i]))))
                if not np.isfinite(gi) or abs(gi - 1.0) > 1e-9:
                    raise ModelError(f"G_{i + 1}(u_{i + 1}) = {float(gi)!r}, expected 1", field=f"G_{i + 1}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "u", u)

        if self.r is None:
            r = np.empty(n)
            for i in range(n):
                try:
                    r[i] = 1.1 * _axial_root(self, i, None)
                except NoAxialFixedPoint:
                    # verification reports the missing fixed point; any positive corner will do
                    r[i] = 1.1 / A[i, i]
            r.setflags(write=False)
        else:
            r = _vector(self.r, n, "r")
            _check_positive(r, "r")
        object.__setattr__(self, "r", r)

    # -- constructors ---------------------------------------------------------------

    @classmethod
    def leslie_gower(cls, A, c, r=None) -> ModelSpec:
        return cls(Family.LESLIE_GOWER, A, c=c, r=r)

    @classmethod
    def atkinson_allen(cls, A, c, u, r=None) -> ModelSpec:
        return cls(Family.ATKINSON_ALLEN, A, c=c, u=u, r=r)

    @classmethod
    def atkinson_allen_standard(cls, A, c, r=None) -> ModelSpec:
        return cls(Family.ATKINSON_ALLEN_STANDARD, A, c=c, r=r)

    @classmethod
    def ricker(cls, A, u, r=None) -> ModelSpec:
        return cls(Family.RICKER, A, u=u, r=r)

    @classmethod
    def plane_custom(cls, A, G: Sequence[Callable], dG: Sequence[Callable], u, r=None,
                     expressions=None) -> ModelSpec:
        """``f_i(x) = G_i((Ax)_i)`` with user-supplied ``G_i`` and derivative ``dG_i``.

        The callables must accept numpy arrays.  ``G_i(u_i) = 1`` is required.
        """
        return cls(Family.PLANE_CUSTOM, A, u=u, r=r, G=tuple(G), dG=tuple(dG),
                   expressions=None if expressions is None else tuple(expressions))

    # -- derived data -----------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def is_builtin(self) -> bool:
        return self.family in BUILTIN_FAMILIES

    @property
    def q(self) -> np.ndarray:
        """Axial fixed point coordinates; raises NoAxialFixedPoint if one is missing."""
        return np.array([axial_fixed_point(self, i) for i in range(self.n)])

    def with_box(self, r) -> ModelSpec:
        return ModelSpec(self.family, self.A, c=self.c, u=self.u, r=r, G=self.G,
                         dG=self.dG, expressions=self.expressions)

    def restrict(self, species) -> ModelSpec:
        """The sub-community model living on the face spanned by ``species``."""
        idx = np.array(sorted(species), dtype=int)
        pick = lambda v: None if v is None else v[idx]  # noqa: E731
        G = None if self.G is None else tuple(self.G[i] for i in idx)
        dG = None if self.dG is None else tuple(self.dG[i] for i in idx)
        exprs = None
        if self.expressions is not None:
            half = len(self.expressions) // 2
            exprs = tuple(self.expressions[i] for i in idx) + tuple(
                self.expressions[half + i] for i in idx)
        return ModelSpec(self.family, self.A[np.ix_(idx, idx)], c=pick(self.c), u=pick(self.u),
                         r=self.r[idx], G=G, dG=dG, expressions=exprs)

    @property
    def model_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.family.value.encode())
        for arr in (self.A, self.c, self.u, self.r):
            h.update(b"-" if arr is None else np.ascontiguousarray(arr).tobytes())
        if self.family is Family.PLANE_CUSTOM:
            if self.expressions is not None:
                h.update("|".join(self.expressions).encode())
            else:
                for g in self.G + self.dG:
                    h.update(getattr(g, "__qualname__", repr(g)).encode())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        out = {"family": self.family.value, "n": self.n, "A": self.A.tolist()}
        if self.c is not None:
            out["c"] = self.c.tolist()
        if self.u is not None:
            out["u"] = self.u.tolist()
        out["r"] = self.r.tolist()
        if self.expressions is not None:
            half = len(self.expressions) // 2
            out["G"] = list(self.expressions[:half])
            out["dG"] = list(self.expressions[half:])
        return out


# -- scalar responses -------------------------------------------------------------------


def _response(model: ModelSpec, s: np.ndarray):
    """Return ``(G(s), G'(s))`` evaluated componentwise, ``s = Ax``."""
    fam = model.family
    if fam is Family.LESLIE_GOWER:
        den = 1.0 + s
        G = model.c / den
        return G, -model.c / (den * den)
    if fam in (Family.ATKINSON_ALLEN, Family.ATKINSON_ALLEN_STANDARD):
        den = 1.0 + s
        k = (1.0 + model.u) * (1.0 - model.c)
        return model.c + k / den, -k / (den * den)
    if fam is Family.RICKER:
        G = np.exp(model.u * (1.0 - s))
        return G, -model.u * G
    G = np.empty_like(s)
    dG = np.empty_like(s)
    for i in range(model.n):
        G[..., i] = model.G[i](s[..., i])
        dG[..., i] = model.dG[i](s[..., i])
    return G, dG


def _as_state(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("state contains non-finite entries")
    if np.any(x < 0):
        raise DomainError("state has negative entries; the map lives on the nonnegative cone")
    return x


def growth(model: ModelSpec, x) -> np.ndarray:
    """Per-capita growth rates ``f(x)``."""
    x = _as_state(x)
    return _response(model, x @ model.A.T)[0]


def apply_map(model: ModelSpec, x) -> np.ndarray:
    """One step of the map, ``T(x) = x * f(x)`` componentwise."""
    x = _as_state(x)
    return x * _response(model, x @ model.A.T)[0]


def growth_and_jacobian(model: ModelSpec, x):
    x = _as_state(x)
    G, dG = _response(model, x @ model.A.T)
    return G, dG[..., :, None] * model.A


def jacobian_growth(model: ModelSpec, x) -> np.ndarray:
    """Analytic ``Df(x)``; entry ``[i, j]`` is ``d f_i / d x_j``."""
    return growth_and_jacobian(model, x)[1]


def matrix_m(model: ModelSpec, x, kind: str = "M") -> np.ndarray:
    """``M(x)`` (row scaling by ``x_i``) or ``Mtilde(x)`` (column scaling by ``x_j``)."""
    x = _as_state(x)
    f, Df = growth_and_jacobian(model, x)
    scaled = -Df / f[..., :, None]
    if kind == "M":
        return x[..., :, None] * scaled
    if kind == "Mtilde":
        return x[..., None, :] * scaled
    raise ValueError(f"unknown kind {kind!r}; expected 'M' or 'Mtilde'")


def jacobian_map(model: ModelSpec, x) -> np.ndarray:
    """``DT(x) = diag(f(x)) (I - M(x))``."""
    x = _as_state(x)
    f, Df = growth_and_jacobian(model, x)
    M = -(x / f)[..., :, None] * Df
    return f[..., :, None] * (np.eye(model.n) - M)


def _axial_root(model: ModelSpec, i: int, upper: float | None) -> float:
    a = model.A[i, i]
    fam = model.family
    if fam is Family.LESLIE_GOWER:
        if model.c[i] <= 1:
            raise NoAxialFixedPoint(
                f"f_{i + 1}(s e_{i + 1}) < 1 for all s > 0 since c_{i + 1} = {model.c[i]} <= 1")
        q = (model.c[i] - 1.0) / a
    elif fam in (Family.ATKINSON_ALLEN, Family.ATKINSON_ALLEN_STANDARD):
        q = model.u[i] / a
    elif fam is Family.RICKER:
        q = 1.0 / a
    else:
        # u_i / a_ii is the root by construction; bisection only absorbs callback round-off
        q = model.u[i] / a
        if abs(float(np.asarray(model.G[i](np.asarray(model.u[i])))) - 1.0) > 1e-12:
            q = _bisect_axial(model, i, upper if upper is not None else 1.1 * q)
    if upper is not None and not 0 < q <= upper:
        raise NoAxialFixedPoint(f"q_{i + 1} = {q!r} lies outside (0, r_{i + 1}] = (0, {upper}]")
    return float(q)


def _bisect_axial(model: ModelSpec, i: int, hi: float) -> float:
    a = model.A[i, i]
    g = lambda s: float(np.asarray(model.G[i](np.asarray(a * s))))  # noqa: E731
    lo = 0.0
    if g(lo) <= 1.0 or g(hi) > 1.0:
        raise NoAxialFixedPoint(f"f_{i + 1}(s e_{i + 1}) - 1 has no sign change on (0, {hi}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if g(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def axial_fixed_point(model: ModelSpec, i: int) -> float:
    """The ``q_i > 0`` with ``f_i(q_i e_i) = 1`` inside ``(0, r_i]``."""
    return _axial_root(model, i, float(model.r[i]))


def support(x) -> frozenset:
    """Indices of the components of ``x`` above the zero threshold."""
    return frozenset(int(k) for k in np.flatnonzero(np.asarray(x) > ZERO_THRESHOLD))
