"""Checks that a model admits a unique modified carrying simplex.

The three existence hypotheses are the axial fixed points (``q << r``), the
sign pattern of ``Df`` on ``[0, r]`` and the spectral bound
``min(rho(M(x)), rho(Mtilde(x))) < 1`` on ``[0, q] \\ {0}``.  Dissipativity
outside the box and the sign pattern of ``DT(x)^{-1}`` are reported alongside
but do not enter the overall verdict.

Built-in families are decided from their closed-form derivatives
(``VerifiedAnalytic``); anything else is decided on a sample grid, which can
refute a condition but never prove it, hence ``Verified`` rather than
``VerifiedAnalytic`` (or ``Inconclusive`` in strict mode).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from csx.errors import BudgetExceeded, NoAxialFixedPoint
from csx.model import (
    Family,
    ModelSpec,
    _response,
    axial_fixed_point,
    growth,
    growth_and_jacobian,
    jacobian_map,
    matrix_m,
)

STRICT_NEG = 1e-12
SPECTRAL_MARGIN = 1e-9
INVERSE_OFFDIAG_SLACK = -1e-9
INVERSE_DIAG_MIN = 1e-12
COND_MAX = 1e12
GRID_BUDGET = 10**7
RESOLUTION_FLOOR = 8


class Status(str, Enum):
    VERIFIED = "Verified"
    VERIFIED_ANALYTIC = "VerifiedAnalytic"
    FAILED = "Failed"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class ConditionVerdict:
    status: Status
    witness: np.ndarray | None = None
    detail: str = ""

    def __post_init__(self):
        if self.status is Status.FAILED and self.witness is None:
            raise ValueError("a Failed verdict needs a witness point")

    @property
    def passed(self) -> bool:
        return self.status in (Status.VERIFIED, Status.VERIFIED_ANALYTIC)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "witness": None if self.witness is None else [float(v) for v in self.witness],
            "detail": self.detail,
        }


@dataclass(frozen=True)
class ConditionReport:
    axial: ConditionVerdict
    signs: ConditionVerdict
    spectral: ConditionVerdict
    dissipative: ConditionVerdict
    inverse_signs: ConditionVerdict
    classical_jacobian_negative: bool
    resolution: int
    witnesses: tuple = field(default=(), repr=False)

    @property
    def overall(self) -> str:
        ok = self.axial.passed and self.signs.passed and self.spectral.passed
        return "SimplexExists" if ok else "NotEstablished"

    @property
    def simplex_exists(self) -> bool:
        return self.overall == "SimplexExists"

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "resolution": self.resolution,
            "axial": self.axial.to_dict(),
            "signs": self.signs.to_dict(),
            "spectral": self.spectral.to_dict(),
            "dissipative": self.dissipative.to_dict(),
            "inverse_signs": self.inverse_signs.to_dict(),
            "classical_jacobian_negative": self.classical_jacobian_negative,
        }


@dataclass(frozen=True)
class SampleGrid:
    points: np.ndarray
    resolution: int
    domain: str  # "BoxR" or "BoxQ"


def build_grid(model: ModelSpec, domain: str = "BoxR", resolution: int = 10,
               extra=None) -> SampleGrid:
    """Tensor grid over ``[0, r]`` or ``[0, q]`` plus corners, dense axes and ``q``.

    ``extra`` points (e.g. witnesses from an earlier run) are appended when
    they lie inside the box, so refining a grid cannot lose a known failure.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    n = model.n
    if resolution**n > GRID_BUDGET:
        raise BudgetExceeded(f"{resolution}^{n} grid points exceed the budget of {GRID_BUDGET}")
    try:
        q = model.q
    except NoAxialFixedPoint:
        if domain == "BoxQ":
            raise
        q = None
    if domain == "BoxR":
        corner = np.asarray(model.r, float)
    elif domain == "BoxQ":
        corner = q
    else:
        raise ValueError(f"unknown domain {domain!r}")

    axes = [np.linspace(0.0, corner[i], resolution) for i in range(n)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    parts = [mesh]
    dense = np.linspace(0.0, 1.0, 4 * resolution)
    for i in range(n):
        seg = np.zeros((dense.size, n))
        seg[:, i] = dense * corner[i]
        parts.append(seg)
    if q is not None and np.all(q <= corner):
        parts.append(q[None, :])
    if extra is not None:
        ex = np.atleast_2d(np.asarray(extra, float))
        if ex.size:
            parts.append(ex[np.all((ex >= 0) & (ex <= corner), axis=1)])
    pts = np.unique(np.concatenate(parts), axis=0)
    if domain == "BoxQ":
        pts = pts[np.any(pts > 0, axis=1)]
    return SampleGrid(points=pts, resolution=resolution, domain=domain)


def _sampled_pass(strict: bool, detail: str) -> ConditionVerdict:
    if strict:
        return ConditionVerdict(Status.INCONCLUSIVE, detail=detail + " (strict mode: sampling proves nothing)")
    return ConditionVerdict(Status.VERIFIED, detail=detail)


def check_axial(model: ModelSpec) -> ConditionVerdict:
    n = model.n
    q = np.empty(n)
    for i in range(n):
        try:
            q[i] = axial_fixed_point(model, i)
        except NoAxialFixedPoint as exc:
            return ConditionVerdict(Status.FAILED, witness=model.r[i] * np.eye(n)[i], detail=str(exc))
        if not q[i] < model.r[i]:
            return ConditionVerdict(
                Status.FAILED, witness=q[i] * np.eye(n)[i],
                detail=f"q_{i + 1} = {q[i]!r} is not strictly below r_{i + 1} = {model.r[i]!r}")
    kind = Status.VERIFIED_ANALYTIC if model.is_builtin else Status.VERIFIED
    return ConditionVerdict(kind, detail=f"q = {q.tolist()}")


def check_signs(model: ModelSpec, grid: SampleGrid, strict: bool = False) -> ConditionVerdict:
    if model.is_builtin:
        return ConditionVerdict(
            Status.VERIFIED_ANALYTIC,
            detail="df_i/dx_j = a_ij G_i'((Ax)_i) with G_i' < 0, a_ij >= 0, a_ii > 0")
    Df = growth_and_jacobian(model, grid.points)[1]
    n = model.n
    off = ~np.eye(n, dtype=bool)
    pos = np.argwhere(np.any(Df[:, off] > STRICT_NEG, axis=1))
    if pos.size:
        k = int(pos[0, 0])
        return ConditionVerdict(Status.FAILED, witness=grid.points[k],
                                detail="positive off-diagonal derivative of f")
    diag = np.diagonal(Df, axis1=1, axis2=2)
    rising = np.argwhere(np.any(diag > STRICT_NEG, axis=1))
    if rising.size:
        k = int(rising[0, 0])
        if np.any(diag[k] > 0):
            return ConditionVerdict(Status.FAILED, witness=grid.points[k],
                                    detail="f_i increasing in x_i")
        return ConditionVerdict(
            Status.INCONCLUSIVE, witness=grid.points[k],
            detail="df_i/dx_i vanishes at a sample point; strict monotonicity not decidable by sampling")
    return _sampled_pass(strict, f"sign pattern holds at {len(grid.points)} sample points")


def _classical_flag(model: ModelSpec, grid: SampleGrid) -> bool:
    Df = growth_and_jacobian(model, grid.points)[1]
    return bool(np.all(Df < -STRICT_NEG))


def _row_sum_proof(model: ModelSpec) -> str | None:
    """Name of a family-level identity bounding a row-sum norm by 1 on [0, q], if any."""
    fam = model.family
    if fam is Family.LESLIE_GOWER:
        return "f_i + sum_j x_j df_i/dx_j = c_i/(1+(Ax)_i)^2 > 0 on C"
    if fam in (Family.ATKINSON_ALLEN, Family.ATKINSON_ALLEN_STANDARD):
        return "f_i + sum_j x_j df_i/dx_j = c_i + (1+u_i)(1-c_i)/(1+(Ax)_i)^2 > 0 on C"
    if fam is Family.RICKER:
        A, u = model.A, model.u
        if np.all(u < np.diag(A) / A.sum(axis=1)):
            return "u_i < a_ii / sum_j a_ij bounds the row sums of M on [0, q]"
        if np.all(u < 1.0 / (A / np.diag(A)[None, :]).sum(axis=1)):
            return "u_i < 1 / sum_j (a_ij/a_jj) bounds the row sums of Mtilde on [0, q]"
    return None


def spectral_radii(model: ModelSpec, points) -> tuple[np.ndarray, np.ndarray]:
    """Spectral radii of ``M`` and ``Mtilde`` at each point (dense eigen-solve)."""
    pts = np.atleast_2d(points)
    rho_m = np.abs(np.linalg.eigvals(matrix_m(model, pts, "M"))).max(axis=-1)
    rho_t = np.abs(np.linalg.eigvals(matrix_m(model, pts, "Mtilde"))).max(axis=-1)
    return rho_m, rho_t


def check_spectral(model: ModelSpec, grid: SampleGrid | None, strict: bool = False,
                   floor: int = RESOLUTION_FLOOR) -> ConditionVerdict:
    proof = _row_sum_proof(model)
    if proof is not None:
        return ConditionVerdict(Status.VERIFIED_ANALYTIC, detail=proof)
    if grid is None:
        return ConditionVerdict(Status.INCONCLUSIVE, detail="[0, q] undefined: axial fixed points missing")
    rho_m, rho_t = spectral_radii(model, grid.points)
    best = np.minimum(rho_m, rho_t)
    bad = np.flatnonzero(best >= 1.0)
    if bad.size:
        k = int(bad[np.argmax(best[bad])])
        return ConditionVerdict(
            Status.FAILED, witness=grid.points[k],
            detail=f"rho(M) = {rho_m[k]:.6g}, rho(Mtilde) = {rho_t[k]:.6g} at the witness")
    marginal = np.flatnonzero(best >= 1.0 - SPECTRAL_MARGIN)
    if marginal.size:
        k = int(marginal[0])
        return ConditionVerdict(Status.INCONCLUSIVE, witness=grid.points[k],
                                detail="spectral radius within the margin of 1")
    detail = f"max min(rho(M), rho(Mtilde)) = {best.max():.6g} over {best.size} points"
    if grid.resolution < floor:
        return ConditionVerdict(Status.INCONCLUSIVE,
                                detail=detail + f"; resolution {grid.resolution} below floor {floor}")
    return _sampled_pass(strict, detail)


def check_dissipativity(model: ModelSpec, resolution: int = 6) -> ConditionVerdict:
    n = model.n
    r = np.asarray(model.r, float)
    if model.is_builtin:
        # f_i = G_i((Ax)_i) with G_i decreasing and (Ax)_i >= a_ii r_i once x_i >= r_i
        s = np.diag(model.A) * r
        sup = np.array([_response(model, np.full(n, s[i]))[0][i] for i in range(n)])
        bad = np.flatnonzero(sup >= 1.0)
        if bad.size:
            i = int(bad[0])
            return ConditionVerdict(Status.FAILED, witness=r[i] * np.eye(n)[i],
                                    detail=f"f_{i + 1}(r_{i + 1} e_{i + 1}) = {sup[i]!r} >= 1")
        return ConditionVerdict(Status.VERIFIED_ANALYTIC,
                                detail=f"sup over x_i >= r_i of f_i = {sup.max():.6g} < 1")
    big = 10.0 * r
    axes = [np.linspace(0.0, big[k], resolution) for k in range(n)]
    for i in range(n):
        ax = list(axes)
        ax[i] = np.linspace(r[i], big[i], resolution)
        pts = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, n)
        fi = growth(model, pts)[:, i]
        bad = np.flatnonzero((fi >= 1.0) | (fi <= 0.0))
        if bad.size:
            k = int(bad[0])
            return ConditionVerdict(Status.FAILED, witness=pts[k],
                                    detail=f"f_{i + 1} = {fi[k]!r} outside (0, 1) with x_{i + 1} >= r_{i + 1}")
    return ConditionVerdict(
        Status.INCONCLUSIVE,
        detail=f"0 < f_i < 1 on samples of x_i in [r_i, 10 r_i]; the unbounded region is not covered")


def check_inverse_signs(model: ModelSpec, grid: SampleGrid, strict: bool = False) -> ConditionVerdict:
    DT = jacobian_map(model, grid.points)
    cond = np.linalg.cond(DT)
    bad = np.flatnonzero(~(cond < COND_MAX))
    if bad.size:
        k = int(bad[0])
        return ConditionVerdict(Status.FAILED, witness=grid.points[k],
                                detail=f"DT singular (condition number {cond[k]:.3g})")
    inv = np.linalg.inv(DT)
    n = model.n
    diag = np.diagonal(inv, axis1=1, axis2=2)
    off = inv[:, ~np.eye(n, dtype=bool)]
    viol = np.flatnonzero(np.any(diag <= INVERSE_DIAG_MIN, axis=1) | np.any(off < INVERSE_OFFDIAG_SLACK, axis=1))
    if viol.size:
        k = int(viol[0])
        return ConditionVerdict(Status.FAILED, witness=grid.points[k],
                                detail="(DT)^-1 has a negative entry")
    return _sampled_pass(strict, f"(DT)^-1 >= 0 with positive diagonal at {len(grid.points)} points")


def verify_all(model: ModelSpec, resolution: int = 10, strict: bool = False,
               floor: int = RESOLUTION_FLOOR, extra=None) -> ConditionReport:
    """Run every check; ``extra`` points are added to both sample grids."""
    grid_r = build_grid(model, "BoxR", resolution, extra=extra)
    axial = check_axial(model)
    grid_q = build_grid(model, "BoxQ", resolution, extra=extra) if axial.passed else None
    signs = check_signs(model, grid_r, strict)
    spectral = check_spectral(model, grid_q, strict, floor)
    witnesses = tuple(v.witness for v in (axial, signs, spectral) if v.witness is not None)
    return ConditionReport(
        axial=axial,
        signs=signs,
        spectral=spectral,
        dissipative=check_dissipativity(model),
        inverse_signs=check_inverse_signs(model, grid_r, strict),
        classical_jacobian_negative=_classical_flag(model, grid_r),
        resolution=resolution,
        witnesses=witnesses,
    )
