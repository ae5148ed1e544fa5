"""Finite-difference quotients and the composite operators ``L_h``, ``F_h``, ``P_h``.

Point evaluations work directly from the difference quotients; the solver
uses :func:`assemble_slice`, which collects the same operators into
nonnegative neighbor weights per action pair.  The two routes are kept
separate on purpose so tests can check one against the other.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NonMonotone, OutOfGrid
from .geometry import GridFunction, SpaceTimeGrid
from .lattice import DEFAULT_POSITIVITY_FLOOR, DirectionSet, decompose_diffusion, decompose_drift
from .problem import IsaacsProblem

DRIFT_MODES = ("upwind", "forward-paper")


@dataclass(frozen=True)
class PucciParams:
    """Directionwise Pucci operator ``sum_k λ_high (Δ_k u)^+ - λ_low (Δ_k u)^-``."""

    lambda_low: float
    lambda_high: float

    def __post_init__(self):
        if not 0 < self.lambda_low <= self.lambda_high:
            raise ValueError(
                f"need 0 < lambda_low <= lambda_high, got {self.lambda_low}, {self.lambda_high}"
            )

    @classmethod
    def default(cls, delta: float) -> "PucciParams":
        return cls(delta / 2, 1 / delta)

    def delta_hat(self, directions: DirectionSet) -> float:
        """Ellipticity of every gradient matrix ``sum_k p_k l_k l_k^T``."""
        return min(self.lambda_low, 1.0 / (self.lambda_high * float(directions.sq_norms.sum())))

    def check(self, delta: float, directions: DirectionSet) -> float:
        dh = self.delta_hat(directions)
        if not dh < delta:
            raise ValueError(f"Pucci ellipticity {dh} must be below the problem's delta {delta}")
        return dh

    def combos(self, m: int) -> np.ndarray:
        """All ``2^m`` per-direction coefficient choices, shape ``(2^m, m)``."""
        return np.array(list(itertools.product((self.lambda_low, self.lambda_high), repeat=m)))


@dataclass(frozen=True)
class LatticeCoefficients:
    a: np.ndarray
    bbar: np.ndarray
    c: float
    f: float


# -- point quotients ---------------------------------------------------------

def _read(u: GridFunction, k: int, idx) -> float:
    j = u.grid.lookup(idx)
    if j < 0:
        raise OutOfGrid(f"stencil read at {np.asarray(idx).tolist()} (times h) is off the grid")
    return u.values[k, j]


def _locate(u: GridFunction, t, x):
    k = u.grid.time_index(t)
    j = u.grid.node_index(x)
    return k, j, u.grid.nodes[j]


def delta_t(u: GridFunction, t: float, x) -> float:
    """Forward time quotient ``(u(t + h², x) - u(t, x)) / h²``."""
    k, j, _ = _locate(u, t, x)
    if k + 1 >= len(u.grid.times):
        raise OutOfGrid(f"t + h² leaves the grid at t={t!r}")
    return (u.values[k + 1, j] - u.values[k, j]) / u.grid.h**2


def delta2_l(u: GridFunction, t: float, x, l) -> float:
    """Centered second quotient along ``l``."""
    k, j, idx = _locate(u, t, x)
    l = np.asarray(l, dtype=np.int64)
    up, down = _read(u, k, idx + l), _read(u, k, idx - l)
    return (up - 2 * u.values[k, j] + down) / u.grid.h**2


def delta_l(u: GridFunction, t: float, x, l) -> float:
    """Forward quotient ``(u(t, x + hl) - u(t, x)) / h``."""
    k, j, idx = _locate(u, t, x)
    return (_read(u, k, idx + np.asarray(l, dtype=np.int64)) - u.values[k, j]) / u.grid.h


def delta_l_upwind(u: GridFunction, t: float, x, l, coef: float) -> float:
    """``coef`` times the one-sided quotient along ``l`` picked by the sign of ``coef``."""
    if coef == 0:
        return 0.0
    k, j, idx = _locate(u, t, x)
    l = np.asarray(l, dtype=np.int64)
    if coef > 0:
        return coef * (_read(u, k, idx + l) - u.values[k, j]) / u.grid.h
    return coef * (u.values[k, j] - _read(u, k, idx - l)) / u.grid.h


# -- composite point operators ----------------------------------------------

def lattice_coefficients(
    problem: IsaacsProblem, directions: DirectionSet, alpha, beta, t: float, x,
    floor: float = DEFAULT_POSITIVITY_FLOOR,
) -> LatticeCoefficients:
    pt = np.asarray(x, dtype=float).reshape(1, problem.dim)
    a, b, c, f = problem.coefficients(alpha, beta, t, pt)
    return LatticeCoefficients(
        decompose_diffusion(a[0], directions, floor),
        decompose_drift(b[0], directions),
        float(c[0]),
        float(f[0]),
    )


def apply_L_h(
    u: GridFunction, coeffs: LatticeCoefficients, directions: DirectionSet, t: float, x,
    drift_mode: str = "upwind",
) -> float:
    total = 0.0
    for ak, bk, l in zip(coeffs.a, coeffs.bbar, directions.vectors):
        if ak != 0:
            total += ak * delta2_l(u, t, x, l)
        if bk != 0:
            if drift_mode == "upwind":
                total += delta_l_upwind(u, t, x, l, bk)
            else:
                total += bk * delta_l(u, t, x, l)
    return total - coeffs.c * u.at(t, x)


def _require_interior(grid: SpaceTimeGrid, t, x):
    k, j = grid.time_index(t), grid.node_index(x)
    if not grid.interior[k, j]:
        raise OutOfGrid(f"({t!r}, {np.asarray(x).tolist()}) is not an interior point")


def apply_F_h(
    u: GridFunction,
    problem: IsaacsProblem,
    directions: DirectionSet,
    t: float,
    x,
    drift_mode: str = "upwind",
    coefficients: dict | None = None,
) -> float:
    """``sup_α inf_β [L_h^{αβ} u + f^{αβ}]`` at an interior point.

    ``coefficients`` may map ``(alpha, beta)`` to precomputed
    :class:`LatticeCoefficients`; otherwise they are evaluated at ``(t, x)``.
    Ties go to the first action in declared order.
    """
    _require_interior(u.grid, t, x)
    h = u.grid.h
    best = -np.inf
    for alpha in problem.actions.A:
        worst = np.inf
        for beta in problem.actions.B:
            co = (coefficients or {}).get((alpha, beta)) or lattice_coefficients(
                problem, directions, alpha, beta, t, x
            )
            if drift_mode == "forward-paper":
                w = co.a / h**2 + co.bbar / h
                if np.any(w < 0):
                    raise NonMonotone(
                        f"forward drift weight {w.min()!r} < 0 at t={t!r}, x={np.asarray(x).tolist()}"
                    )
            val = apply_L_h(u, co, directions, t, x, drift_mode) + co.f
            if val < worst:
                worst = val
        if worst > best:
            best = worst
    return float(best)


def pucci(second_differences, params: PucciParams) -> float | np.ndarray:
    """``sum_k λ_high (Δ_k)^+ - λ_low (Δ_k)^-`` over the last axis."""
    D = np.asarray(second_differences, dtype=float)
    return np.sum(params.lambda_high * np.maximum(D, 0) - params.lambda_low * np.maximum(-D, 0), axis=-1)


def apply_P_h(u: GridFunction, params: PucciParams, directions: DirectionSet, t: float, x) -> float:
    _require_interior(u.grid, t, x)
    D = [delta2_l(u, t, x, l) for l in directions.vectors]
    return float(pucci(D, params))


# -- slice assembly for the solver ------------------------------------------

@dataclass
class SliceStencil:
    """Per-action-pair monotone stencil on the interior nodes of one slice.

    ``weights[ia, ib, p, k, s]`` multiplies ``u(x_p + s·h l_k)`` (``s`` = +, -),
    ``diag = sum(weights) + c`` and ``source = f``.  The operator reads
    ``L_h u + f = sum w u_nbr - diag u + source``.
    """

    weights: np.ndarray
    diag: np.ndarray
    source: np.ndarray
    neighbors: np.ndarray
    nodes: np.ndarray


def assemble_slice(
    problem: IsaacsProblem,
    grid: SpaceTimeGrid,
    directions: DirectionSet,
    k: int,
    drift_mode: str = "upwind",
    floor: float = DEFAULT_POSITIVITY_FLOOR,
) -> SliceStencil:
    if drift_mode not in DRIFT_MODES:
        raise ValueError(f"drift_mode must be one of {DRIFT_MODES}, got {drift_mode!r}")
    t = float(grid.times[k])
    nodes = np.flatnonzero(grid.interior_nodes)
    x = grid.coords[nodes]
    nbr = grid.neighbor_table(directions)
    h = grid.h
    A, B = problem.actions.A, problem.actions.B
    n, m = len(nodes), len(directions)
    W = np.empty((len(A), len(B), n, m, 2))
    C = np.empty((len(A), len(B), n))
    S = np.empty((len(A), len(B), n))
    for ia, alpha in enumerate(A):
        for ib, beta in enumerate(B):
            a, b, c, f = problem.coefficients(alpha, beta, t, x)
            ak = decompose_diffusion(a, directions, floor).reshape(n, m)
            bk = decompose_drift(b, directions).reshape(n, m)
            w = np.repeat((ak / h**2)[:, :, None], 2, axis=2)
            if drift_mode == "upwind":
                w[:, :, 0] += np.maximum(bk, 0) / h
                w[:, :, 1] += np.maximum(-bk, 0) / h
            else:
                w[:, :, 0] += bk / h
                if np.any(w < 0):
                    p, kk, _ = np.argwhere(w < 0)[0]
                    raise NonMonotone(
                        f"forward drift weight {w[p, kk, 0]!r} < 0 at t={t!r}, "
                        f"x={x[p].tolist()}, direction {directions.vectors[kk].tolist()}"
                    )
            if np.any(c < 0):
                raise ValueError(f"negative discount c at t={t!r}")
            W[ia, ib] = w
            C[ia, ib] = w.sum(axis=(1, 2)) + c
            S[ia, ib] = f
    return SliceStencil(W, C, S, nbr, nodes)
