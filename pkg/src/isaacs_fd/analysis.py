"""Error norms, rate fitting, Hölder diagnostics, barriers and the K-gap study."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BarrierSearchFailed, DegenerateData, EmptyRegion, MonotonicityViolation
from .geometry import GridFunction, SpaceTimeGrid, SpatialDomain, build_grid
from .lattice import DirectionSet
from .operators import PucciParams
from .problem import IsaacsProblem, ManufacturedCase
from .solver import SolverConfig, TruncationSpec, solve_isaacs, solve_truncated


@dataclass
class RateReport:
    """Power-law fit ``error ≈ C · parameter^exponent``.

    ``exact`` marks studies whose errors were all at tolerance level, in which
    case nothing was fitted and ``fitted_exponent`` is NaN.
    """

    samples: list[tuple[float, float]]
    fitted_exponent: float
    pairwise_orders: list[float]
    residual: float
    exact: bool = False
    meta: dict = field(default_factory=dict)


def fit_rate(samples: Sequence[tuple[float, float]]) -> RateReport:
    """Least-squares slope of ``log error`` against ``log parameter``."""
    pts = [(float(p), float(e)) for p, e in samples]
    if len(pts) < 2:
        raise ValueError("need at least two samples to fit a rate")
    p = np.array([s[0] for s in pts])
    e = np.array([s[1] for s in pts])
    if np.any(p <= 0):
        raise ValueError("parameters must be positive")
    if np.any(np.diff(p) >= 0):
        raise ValueError("parameters must be strictly decreasing")
    if np.any(e <= 0):
        raise DegenerateData("errors must be positive to fit a rate; treat as exact to tolerance")
    lp, le = np.log(p), np.log(e)
    slope, icpt = np.polyfit(lp, le, 1)
    resid = float(np.sqrt(np.mean((le - (slope * lp + icpt)) ** 2)))
    orders = [float(np.log(e[i] / e[i + 1]) / np.log(p[i] / p[i + 1])) for i in range(len(p) - 1)]
    return RateReport(pts, float(slope), orders, resid)


def sup_error(u: GridFunction, reference) -> float:
    """``max |u - reference|`` over all of ``Q_(h)``; ``reference`` may be a callable ``(t, x)``."""
    ref = reference.values if isinstance(reference, GridFunction) else u.grid.sample(reference).values
    return float(np.max(np.abs(u.values - ref)))


def _holder_region(grid: SpaceTimeGrid, eps: float):
    keep_t = np.flatnonzero(grid.times < grid.T - eps * eps)
    cand = np.flatnonzero(grid.rho > eps)
    eye = np.eye(grid.dim, dtype=np.int64)
    nodes, plus, minus = [], [], []
    for j in cand:
        up = [grid.lookup(grid.nodes[j] + e) for e in eye]
        dn = [grid.lookup(grid.nodes[j] - e) for e in eye]
        if min(up + dn) >= 0:
            nodes.append(j)
            plus.append(up)
            minus.append(dn)
    if len(nodes) < 2 or len(keep_t) < 2:
        raise EmptyRegion(f"Q_eps at eps={eps!r} holds {len(nodes)} nodes and {len(keep_t)} times")
    return keep_t, np.array(nodes), np.array(plus), np.array(minus)


def _check_grid(u: GridFunction, grid: SpaceTimeGrid | None) -> SpaceTimeGrid:
    if grid is not None and grid is not u.grid:
        raise ValueError("grid function lives on a different grid")
    return u.grid


def holder_seminorm(u: GridFunction, grid: SpaceTimeGrid | None, eps: float, chi: float) -> float:
    """Grid estimate of the parabolic ``C^{1+χ}`` seminorm over ``Q_ε``.

    Sum of the maxima of ``|u(t,x) - u(s,x)| / |t-s|^{(1+χ)/2}``,
    ``|Du(t,x) - Du(t,y)| / |x-y|^χ`` and ``|Du(t,x) - Du(s,x)| / |t-s|^{χ/2}``
    over all grid pairs in ``Q_ε``, with ``Du`` the centered first difference.
    """
    if not 0 < chi < 1:
        raise ValueError("chi must lie in (0, 1)")
    grid = _check_grid(u, grid)
    ts, nodes, plus, minus = _holder_region(grid, eps)
    U = u.values[ts]
    Du = (U[:, plus] - U[:, minus]) / (2 * grid.h)  # (nt, n, d)
    t = grid.times[ts]
    dt = np.abs(t[:, None] - t[None, :])
    np.fill_diagonal(dt, np.inf)

    Un = U[:, nodes]
    time_q = max(
        float(np.max(np.abs(Un[:, None, j] - Un[None, :, j]) / dt ** ((1 + chi) / 2)))
        for j in range(len(nodes))
    )
    grad_t = max(
        float(np.max(np.linalg.norm(Du[:, None, j] - Du[None, :, j], axis=-1) / dt ** (chi / 2)))
        for j in range(len(nodes))
    )
    x = grid.coords[nodes]
    dx = np.linalg.norm(x[:, None] - x[None, :], axis=-1)
    np.fill_diagonal(dx, np.inf)
    wx = dx**-chi
    grad_x = max(
        float(np.max(np.linalg.norm(Du[k][:, None] - Du[k][None, :], axis=-1) * wx))
        for k in range(len(ts))
    )
    return time_q + grad_x + grad_t


def barrier_ratio(v: GridFunction, g=None, grid: SpaceTimeGrid | None = None) -> float:
    """Empirical ``max |v - g| / ρ`` over interior points (``g`` defaults to 0)."""
    grid = _check_grid(v, grid)
    if g is None:
        ref = np.zeros(grid.shape)
    elif isinstance(g, GridFunction):
        ref = g.values
    else:
        ref = grid.sample(g).values
    mask = grid.interior
    rho = np.broadcast_to(grid.rho, grid.shape)
    if np.any(rho[mask] <= 0):
        raise ValueError("interior point with zero boundary distance")
    return float(np.max(np.abs(v.values - ref)[mask] / rho[mask]))


@dataclass(frozen=True)
class BarrierParams:
    """``ψ(x) = cosh μR - cosh μ|x|``."""

    mu: float
    R: float

    def __call__(self, x) -> np.ndarray:
        r = np.linalg.norm(np.atleast_2d(x), axis=1)
        return np.cosh(self.mu * self.R) - np.cosh(self.mu * r)

    psi = __call__

    def grad(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x, axis=1)
        mu = self.mu
        # sinh(μr)/r -> μ as r -> 0
        s = np.where(r > 0, np.sinh(mu * r) / np.where(r > 0, r, 1), mu)
        return -mu * s[:, None] * x

    def hess(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, d = x.shape
        r = np.linalg.norm(x, axis=1)
        mu = self.mu
        safe = np.where(r > 0, r, 1.0)
        s = np.where(r > 0, np.sinh(mu * r) / safe, mu)
        outer = np.where((r > 0)[:, None, None], x[:, :, None] * x[:, None, :] / safe[:, None, None] ** 2, 0.0)
        eye = np.eye(d)[None]
        # radial part μ² cosh(μr) x x^T/r², tangential μ sinh(μr)/r (I - x x^T/r²)
        return -(mu**2 * np.cosh(mu * r)[:, None, None] * outer + mu * s[:, None, None] * (eye - outer))


def _random_ellipticity_sample(n: int, d: int, delta: float, rng) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.normal(size=(n, d, d)))
    lam = rng.uniform(delta, 1 / delta, size=(n, d))
    lam[: n // 4] = rng.choice([delta, 1 / delta], size=(n // 4, d))
    return np.einsum("nij,nj,nkj->nik", Q, lam, Q)


def build_barrier(domain: SpatialDomain, delta: float, K0: float, samples: int = 1000,
                  seed: int = 0) -> BarrierParams:
    """Find ``μ`` (doubling from 1) so that ``ψ >= 1`` and ``a:D²ψ + b·Dψ <= -1`` on samples.

    ``R = sup_G |x| + 1``; ``a`` ranges over random members of ``S_δ`` and
    ``|b| <= K0``.
    """
    rng = np.random.default_rng(seed)
    R = domain.radius_from_origin() + 1.0
    x = domain.sample(samples, rng)
    a = _random_ellipticity_sample(samples, domain.dim, delta, rng)
    b = rng.normal(size=(samples, domain.dim))
    b *= (K0 * rng.uniform(0, 1, size=samples) / np.maximum(np.linalg.norm(b, axis=1), 1e-300))[:, None]
    mu = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        while mu <= 2.0**60:
            bp = BarrierParams(mu, R)
            Lpsi = np.einsum("nij,nij->n", a, bp.hess(x)) + np.einsum("ni,ni->n", b, bp.grad(x))
            if np.all(bp(x) >= 1) and np.all(Lpsi <= -1):
                return bp
            mu *= 2
    raise BarrierSearchFailed(f"no barrier found with mu <= 2**60 for delta={delta}, K0={K0}")


def k_gap_study(
    problem: IsaacsProblem,
    grid: SpaceTimeGrid,
    directions: DirectionSet,
    K_list: Sequence[float],
    config: SolverConfig | None = None,
    pucci: PucciParams | None = None,
) -> RateReport:
    """Gap ``sup |u_K - u_{-K}|`` of the discrete truncated solutions over ``K_list``.

    The fit uses ``1/K`` as the decreasing parameter, so the exponent
    estimates ``ξ`` in ``gap ≈ N K^{-ξ}``.  Gaps at or below ``10 · tol`` are
    treated as exact and left out of the fit.
    """
    config = config or SolverConfig()
    Ks = [float(K) for K in K_list]
    if not Ks or any(K <= 0 for K in Ks) or any(b <= a for a, b in zip(Ks, Ks[1:])):
        raise ValueError("K_list must be positive and strictly increasing")
    slack = 10 * config.slice_tolerance
    gaps, sols = [], []
    for K in Ks:
        up = solve_truncated(problem, grid, directions, TruncationSpec(K, "upper", pucci), config)
        lo = solve_truncated(problem, grid, directions, TruncationSpec(K, "lower", pucci), config)
        if np.any(lo.values > up.values + slack):
            raise MonotonicityViolation(f"lower solution exceeds upper solution at K={K!r}")
        gaps.append(float(np.max(np.abs(up.values - lo.values))))
        sols.append((up, lo))
    for i in range(1, len(gaps)):
        if gaps[i] > gaps[i - 1] + slack:
            raise MonotonicityViolation(f"gap grew from {gaps[i - 1]!r} to {gaps[i]!r} at K={Ks[i]!r}")
    meta = {"K": Ks, "gaps": gaps, "solutions": sols}
    fit = [(1.0 / K, gp) for K, gp in zip(Ks, gaps) if gp > slack]
    if len(fit) < 2:
        return RateReport([(1.0 / K, gp) for K, gp in zip(Ks, gaps)], math.nan, [], 0.0, True, meta)
    rep = fit_rate(fit)
    rep.meta = meta
    return rep


def rate_study(case: ManufacturedCase, hs: Sequence[float], directions: DirectionSet,
               config: SolverConfig | None = None) -> RateReport:
    """Sup-norm error against the exact solution for each ``h`` (strictly decreasing)."""
    samples, sols = [], []
    for h in hs:
        grid = build_grid(case.domain, case.T, h, directions.r_lambda)
        v = solve_isaacs(case.problem, grid, directions, config)
        samples.append((float(h), sup_error(v, case.exact)))
        sols.append(v)
    rep = fit_rate(samples)
    rep.meta = {"solutions": sols}
    return rep


def regularity_study(v: GridFunction, eps_list: Sequence[float], chi: float) -> RateReport:
    """Seminorm over ``Q_ε`` for each ``ε``; the fitted exponent is the log-log slope in ``ε``."""
    eps = sorted((float(e) for e in eps_list), reverse=True)
    vals = [(e, holder_seminorm(v, v.grid, e, chi)) for e in eps]
    try:
        rep = fit_rate(vals)
    except DegenerateData:
        rep = RateReport(vals, math.nan, [], 0.0, True)
    rep.meta = {"epsilon": eps, "seminorm": [s for _, s in vals]}
    return rep
