"""Backward time marching for the implicit scheme ``δ_t v + F_h[v] = 0``.

Every slice is solved in the normalized fixed-point form

    v(x) = sup_α inf_β (v_next(x) + h² (N^{αβ} v + f^{αβ})) / (1 + h² d^{αβ}),

where ``N`` collects the nonnegative same-slice neighbor weights and ``d`` is
their sum plus ``c``.  Each branch is affine and strictly decreasing in the
center value, so the fixed point is the root of the sup-inf equation, and the
map contracts in sup-norm with factor ``max h² ΣN / (1 + h² d) < 1``.

The truncated problems replace ``F_h`` by ``max(F_h, P_h - K)`` (upper) or
``min(F_h, -P_h[-·] + K)`` (lower).  Both Pucci branches are a sup (resp. inf)
over the ``2^m`` per-direction coefficient choices, each a linear monotone
stencil, so the same normalization applies branch by branch.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .errors import NoConvergence
from .geometry import GridFunction, SpaceTimeGrid
from .lattice import DEFAULT_POSITIVITY_FLOOR, DirectionSet
from .operators import DRIFT_MODES, PucciParams, SliceStencil, assemble_slice
from .problem import IsaacsProblem

logger = logging.getLogger(__name__)

WORKERS_ENV = "ISAACS_FD_MAX_WORKERS"


@dataclass(frozen=True)
class SolverConfig:
    slice_tolerance: float = 1e-10
    max_slice_iterations: int = 10_000
    sweep_mode: str = "simultaneous"
    drift_mode: str = "upwind"
    acceleration: str = "none"
    workers: int = 1
    positivity_floor: float = DEFAULT_POSITIVITY_FLOOR
    max_policy_rounds: int = 50

    def __post_init__(self):
        if not self.slice_tolerance > 0:
            raise ValueError("slice_tolerance must be positive")
        if self.max_slice_iterations < 1:
            raise ValueError("max_slice_iterations must be at least 1")
        if self.sweep_mode not in ("simultaneous", "in-place"):
            raise ValueError(f"unknown sweep_mode {self.sweep_mode!r}")
        if self.drift_mode not in DRIFT_MODES:
            raise ValueError(f"unknown drift_mode {self.drift_mode!r}")
        if self.acceleration not in ("none", "policy-iteration"):
            raise ValueError(f"unknown acceleration {self.acceleration!r}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def effective_workers(self) -> int:
        cap = os.environ.get(WORKERS_ENV)
        if cap:
            return max(1, min(self.workers, int(cap)))
        return self.workers


@dataclass(frozen=True)
class TruncationSpec:
    K: float
    side: str = "upper"
    pucci: PucciParams | None = None

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K}")
        if self.side not in ("upper", "lower"):
            raise ValueError(f"side must be 'upper' or 'lower', got {self.side!r}")


@dataclass
class SolveStats:
    """Per-slice diagnostics, indexed like ``grid.times`` (last slice unused)."""

    iterations: np.ndarray
    contraction: np.ndarray
    iteration_bound: np.ndarray
    final_increment: np.ndarray
    policy_rounds: np.ndarray
    tolerance: float
    h: float

    @property
    def residual_bound(self) -> float:
        return self.tolerance * (1 + self.h**-2)

    def summary(self) -> dict:
        s = slice(0, len(self.iterations) - 1)
        return {
            "slices": int(len(self.iterations) - 1),
            "total_iterations": int(self.iterations[s].sum()),
            "max_iterations": int(self.iterations[s].max()),
            "max_contraction": float(self.contraction[s].max()),
            "total_policy_rounds": int(self.policy_rounds[s].sum()),
        }


class _SliceMap:
    """The normalized slice map restricted to interior nodes."""

    def __init__(self, st: SliceStencil, v_next: np.ndarray, h: float,
                 trunc: TruncationSpec | None, directions: DirectionSet):
        self.st = st
        h2 = h * h
        self.h2 = h2
        self.Wh2 = h2 * st.weights
        self.num0 = v_next[None, None, :] + h2 * st.source
        self.den = 1.0 + h2 * st.diag
        self.v_next = v_next
        q = (self.Wh2.sum(axis=(3, 4)) / self.den).max()
        wmax = self.den.max()
        self.trunc = trunc
        if trunc is not None:
            self.combos = trunc.pucci.combos(len(directions))
            tot = self.combos.sum(axis=1)
            self.den_p = 1.0 + 2.0 * tot
            sign = -1.0 if trunc.side == "upper" else 1.0
            self.num0_p = v_next + sign * h2 * trunc.K
            q = max(q, (2.0 * tot / self.den_p).max())
            wmax = max(wmax, self.den_p.max())
        self.contraction = float(q)
        self.max_den = float(wmax)

    def roots(self, v: np.ndarray, sl=slice(None)):
        nb = v[self.st.neighbors[sl]]
        rootF = (self.num0[:, :, sl] + np.einsum("abnms,nms->abn", self.Wh2[:, :, sl], nb)) / self.den[:, :, sl]
        rootP = None
        if self.trunc is not None:
            s = nb.sum(axis=2)
            rootP = (self.num0_p[sl, None] + s @ self.combos.T) / self.den_p
        return rootF, rootP

    def apply(self, v: np.ndarray, sl=slice(None)) -> np.ndarray:
        rootF, rootP = self.roots(v, sl)
        val = rootF.min(axis=1).max(axis=0)
        if rootP is None:
            return val
        if self.trunc.side == "upper":
            return np.maximum(val, rootP.max(axis=1))
        return np.minimum(val, rootP.min(axis=1))

    def policy(self, v: np.ndarray):
        """Active linear branch per node: (weights·h², denominator, numerator offset)."""
        rootF, rootP = self.roots(v)
        n = rootF.shape[2]
        ib = rootF.argmin(axis=1)
        inner = np.take_along_axis(rootF, ib[:, None, :], axis=1)[:, 0, :]
        ia = inner.argmax(axis=0)
        ib = ib[ia, np.arange(n)]
        p = np.arange(n)
        W = self.Wh2[ia, ib, p]
        den = self.den[ia, ib, p]
        num0 = self.num0[ia, ib, p]
        key = ia * rootF.shape[1] + ib
        if rootP is not None:
            valF = inner[ia, p]
            if self.trunc.side == "upper":
                jc = rootP.argmax(axis=1)
                useP = rootP[p, jc] > valF
            else:
                jc = rootP.argmin(axis=1)
                useP = rootP[p, jc] < valF
            if useP.any():
                cp = self.combos[jc[useP]]
                W = W.copy()
                W[useP] = np.repeat(cp[:, :, None], 2, axis=2)
                den = np.where(useP, self.den_p[jc], den)
                num0 = np.where(useP, self.num0_p, num0)
                key = np.where(useP, -1 - jc, key)
        return W, den, num0, key


def _solve_linear_policy(W, den, num0, v: np.ndarray, st: SliceStencil, n_nodes: int) -> np.ndarray:
    n = len(st.nodes)
    pos = np.full(n_nodes, -1)
    pos[st.nodes] = np.arange(n)
    cols = pos[st.neighbors]
    rows = np.broadcast_to(np.arange(n)[:, None, None], cols.shape)
    inner = cols >= 0
    rhs = num0 + np.where(inner, 0.0, W * v[st.neighbors]).sum(axis=(1, 2))
    M = sparse.csr_matrix(
        (-W[inner], (rows[inner], cols[inner])), shape=(n, n)
    ) + sparse.diags(den)
    return np.atleast_1d(spla.spsolve(M.tocsc(), rhs))


def _iterate_slice(smap: _SliceMap, v: np.ndarray, config: SolverConfig, t: float,
                   pool: ThreadPoolExecutor | None):
    """Run the slice solve in place on the full node vector ``v``.

    Returns (iterations, iteration bound, final increment, policy rounds).
    """
    nodes = smap.st.nodes
    n = len(nodes)
    tol = config.slice_tolerance / smap.max_den
    q = smap.contraction

    rounds = 0
    if config.acceleration == "policy-iteration":
        last = None
        while rounds < config.max_policy_rounds:
            W, den, num0, key = smap.policy(v)
            if last is not None and np.array_equal(key, last):
                break
            v[nodes] = _solve_linear_policy(W, den, num0, v, smap.st, len(v))
            last = key
            rounds += 1

    def jacobi(vv):
        if pool is None or n < 2:
            return smap.apply(vv)
        chunks = np.array_split(np.arange(n), config.effective_workers())
        parts = pool.map(lambda c: smap.apply(vv, slice(c[0], c[-1] + 1)), [c for c in chunks if len(c)])
        return np.concatenate(list(parts))

    first = None
    inc = math.inf
    it = 0
    while it < config.max_slice_iterations:
        it += 1
        if config.sweep_mode == "simultaneous":
            new = jacobi(v)
            inc = float(np.max(np.abs(new - v[nodes]))) if n else 0.0
            v[nodes] = new
        else:
            old = v[nodes].copy()
            for p in range(n):
                v[nodes[p]] = smap.apply(v, slice(p, p + 1))[0]
            sweep = float(np.max(np.abs(v[nodes] - old))) if n else 0.0
            inc = sweep
            if sweep <= tol:
                inc = float(np.max(np.abs(smap.apply(v) - v[nodes])))
        if first is None:
            first = inc
        if inc <= tol:
            break
    else:
        raise NoConvergence(t, inc, it)

    if first is not None and first > tol and 0 < q < 1 and rounds == 0:
        bound = 1 + math.ceil(math.log(tol / first) / math.log(q))
    else:
        bound = it
    return it, bound, inc, rounds


def _march(problem: IsaacsProblem, grid: SpaceTimeGrid, directions: DirectionSet,
           config: SolverConfig, trunc: TruncationSpec | None) -> GridFunction:
    if directions.dim != grid.dim or problem.dim != grid.dim:
        raise ValueError("problem, grid and direction set dimensions differ")
    if directions.r_lambda > grid.r_lambda + 1e-12:
        raise ValueError(
            f"grid built for direction radius {grid.r_lambda}, directions need {directions.r_lambda}"
        )
    nt = len(grid.times)
    values = np.empty(grid.shape)
    for k, t in enumerate(grid.times):
        values[k] = problem.boundary(float(t), grid.coords)

    stats = SolveStats(
        iterations=np.zeros(nt, dtype=int),
        contraction=np.zeros(nt),
        iteration_bound=np.zeros(nt, dtype=int),
        final_increment=np.zeros(nt),
        policy_rounds=np.zeros(nt, dtype=int),
        tolerance=config.slice_tolerance,
        h=grid.h,
    )
    workers = config.effective_workers()
    pool = ThreadPoolExecutor(workers) if workers > 1 and config.sweep_mode == "simultaneous" else None
    try:
        for k in range(nt - 2, -1, -1):
            t = float(grid.times[k])
            st = assemble_slice(problem, grid, directions, k, config.drift_mode, config.positivity_floor)
            smap = _SliceMap(st, values[k + 1, st.nodes], grid.h, trunc, directions)
            v = values[k]
            v[st.nodes] = values[k + 1, st.nodes]
            it, bound, inc, rounds = _iterate_slice(smap, v, config, t, pool)
            stats.iterations[k] = it
            stats.contraction[k] = smap.contraction
            stats.iteration_bound[k] = bound
            stats.final_increment[k] = inc
            stats.policy_rounds[k] = rounds
            logger.debug("slice t=%.6g: contraction %.6g, %d iterations", t, smap.contraction, it)
    finally:
        if pool is not None:
            pool.shutdown()
    return GridFunction(grid, values, stats)


def solve_isaacs(problem: IsaacsProblem, grid: SpaceTimeGrid, directions: DirectionSet,
                 config: SolverConfig | None = None) -> GridFunction:
    """Discrete solution with ``v = g`` on the discrete parabolic boundary."""
    return _march(problem, grid, directions, config or SolverConfig(), None)


def _resolve(spec: TruncationSpec, problem: IsaacsProblem, directions: DirectionSet) -> TruncationSpec:
    pucci = spec.pucci or PucciParams.default(problem.delta)
    pucci.check(problem.delta, directions)
    return TruncationSpec(spec.K, spec.side, pucci)


def solve_truncated(problem: IsaacsProblem, grid: SpaceTimeGrid, directions: DirectionSet,
                    spec: TruncationSpec, config: SolverConfig | None = None) -> GridFunction:
    """Discrete counterpart of ``∂_t u + max(F[u], P[u] - K) = 0`` (or the lower ``min`` form)."""
    return _march(problem, grid, directions, config or SolverConfig(), _resolve(spec, problem, directions))


def slice_residual(
    v: GridFunction,
    problem: IsaacsProblem,
    directions: DirectionSet,
    t: float,
    truncation: TruncationSpec | None = None,
    drift_mode: str = "upwind",
) -> float:
    """Sup over interior nodes of the normalized defect of the implicit equation at ``t``.

    For each branch the defect is ``-v (1 + h² d) + v_next + h² (N v + f)``;
    branches are combined by the same sup-inf (and truncation max / min) as
    the scheme and the result divided by ``h²``.
    """
    grid = v.grid
    k = grid.time_index(t)
    if k + 1 >= len(grid.times):
        raise ValueError(f"t={t!r} is the terminal slice; it has no interior points")
    st = assemble_slice(problem, grid, directions, k, drift_mode)
    h2 = grid.h**2
    vk = v.values[k]
    vc = vk[st.nodes]
    vn = v.values[k + 1, st.nodes]
    nb = vk[st.neighbors]
    G = -vc * (1 + h2 * st.diag) + vn + h2 * (np.einsum("abnms,nms->abn", st.weights, nb) + st.source)
    val = G.min(axis=1).max(axis=0)
    if truncation is not None:
        trunc = _resolve(truncation, problem, directions)
        combos = trunc.pucci.combos(len(directions))
        s = nb.sum(axis=2)
        sign = -1.0 if trunc.side == "upper" else 1.0
        Gp = -vc[:, None] * (1 + 2 * combos.sum(axis=1)) + vn[:, None] + sign * h2 * trunc.K + s @ combos.T
        val = np.maximum(val, Gp.max(axis=1)) if trunc.side == "upper" else np.minimum(val, Gp.min(axis=1))
    return float(np.max(np.abs(val)) / h2) if len(val) else 0.0
