"""Spatial domains, the space-time lattice and grid functions.

The lattice is ``Q_(h) = ((0, T) ∩ h²Z) × (G ∩ hZ^d)``.  A point ``(t, x)`` is
interior when ``x + hB ⊂ G`` (``B`` the closed ball of radius ``r_Λ``) and
``t + h² < T``; everything else is the discrete parabolic boundary where the
solution is prescribed.

Nodes are stored as integer multi-indices.  Membership and the interior test
are decided in exact rational arithmetic on ``index * h`` (``h`` taken as the
exact binary rational of the float), so grids are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import EmptyGrid, InvalidStep, OutOfGrid


class SpatialDomain:
    """Bounded open set ``G ⊂ R^d``."""

    dim: int

    def contains(self, x) -> np.ndarray:
        raise NotImplementedError

    def distance(self, x) -> np.ndarray:
        """``dist(x, G^c)`` for an ``(n, d)`` array of points (0 outside G)."""
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def radius_from_origin(self) -> float:
        """``sup_G |x|``."""
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples from G by rejection from the bounding box."""
        lo, hi = self.bounding_box()
        out = np.empty((0, self.dim))
        while len(out) < n:
            cand = rng.uniform(lo, hi, size=(2 * n, self.dim))
            out = np.vstack([out, cand[self.contains(cand)]])
        return out[:n]

    # exact tests on lattice points ``index * h``; overridden by built-ins
    def _contains_exact(self, idx: tuple[int, ...], h: Fraction) -> bool:
        x = np.asarray(idx, dtype=float)[None, :] * float(h)
        return bool(self.contains(x)[0])

    def _interior_exact(self, idx: tuple[int, ...], h: Fraction, r2: Fraction) -> bool:
        x = np.asarray(idx, dtype=float)[None, :] * float(h)
        return bool(self.distance(x)[0] > float(h) * math.sqrt(r2))

    def to_dict(self) -> dict:
        raise NotImplementedError


def _as_points(x, dim: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0 or (pts.ndim == 1 and dim > 1):
        pts = pts.reshape(1, -1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    return pts


@dataclass(frozen=True)
class Box(SpatialDomain):
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ValueError("box bounds must have the same positive length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"box bounds must be strictly ordered, got {lo} and {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, x):
        pts = _as_points(x, self.dim)
        lo, hi = np.array(self.lower), np.array(self.upper)
        return np.all((pts > lo) & (pts < hi), axis=1)

    def distance(self, x):
        pts = _as_points(x, self.dim)
        lo, hi = np.array(self.lower), np.array(self.upper)
        d = np.minimum(pts - lo, hi - pts).min(axis=1)
        return np.maximum(d, 0.0)

    def bounding_box(self):
        return np.array(self.lower), np.array(self.upper)

    def _contains_exact(self, idx, h):
        return all(
            Fraction(lo) < i * h < Fraction(hi) for i, lo, hi in zip(idx, self.lower, self.upper)
        )

    def _interior_exact(self, idx, h, r2):
        lim = h * h * r2
        for i, lo, hi in zip(idx, self.lower, self.upper):
            for gap in (i * h - Fraction(lo), Fraction(hi) - i * h):
                if gap <= 0 or gap * gap <= lim:
                    return False
        return True

    def to_dict(self):
        return {"kind": "box", "lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True)
class Ball(SpatialDomain):
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        if not c:
            raise ValueError("ball center must be nonempty")
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, x):
        pts = _as_points(x, self.dim)
        return np.sum((pts - np.array(self.center)) ** 2, axis=1) < self.radius**2

    def distance(self, x):
        pts = _as_points(x, self.dim)
        r = np.linalg.norm(pts - np.array(self.center), axis=1)
        return np.maximum(self.radius - r, 0.0)

    def bounding_box(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def radius_from_origin(self):
        return float(np.linalg.norm(self.center)) + self.radius

    def _sq_dist(self, idx, h) -> Fraction:
        return sum((i * h - Fraction(c)) ** 2 for i, c in zip(idx, self.center))

    def _contains_exact(self, idx, h):
        return self._sq_dist(idx, h) < Fraction(self.radius) ** 2

    def _interior_exact(self, idx, h, r2):
        # sqrt(s) + sqrt(q) < R, squared twice
        s = self._sq_dist(idx, h)
        q = h * h * r2
        rest = Fraction(self.radius) ** 2 - s - q
        return rest > 0 and 4 * s * q < rest * rest

    def to_dict(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class CallbackDomain(SpatialDomain):
    """User domain given by a membership test and a boundary-distance function.

    Both callbacks take an ``(n, d)`` array.  Membership is decided in floating
    point, so grids over such domains are only as reproducible as the callbacks.
    """

    dim: int
    contains_fn: Callable[[np.ndarray], np.ndarray]
    distance_fn: Callable[[np.ndarray], np.ndarray]
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def contains(self, x):
        return np.asarray(self.contains_fn(_as_points(x, self.dim)), dtype=bool)

    def distance(self, x):
        pts = _as_points(x, self.dim)
        d = np.asarray(self.distance_fn(pts), dtype=float)
        return np.where(self.contains(pts), d, 0.0)

    def bounding_box(self):
        return np.array(self.lower, dtype=float), np.array(self.upper, dtype=float)

    def to_dict(self):
        return {"kind": "callback", "dim": self.dim}


def domain_from_dict(spec: dict) -> SpatialDomain:
    kind = spec.get("kind")
    if kind == "box":
        return Box(tuple(spec["lower"]), tuple(spec["upper"]))
    if kind == "ball":
        return Ball(tuple(spec["center"]), spec["radius"])
    raise ValueError(f"unknown domain kind {kind!r}")


def boundary_distance(domain: SpatialDomain, x) -> float | np.ndarray:
    """Euclidean distance from ``x`` to the complement of ``domain``.

    A single point returns a float, an ``(n, d)`` array returns an array.
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 0 or (pts.ndim == 1 and len(pts) == domain.dim)
    d = domain.distance(pts.reshape(1, -1) if single else pts)
    return float(d[0]) if single else d


@dataclass(frozen=True, eq=False)
class SpaceTimeGrid:
    """Discrete cylinder ``Q_(h)`` with its interior / boundary partition.

    ``values`` arrays over the grid are laid out as ``(len(times), len(nodes))``.
    """

    h: float
    domain: SpatialDomain
    T: float
    times: np.ndarray
    nodes: np.ndarray
    interior_nodes: np.ndarray
    r_lambda: float
    _index: dict = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.times), len(self.nodes)

    @property
    def coords(self) -> np.ndarray:
        if "coords" not in self._cache:
            self._cache["coords"] = self.nodes * self.h
        return self._cache["coords"]

    @property
    def rho(self) -> np.ndarray:
        if "rho" not in self._cache:
            self._cache["rho"] = self.domain.distance(self.coords)
        return self._cache["rho"]

    @property
    def interior_slices(self) -> np.ndarray:
        """Time indices carrying interior points (all but the last slice)."""
        return np.arange(len(self.times) - 1)

    @property
    def interior(self) -> np.ndarray:
        """Boolean ``(n_times, n_nodes)`` mask of ``Q^o_(h)``."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[:-1] = self.interior_nodes
        return mask

    @property
    def boundary(self) -> np.ndarray:
        return ~self.interior

    def time_index(self, t: float) -> int:
        k = int(round(t / self.h**2)) - 1
        if not 0 <= k < len(self.times) or not math.isclose(self.times[k], t, rel_tol=1e-9, abs_tol=1e-14):
            raise OutOfGrid(f"t={t!r} is not a grid time")
        return k

    def node_index(self, x) -> int:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = tuple(int(v) for v in np.rint(x / self.h))
        if len(idx) != self.dim or not np.allclose(np.array(idx) * self.h, x, rtol=0, atol=1e-9 * self.h):
            raise OutOfGrid(f"x={x.tolist()} is not a lattice point")
        try:
            return self._index[idx]
        except KeyError:
            raise OutOfGrid(f"x={x.tolist()} is not a node of the grid") from None

    def lookup(self, idx) -> int:
        """Node number of the integer multi-index ``idx`` or -1."""
        return self._index.get(tuple(int(i) for i in idx), -1)

    def neighbor_table(self, directions) -> np.ndarray:
        """Node numbers of ``x ± h l_k`` for every interior node.

        Returns an int array of shape ``(n_interior, n_directions, 2)`` where the
        last axis is (+l, -l).
        """
        key = ("nbr", tuple(map(tuple, directions.vectors)))
        if key not in self._cache:
            inner = self.nodes[self.interior_nodes]
            table = np.empty((len(inner), len(directions.vectors), 2), dtype=np.intp)
            for k, l in enumerate(directions.vectors):
                for s, sign in enumerate((1, -1)):
                    for p, idx in enumerate(inner):
                        j = self.lookup(idx + sign * l)
                        if j < 0:
                            raise OutOfGrid(
                                f"stencil read {(idx + sign * l).tolist()} leaves the grid; "
                                f"direction radius {self.r_lambda} is smaller than |{l.tolist()}|"
                            )
                        table[p, k, s] = j
            self._cache[key] = table
        return self._cache[key]

    def sample(self, fn: Callable[[float, np.ndarray], np.ndarray]) -> "GridFunction":
        """Evaluate ``fn(t, x)`` (``x`` an ``(n, d)`` array) on every grid point."""
        vals = np.empty(self.shape)
        for k, t in enumerate(self.times):
            vals[k] = np.broadcast_to(fn(float(t), self.coords), (len(self.nodes),))
        return GridFunction(self, vals)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))


def build_grid(domain: SpatialDomain, T: float, h: float, r_lambda: float = 1.0) -> SpaceTimeGrid:
    """Lattice ``Q_(h)`` of ``(0, T) × domain`` with time step ``h²``.

    ``r_lambda`` is the radius of the smallest origin-centred ball holding the
    stencil directions; it fixes how far from ``∂G`` a node must be to count as
    interior.
    """
    if not h > 0 or not math.isfinite(h):
        raise InvalidStep(f"h must be positive, got {h!r}")
    hf = Fraction(h)
    Tf = Fraction(T)
    if not (Tf > hf * hf and T > h * h):
        raise InvalidStep(f"T must exceed h**2 = {float(hf * hf)!r}, got T={T!r}")
    if not r_lambda > 0:
        raise InvalidStep(f"direction radius must be positive, got {r_lambda!r}")
    r2 = Fraction(r_lambda * r_lambda).limit_denominator(10**6)

    n_times = math.ceil(Tf / (hf * hf)) - 1
    times = np.array([float(k * hf * hf) for k in range(1, n_times + 1)])

    lo, hi = domain.bounding_box()
    ranges = [range(math.floor(a / h) - 1, math.ceil(b / h) + 2) for a, b in zip(lo, hi)]
    nodes, inner = [], []
    for idx in np.ndindex(*[len(r) for r in ranges]):
        mi = tuple(r[i] for r, i in zip(ranges, idx))
        if domain._contains_exact(mi, hf):
            nodes.append(mi)
            inner.append(domain._interior_exact(mi, hf, r2))
    nodes_arr = np.array(nodes, dtype=np.int64).reshape(-1, domain.dim)
    inner_arr = np.array(inner, dtype=bool)
    if n_times < 2 or not inner_arr.any():
        raise EmptyGrid(f"no interior grid points at h={h!r}, T={T!r}")
    index = {n: i for i, n in enumerate(nodes)}
    return SpaceTimeGrid(
        h=float(h),
        domain=domain,
        T=float(T),
        times=times,
        nodes=nodes_arr,
        interior_nodes=inner_arr,
        r_lambda=float(r_lambda),
        _index=index,
    )


@dataclass(eq=False)
class GridFunction:
    """Real values on every point of ``Q_(h)``, shape ``grid.shape``."""

    grid: SpaceTimeGrid
    values: np.ndarray
    stats: object = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite values")

    def at(self, t: float, x) -> float:
        return float(self.values[self.grid.time_index(t), self.grid.node_index(x)])

    def __add__(self, other):
        other = other.values if isinstance(other, GridFunction) else other
        return GridFunction(self.grid, self.values + other)

    def __sub__(self, other):
        other = other.values if isinstance(other, GridFunction) else other
        return GridFunction(self.grid, self.values - other)

    def __mul__(self, scale: float):
        return GridFunction(self.grid, self.values * scale)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)
