"""Isaacs problem instances and manufactured verification cases.

Coefficients are plain callables ``fn(alpha, beta, t, x)`` where ``x`` is an
``(n, d)`` array of points and the return value broadcasts to

* ``a``: ``(n, d, d)`` symmetric matrices,
* ``b``: ``(n, d)``,
* ``c``, ``f``: ``(n,)``,

and ``g(t, x)`` returns ``(n,)``.  Callbacks must be pure: the solver may call
them from several threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import UnknownKind, ValidationFailed
from .geometry import Box, SpatialDomain

Coefficient = Callable[[Any, Any, float, np.ndarray], Any]


@dataclass(frozen=True)
class ActionSets:
    A: tuple
    B: tuple

    def __post_init__(self):
        object.__setattr__(self, "A", tuple(self.A))
        object.__setattr__(self, "B", tuple(self.B))
        if not self.A or not self.B:
            raise ValueError("both action sets must be nonempty")

    def pairs(self):
        return [(a, b) for a in self.A for b in self.B]


@dataclass(frozen=True)
class HolderData:
    """Assumed continuity moduli; informational only."""

    gamma: float | None = None
    gamma_t: float | None = None
    tau: float | None = None


@dataclass(frozen=True, eq=False)
class IsaacsProblem:
    """``∂_t u + sup_α inf_β [a_ij D_ij u + b_i D_i u - c u + f] = 0``, ``u = g`` on ``∂'Q``."""

    dim: int
    actions: ActionSets
    a: Coefficient
    b: Coefficient
    c: Coefficient
    f: Coefficient
    g: Callable[[float, np.ndarray], Any]
    delta: float = 0.5
    K0: float = 1.0
    holder: HolderData | None = None
    name: str = "custom"

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"ellipticity constant must lie in (0, 1), got {self.delta}")
        if self.K0 < 0:
            raise ValueError("K0 must be nonnegative")

    def coefficients(self, alpha, beta, t: float, x: np.ndarray):
        """Evaluate ``(a, b, c, f)`` at points ``x`` with full broadcast shapes."""
        n, d = x.shape
        a = np.broadcast_to(np.asarray(self.a(alpha, beta, t, x), dtype=float), (n, d, d))
        b = np.broadcast_to(np.asarray(self.b(alpha, beta, t, x), dtype=float), (n, d))
        c = np.broadcast_to(np.asarray(self.c(alpha, beta, t, x), dtype=float), (n,))
        f = np.broadcast_to(np.asarray(self.f(alpha, beta, t, x), dtype=float), (n,))
        return a, b, c, f

    def boundary(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.g(t, x), dtype=float), (len(x),))

    def with_data(self, f: Coefficient | None = None, g=None, name: str | None = None) -> "IsaacsProblem":
        """Copy with a different source term and/or boundary data."""
        return IsaacsProblem(
            self.dim, self.actions, self.a, self.b, self.c,
            self.f if f is None else f,
            self.g if g is None else g,
            self.delta, self.K0, self.holder, self.name if name is None else name,
        )


def _const(value, shape_tail: tuple[int, ...]):
    arr = np.asarray(value, dtype=float)

    def fn(alpha, beta, t, x):
        return np.broadcast_to(arr, (len(x),) + shape_tail)

    return fn


def _per_pair(table, shape_tail):
    if isinstance(table, dict):
        arrs = {k: np.asarray(v, dtype=float) for k, v in table.items()}

        def fn(alpha, beta, t, x):
            return np.broadcast_to(arrs[(alpha, beta)], (len(x),) + shape_tail)

        return fn
    return _const(table, shape_tail)


def constant_coefficient_problem(
    a,
    b=None,
    c=0.0,
    f=0.0,
    g=None,
    *,
    actions: ActionSets | None = None,
    delta: float = 0.5,
    K0: float | None = None,
    name: str = "constant_coefficient",
) -> IsaacsProblem:
    """Problem with coefficients constant in ``(t, x)``.

    ``a, b, c, f`` are either single values or dicts keyed by ``(alpha, beta)``.
    ``g`` is a callable ``g(t, x)`` or a constant.
    """
    actions = actions or ActionSets((0,), (0,))
    first = a[actions.pairs()[0]] if isinstance(a, dict) else a
    d = np.atleast_2d(first).shape[0]
    b = np.zeros(d) if b is None else b
    if g is None:
        g = 0.0
    g_fn = g if callable(g) else (lambda t, x, _g=float(g): np.full(len(x), _g))
    if K0 is None:
        vals = [0.0]
        for tab in (b, c, f):
            items = tab.values() if isinstance(tab, dict) else [tab]
            vals += [float(np.max(np.abs(np.linalg.norm(np.atleast_1d(v))))) for v in items]
        K0 = max(vals)
    return IsaacsProblem(
        dim=d,
        actions=actions,
        a=_per_pair(a, (d, d)),
        b=_per_pair(b, (d,)),
        c=_per_pair(c, ()),
        f=_per_pair(f, ()),
        g=g_fn,
        delta=delta,
        K0=K0,
        name=name,
    )


def gamma_exponent(chi: float) -> float:
    """Hölder exponent ``(4 - 3χ) / (8 - 4χ)`` required of the diffusion in x."""
    return (4 - 3 * chi) / (8 - 4 * chi)


@dataclass
class CheckResult:
    passed: bool
    worst_value: float
    worst_sample: tuple | None


@dataclass
class ValidationReport:
    checks: dict[str, CheckResult]
    gamma: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())


def validate_problem(
    problem: IsaacsProblem,
    sample_count: int = 1000,
    seed: int = 0,
    *,
    domain: SpatialDomain | None = None,
    T: float = 1.0,
    chi: float | None = None,
    raise_on_failure: bool = True,
    atol: float = 1e-12,
) -> ValidationReport:
    """Spot-check the structural assumptions on random ``(α, β, t, x)`` samples.

    Checks ``a ∈ S_δ`` through its eigenvalues, symmetry, ``|b|, |f| <= K0`` and
    ``0 <= c <= K0``.  Raises :class:`ValidationFailed` on the first failing
    check unless ``raise_on_failure`` is false.
    """
    rng = np.random.default_rng(seed)
    domain = domain or Box((0.0,) * problem.dim, (1.0,) * problem.dim)
    pairs = problem.actions.pairs()
    delta, K0 = problem.delta, problem.K0

    # name -> (violation amount, value, sample); violation > atol fails
    worst: dict[str, tuple[float, float, tuple | None]] = {
        k: (-np.inf, np.nan, None)
        for k in ("symmetric", "ellipticity_lower", "ellipticity_upper", "drift_bound",
                  "discount_sign", "discount_bound", "source_bound")
    }

    def record(name, violation, value, sample):
        j = int(np.argmax(violation))
        if violation[j] > worst[name][0]:
            worst[name] = (float(violation[j]), float(value[j]), sample(j))

    picks = rng.integers(len(pairs), size=sample_count)
    ts = rng.uniform(0.0, T, size=sample_count)
    xs = domain.sample(sample_count, rng)
    for p in np.unique(picks):
        alpha, beta = pairs[p]
        sel = np.flatnonzero(picks == p)
        for i in sel:
            t, x = float(ts[i]), xs[i : i + 1]
            a, b, c, f = problem.coefficients(alpha, beta, t, x)

            def sample(_j, _i=i):
                return (alpha, beta, float(ts[_i]), tuple(xs[_i]))

            asym = np.abs(a - np.swapaxes(a, 1, 2)).max(axis=(1, 2))
            record("symmetric", asym, asym, sample)
            eig = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, 1, 2)))
            record("ellipticity_lower", delta - eig[:, 0], eig[:, 0], sample)
            record("ellipticity_upper", eig[:, -1] - 1 / delta, eig[:, -1], sample)
            nb = np.linalg.norm(b, axis=1)
            record("drift_bound", nb - K0, nb, sample)
            record("discount_sign", -c, c, sample)
            record("discount_bound", c - K0, c, sample)
            record("source_bound", np.abs(f) - K0, f, sample)

    checks = {k: CheckResult(v[0] <= atol, v[1], v[2]) for k, v in worst.items()}
    report = ValidationReport(checks, gamma_exponent(chi) if chi is not None else None)
    if raise_on_failure:
        for name, res in checks.items():
            if not res.passed:
                raise ValidationFailed(name, res.worst_sample, res.worst_value, report)
    return report


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    """A problem together with its closed-form solution on the closed cylinder."""

    problem: IsaacsProblem
    exact: Callable[[float, np.ndarray], np.ndarray]
    domain: SpatialDomain
    T: float
    kind: str
    params: dict = field(default_factory=dict)


def _heat(d: int, T: float, delta: float) -> ManufacturedCase:
    rate = d * math.pi**2

    def exact(t, x):
        x = np.asarray(x, dtype=float).reshape(-1, d)
        return np.exp(-rate * (T - t)) * np.prod(np.sin(math.pi * x), axis=1)

    eye = np.eye(d)
    problem = IsaacsProblem(
        dim=d,
        actions=ActionSets((0,), (0,)),
        a=lambda al, be, t, x: np.broadcast_to(eye, (len(x), d, d)),
        b=lambda al, be, t, x: np.zeros((len(x), d)),
        c=lambda al, be, t, x: np.zeros(len(x)),
        f=lambda al, be, t, x: np.zeros(len(x)),
        g=exact,
        delta=delta,
        K0=1.0,
        name=f"heat_{d}d",
    )
    return ManufacturedCase(problem, exact, Box((0.0,) * d, (1.0,) * d), T, f"heat_{d}d")


class _SineProfile:
    """``u(t, x) = e^{t-T} prod_i sin(pi x_i) + s t x_1`` with closed-form derivatives."""

    def __init__(self, d: int, T: float, slope: float):
        self.d, self.T, self.slope = d, T, slope

    def value(self, t, x):
        return np.exp(t - self.T) * np.prod(np.sin(np.pi * x), axis=1) + self.slope * t * x[:, 0]

    def dt(self, t, x):
        return np.exp(t - self.T) * np.prod(np.sin(np.pi * x), axis=1) + self.slope * x[:, 0]

    def grad(self, t, x):
        s, c = np.sin(np.pi * x), np.cos(np.pi * x)
        e = np.exp(t - self.T)
        out = np.empty_like(x)
        for i in range(self.d):
            others = np.prod(np.delete(s, i, axis=1), axis=1)
            out[:, i] = e * np.pi * c[:, i] * others
        out[:, 0] += self.slope * t
        return out

    def hess(self, t, x):
        s, c = np.sin(np.pi * x), np.cos(np.pi * x)
        e = np.exp(t - self.T)
        n, d = x.shape
        out = np.empty((n, d, d))
        for i in range(d):
            for j in range(d):
                if i == j:
                    out[:, i, i] = -e * np.pi**2 * np.prod(s, axis=1)
                else:
                    rest = np.prod(np.delete(s, [i, j], axis=1), axis=1)
                    out[:, i, j] = e * np.pi**2 * c[:, i] * c[:, j] * rest
        return out


def _game_kernel(d: int):
    """Action-dependent coefficients; every ``a`` is strictly diagonally dominant."""

    def a(alpha, beta, t, x):
        n = len(x)
        diag = 1.0 + 0.25 * alpha + 0.125 * beta * np.cos(np.pi * x[:, 0])
        out = np.zeros((n, d, d))
        for i in range(d):
            out[:, i, i] = diag
            for j in range(d):
                if j != i:
                    out[:, i, j] = 0.1 * beta / (d - 1)
        return out

    def b(alpha, beta, t, x):
        out = np.zeros((len(x), d))
        out[:, 0] = 0.5 * alpha - beta
        if d > 1:
            out[:, 1:] = 0.5 * beta
        return out

    def c(alpha, beta, t, x):
        return np.full(len(x), 0.25 * (1 + alpha * alpha) + 0.1 * (1 + beta))

    return a, b, c


def _isaacs_game(d: int, T: float, params: dict) -> ManufacturedCase:
    m0 = float(params.get("m", 1.0))
    if m0 < 0:
        raise ValueError("game weight m must be nonnegative")
    m_kind = params.get("m_kind", "constant")
    if m_kind == "constant":
        def m(t, x):
            return np.full(len(x), m0)
    elif m_kind == "bump":
        def m(t, x):
            return m0 * (1 + 0.5 * np.sin(np.pi * x[:, 0]))
    else:
        raise UnknownKind(f"unknown game weight profile {m_kind!r}")

    profile = params.get("profile", "sine")
    if profile != "sine":
        raise UnknownKind(f"unknown solution profile {profile!r}")
    u = _SineProfile(d, T, float(params.get("slope", 0.25)))
    a_fn, b_fn, c_fn = _game_kernel(d)

    def f(alpha, beta, t, x):
        a, b, c = a_fn(alpha, beta, t, x), b_fn(alpha, beta, t, x), c_fn(alpha, beta, t, x)
        Lu = (
            np.einsum("nij,nij->n", a, u.hess(t, x))
            + np.einsum("ni,ni->n", b, u.grad(t, x))
            - c * u.value(t, x)
        )
        return -u.dt(t, x) - Lu + alpha * beta * m(t, x)

    # |u_t|, |Du|, |D²u| entries are bounded by 1 + s, pi + s T, pi² on the unit box
    s = float(params.get("slope", 0.25))
    K0 = (1 + s) + d * d * 1.4 * math.pi**2 + 1.6 * d * (math.pi + s * T) + 0.7 * (1 + s * T) + 1.5 * m0

    problem = IsaacsProblem(
        dim=d,
        actions=ActionSets((-1, 0, 1), (-1, 1)),
        a=a_fn,
        b=b_fn,
        c=c_fn,
        f=f,
        g=lambda t, x: u.value(t, np.asarray(x, dtype=float).reshape(-1, d)),
        delta=float(params.get("delta", 0.5)),
        K0=K0,
        name="isaacs_game",
    )
    return ManufacturedCase(
        problem,
        lambda t, x: u.value(t, np.asarray(x, dtype=float).reshape(-1, d)),
        Box((0.0,) * d, (1.0,) * d),
        T,
        "isaacs_game",
        dict(params),
    )


def make_manufactured(kind: str, params: dict | None = None) -> ManufacturedCase:
    """Build a problem with a known exact solution.

    ``heat_1d`` / ``heat_2d``: ``u_t + Δu = 0`` on the unit box with
    ``u = e^{-dπ²(T-t)} prod sin(πx_i)``.

    ``isaacs_game``: actions ``A = {-1, 0, 1}``, ``B = {-1, 1}`` with
    action-dependent coefficients and a source chosen so the smooth profile
    solves the equation while the ``αβm`` term leaves a genuine 3×2 matrix
    game at every point.  Params: ``T``, ``d`` (1-3), ``m``, ``m_kind``,
    ``slope``, ``delta``.
    """
    params = dict(params or {})
    T = float(params.get("T", 1.0))
    if not T > 0:
        raise ValueError("T must be positive")
    if kind == "heat_1d":
        case = _heat(1, T, float(params.get("delta", 0.5)))
    elif kind == "heat_2d":
        case = _heat(2, T, float(params.get("delta", 0.5)))
    elif kind == "isaacs_game":
        d = int(params.get("d", 1))
        if d not in (1, 2, 3):
            raise ValueError(f"isaacs_game supports d in 1..3, got {d}")
        case = _isaacs_game(d, T, params)
    else:
        raise UnknownKind(f"unknown manufactured case {kind!r}")
    return ManufacturedCase(case.problem, case.exact, case.domain, T, kind, params)


def point_game_value(matrix: Sequence[Sequence[float]]) -> tuple[float, int, int]:
    """``max_i min_j M_ij`` with first-index tie breaking; returns value and argmax/argmin."""
    M = np.asarray(matrix, dtype=float)
    row_min = M.min(axis=1)
    i = int(np.argmax(row_min))
    return float(row_min[i]), i, int(np.argmin(M[i]))
