"""Stencil directions and the lattice-direction form of the linear operators.

A diffusion matrix ``a`` is written as ``sum_k a_k l_k l_k^T`` with ``a_k >= 0``
and a drift ``b`` as ``sum_k bbar_k l_k``, so that

    a_ij D_ij u + b_i D_i u = sum_k a_k D²_{l_k} u + sum_k bbar_k D_{l_k} u.

The built-in rule handles strictly diagonally dominant matrices over the
standard direction sets (basis vectors plus ``e_i ± e_j``).  Other matrices
need a custom :class:`DirectionSet` with its own ``decompose`` callback.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DecompositionInfeasible, UnsupportedDimension

DEFAULT_POSITIVITY_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """Finite set of integer stencil directions, stored up to sign.

    ``decompose`` / ``decompose_drift`` optionally override the built-in rules;
    they map ``(n, d, d)`` matrices (resp. ``(n, d)`` vectors) to ``(n, m)``
    per-direction coefficients.
    """

    vectors: np.ndarray
    decompose: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    decompose_drift: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        vecs = np.atleast_2d(np.asarray(self.vectors, dtype=np.int64))
        object.__setattr__(self, "vectors", vecs)
        d = vecs.shape[1]
        if np.any(np.all(vecs == 0, axis=1)):
            raise ValueError("zero direction in stencil set")
        for i in range(d):
            e = np.eye(d, dtype=np.int64)[i]
            if not any(np.array_equal(v, e) or np.array_equal(v, -e) for v in vecs):
                raise ValueError(f"direction set must contain the basis vector e_{i + 1}")
        for u, v in itertools.combinations(vecs, 2):
            if np.linalg.matrix_rank(np.vstack([u, v])) < 2 if d > 1 else True:
                raise ValueError(f"directions {u.tolist()} and {v.tolist()} are parallel")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def sq_norms(self) -> np.ndarray:
        return np.sum(self.vectors**2, axis=1)

    @property
    def r_lambda(self) -> float:
        return float(np.sqrt(self.sq_norms.max()))

    def basis_positions(self) -> list[int]:
        """Position of ``e_i`` (or ``-e_i``) in ``vectors`` for each axis."""
        eye = np.eye(self.dim, dtype=np.int64)
        return [
            next(k for k, v in enumerate(self.vectors) if np.array_equal(np.abs(v), eye[i]))
            for i in range(self.dim)
        ]


def standard_directions(d: int) -> DirectionSet:
    """``e_i`` followed by ``e_i + e_j, e_i - e_j`` for ``i < j``; ``d <= 3``."""
    if d not in (1, 2, 3):
        raise UnsupportedDimension(f"no built-in direction set for d={d}; supply a DirectionSet")
    eye = np.eye(d, dtype=np.int64)
    vecs = list(eye)
    for i, j in itertools.combinations(range(d), 2):
        vecs += [eye[i] + eye[j], eye[i] - eye[j]]
    return DirectionSet(np.array(vecs))


def _pair_positions(directions: DirectionSet) -> dict[tuple[int, int], tuple[int, int]]:
    eye = np.eye(directions.dim, dtype=np.int64)
    out = {}
    for i, j in itertools.combinations(range(directions.dim), 2):
        plus = minus = None
        for k, v in enumerate(directions.vectors):
            if np.array_equal(v, eye[i] + eye[j]) or np.array_equal(v, -eye[i] - eye[j]):
                plus = k
            elif np.array_equal(v, eye[i] - eye[j]) or np.array_equal(v, eye[j] - eye[i]):
                minus = k
        if plus is None or minus is None:
            raise ValueError(
                "built-in decomposition needs e_i + e_j and e_i - e_j in the direction set; "
                "pass a decompose callback for custom sets"
            )
        out[(i, j)] = (plus, minus)
    return out


def decompose_diffusion(a, directions: DirectionSet, floor: float = DEFAULT_POSITIVITY_FLOOR) -> np.ndarray:
    """Nonnegative per-direction coefficients ``a_k`` with ``sum a_k l_k l_k^T = a``.

    ``a`` is one ``(d, d)`` matrix or a stack ``(n, d, d)``; the result has
    shape ``(m,)`` or ``(n, m)`` accordingly.
    """
    a = np.asarray(a, dtype=float)
    single = a.ndim == 2
    a = a.reshape(-1, directions.dim, directions.dim)
    if directions.decompose is not None:
        out = np.asarray(directions.decompose(a), dtype=float).reshape(len(a), len(directions))
        return out[0] if single else out

    n, d = len(a), directions.dim
    out = np.zeros((n, len(directions)))
    offdiag = np.abs(a).sum(axis=2) - np.abs(np.diagonal(a, axis1=1, axis2=2))
    basis = np.diagonal(a, axis1=1, axis2=2) - offdiag
    bad = basis < floor
    if bad.any():
        p, i = np.argwhere(bad)[0]
        raise DecompositionInfeasible(int(i), float(basis[p, i]), None if single else int(p))
    out[:, directions.basis_positions()] = basis
    for (i, j), (kp, km) in _pair_positions(directions).items():
        aij = a[:, i, j]
        out[:, kp] = np.maximum(aij, 0.0)
        out[:, km] = np.maximum(-aij, 0.0)
    return out[0] if single else out


def decompose_drift(b, directions: DirectionSet) -> np.ndarray:
    """Per-direction drift ``bbar_k``: ``b_i`` on ``e_i``, zero elsewhere."""
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    b = b.reshape(-1, directions.dim)
    if directions.decompose_drift is not None:
        out = np.asarray(directions.decompose_drift(b), dtype=float).reshape(len(b), len(directions))
        return out[0] if single else out
    out = np.zeros((len(b), len(directions)))
    for i, k in enumerate(directions.basis_positions()):
        # a stored -e_i flips the sign
        out[:, k] = b[:, i] * directions.vectors[k, i]
    return out[0] if single else out


def reconstruct_diffusion(coeffs, directions: DirectionSet) -> np.ndarray:
    """``sum_k a_k l_k l_k^T``; inverse check for :func:`decompose_diffusion`."""
    L = directions.vectors.astype(float)
    return np.einsum("...k,ki,kj->...ij", np.asarray(coeffs, dtype=float), L, L)


def reconstruct_drift(coeffs, directions: DirectionSet) -> np.ndarray:
    return np.asarray(coeffs, dtype=float) @ directions.vectors.astype(float)


def dominance_margin(a) -> np.ndarray:
    """``min_i (a_ii - sum_{j != i} |a_ij|)`` per matrix."""
    a = np.asarray(a, dtype=float)
    diag = np.diagonal(a, axis1=-2, axis2=-1)
    return (2 * diag - np.abs(a).sum(axis=-1)).min(axis=-1)
