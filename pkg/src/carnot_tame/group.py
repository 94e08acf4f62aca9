"""Step-2 Carnot groups in exponential coordinates (x, z) on R^n x R^m.

The group law is

    (x, z) o (x', z') = (x + x', z_j + z'_j + 1/2 <Lambda_j x, x'>)

with skew-symmetric, linearly independent Lambda_j. Points may carry leading
batch dimensions: ``x`` has shape ``(..., n)`` and ``z`` shape ``(..., m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidParameter,
    LinearDependence,
    NonpositiveScale,
    SkewSymmetryViolation,
)

SKEW_TOL = 1e-12
RANK_TOL = 1e-10


@dataclass(frozen=True)
class GroupPoint:
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if x.ndim == 0 or z.ndim == 0:
            raise DimensionMismatch("x and z must be vectors (or batches of vectors)")
        if x.shape[:-1] != z.shape[:-1]:
            raise DimensionMismatch(f"batch shapes differ: {x.shape} vs {z.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise InvalidParameter("point coordinates must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @property
    def batch_shape(self) -> tuple:
        return self.x.shape[:-1]

    def stacked(self) -> np.ndarray:
        """Coordinates as a single array of shape ``(..., n + m)``."""
        return np.concatenate([self.x, self.z], axis=-1)

    def __getitem__(self, idx) -> "GroupPoint":
        return GroupPoint(self.x[idx], self.z[idx])

    def __len__(self) -> int:
        return self.x.shape[0] if self.x.ndim > 1 else 1


def point(x, z) -> GroupPoint:
    return GroupPoint(np.atleast_1d(np.asarray(x, dtype=float)),
                      np.atleast_1d(np.asarray(z, dtype=float)))


@dataclass(frozen=True, eq=False)
class Step2Group:
    """A step-2 group given by ``m`` skew ``n x n`` matrices.

    ``m = 0`` is accepted and yields the abelian group R^n; it is only used as a
    baseline in discretisation tests.
    """

    n: int
    m: int
    lambdas: np.ndarray = field(repr=False)
    name: str = "step2"
    L: tuple | None = None  # set only for generalized Heisenberg groups

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if self.n < 1 or self.m < 0:
            raise DimensionMismatch(f"need n >= 1 and m >= 0, got n={self.n}, m={self.m}")
        if lam.size == 0 and self.m == 0:
            lam = np.zeros((0, self.n, self.n))
        if lam.shape != (self.m, self.n, self.n):
            raise DimensionMismatch(
                f"expected lambdas of shape {(self.m, self.n, self.n)}, got {lam.shape}")
        if self.m:
            asym = np.abs(lam + np.transpose(lam, (0, 2, 1))).max()
            if asym > SKEW_TOL:
                raise SkewSymmetryViolation(f"max |L + L^T| = {asym:.3e}")
            sv = np.linalg.svd(lam.reshape(self.m, -1), compute_uv=False)
            if sv.min() <= RANK_TOL * max(1.0, sv.max()):
                raise LinearDependence(f"singular values {sv} indicate dependence")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def dim(self) -> int:
        return self.n + self.m

    def check(self, p: GroupPoint) -> None:
        if p.x.shape[-1] != self.n or p.z.shape[-1] != self.m:
            raise DimensionMismatch(
                f"point has (n, m) = ({p.x.shape[-1]}, {p.z.shape[-1]}), "
                f"group has ({self.n}, {self.m})")

    def identity(self) -> GroupPoint:
        return GroupPoint(np.zeros(self.n), np.zeros(self.m))

    def bilinear(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``<Lambda_j u, v>`` for every j, broadcast over batch dims."""
        return np.einsum("jab,...b,...a->...j", self.lambdas, u, v)

    def center_coefficients(self, x: np.ndarray) -> np.ndarray:
        """Matrix ``c[..., i, k] = 1/2 (Lambda_k x)_i`` of the frame's z-components."""
        return 0.5 * np.einsum("kil,...l->...ik", self.lambdas, x)

    def is_heisenberg_like(self) -> bool:
        """True for m = 1 with an orthogonal Lambda (Heisenberg-type normalisation)."""
        if self.m != 1:
            return False
        lam = self.lambdas[0]
        return bool(np.allclose(lam.T @ lam, np.eye(self.n), atol=1e-12))


def make_step2_group(n: int, m: int, lambdas: Sequence, name: str = "step2",
                     L: tuple | None = None) -> Step2Group:
    return Step2Group(int(n), int(m), np.asarray(lambdas, dtype=float), name=name, L=L)


def heisenberg() -> Step2Group:
    return make_step2_group(2, 1, [[[0.0, 1.0], [-1.0, 0.0]]], name="heisenberg")


def abelian(n: int) -> Step2Group:
    return Step2Group(n, 0, np.zeros((0, n, n)), name="abelian")


@dataclass(frozen=True)
class GeneralizedHeisenbergParams:
    L: tuple

    def __post_init__(self):
        L = tuple(float(v) for v in self.L)
        if not L:
            raise DimensionMismatch("L must be non-empty")
        if any(v == 0.0 for v in L):
            raise SkewSymmetryViolation("every L_j must be nonzero")
        object.__setattr__(self, "L", L)


def generalized_heisenberg(L: Sequence[float]) -> Step2Group:
    """Expand the law t + s + sum_j L_j (x_j y_{j+n} - y_j x_{j+n}) into Lambda form.

    Matching ``1/2 <Lambda x, y>`` coefficient by coefficient gives
    ``Lambda[j+n, j] = 2 L_j`` and ``Lambda[j, j+n] = -2 L_j``.
    """
    params = GeneralizedHeisenbergParams(tuple(L))
    k = len(params.L)
    lam = np.zeros((1, 2 * k, 2 * k))
    for j, Lj in enumerate(params.L):
        lam[0, j + k, j] = 2.0 * Lj
        lam[0, j, j + k] = -2.0 * Lj
    return make_step2_group(2 * k, 1, lam, name="generalized_heisenberg", L=params.L)


def compose(g: Step2Group, p: GroupPoint, q: GroupPoint) -> GroupPoint:
    g.check(p)
    g.check(q)
    return GroupPoint(p.x + q.x, p.z + q.z + 0.5 * g.bilinear(p.x, q.x))


def invert(g: Step2Group, p: GroupPoint) -> GroupPoint:
    g.check(p)
    return GroupPoint(-p.x, -p.z)


def dilate(g: Step2Group, p: GroupPoint, lam) -> GroupPoint:
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr <= 0) or not np.all(np.isfinite(lam_arr)):
        raise NonpositiveScale(f"dilation factor must be positive, got {lam}")
    g.check(p)
    lam_b = lam_arr[..., None] if lam_arr.ndim else lam_arr
    return GroupPoint(lam_b * p.x, lam_b ** 2 * p.z)


def homogeneous_dimension(g: Step2Group) -> int:
    return g.n + 2 * g.m


def left_translation_matrix(g: Step2Group, q: GroupPoint) -> np.ndarray:
    """Linear part of p -> q o p as a ``(n+m, n+m)`` matrix (q unbatched)."""
    g.check(q)
    d = g.dim
    A = np.eye(d)
    # z-block picks up 1/2 <Lambda_j q_x, p_x>, linear in p_x
    A[g.n:, :g.n] = 0.5 * np.einsum("jab,b->ja", g.lambdas, q.x)
    return A


def random_points(g: Step2Group, size: int, rng: np.random.Generator, scale: float = 1.0) -> GroupPoint:
    return GroupPoint(scale * rng.standard_normal((size, g.n)),
                      scale ** 2 * rng.standard_normal((size, g.m)))


def describe(g: Step2Group) -> dict:
    out = {
        "kind": g.name,
        "n": g.n,
        "m": g.m,
        "homogeneous_dimension": homogeneous_dimension(g),
        "lambdas": g.lambdas.tolist(),
    }
    if g.L is not None:
        out["L"] = list(g.L)
    return out
