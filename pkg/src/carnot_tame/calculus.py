"""Horizontal frame, sub-gradient and sub-Laplacian.

Closed-form derivatives travel between modules as a :class:`DerivativeBundle`
holding ``(value, grad, laplacian)`` where ``grad[..., i] = X_i f`` and
``laplacian = sum_i X_i^2 f``. The finite-difference routines here are oracles
for those closed forms: they move along the exact flow ``t -> p o (t e_i, 0)``
of ``X_i``, so the only truncation error comes from the scalar field itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationFailure, OuterSingularity
from .group import GroupPoint, Step2Group, compose


@dataclass(frozen=True)
class DerivativeBundle:
    value: np.ndarray
    grad: np.ndarray
    laplacian: np.ndarray

    @property
    def grad_sq(self) -> np.ndarray:
        return np.sum(self.grad ** 2, axis=-1)

    def __getitem__(self, idx) -> "DerivativeBundle":
        return DerivativeBundle(self.value[idx], self.grad[idx], self.laplacian[idx])


@dataclass(frozen=True)
class ScalarField:
    """A scalar function on the group with an optional closed-form bundle.

    ``degree`` is the declared homogeneity degree under dilations, if any.
    """

    func: Callable[[GroupPoint], np.ndarray]
    bundle: Optional[Callable[[GroupPoint], DerivativeBundle]] = None
    degree: Optional[float] = None
    name: str = "field"

    def __call__(self, p: GroupPoint) -> np.ndarray:
        return self.func(p)


@dataclass(frozen=True)
class HorizontalFrame:
    """Row ``i`` of ``coefficients`` is X_i at a point in coordinates (d/dx, d/dz)."""

    coefficients: np.ndarray

    @property
    def n(self) -> int:
        return self.coefficients.shape[-2]


def frame_at(g: Step2Group, p: GroupPoint) -> HorizontalFrame:
    g.check(p)
    batch = p.batch_shape
    coeffs = np.zeros(batch + (g.n, g.dim))
    coeffs[..., :, : g.n] = np.eye(g.n)
    coeffs[..., :, g.n:] = g.center_coefficients(p.x)
    return HorizontalFrame(coeffs)


# ---------------------------------------------------------------- bundle algebra

def constant_bundle(c, batch_shape, n) -> DerivativeBundle:
    return DerivativeBundle(np.full(batch_shape, float(c)),
                            np.zeros(tuple(batch_shape) + (n,)),
                            np.zeros(batch_shape))


def bundle_add(a: DerivativeBundle, b: DerivativeBundle) -> DerivativeBundle:
    return DerivativeBundle(a.value + b.value, a.grad + b.grad, a.laplacian + b.laplacian)


def bundle_scale(a: DerivativeBundle, c: float) -> DerivativeBundle:
    return DerivativeBundle(c * a.value, c * a.grad, c * a.laplacian)


def bundle_product(a: DerivativeBundle, b: DerivativeBundle) -> DerivativeBundle:
    va, vb = a.value, b.value
    cross = np.sum(a.grad * b.grad, axis=-1)
    return DerivativeBundle(
        va * vb,
        va[..., None] * b.grad + vb[..., None] * a.grad,
        va * b.laplacian + vb * a.laplacian + 2.0 * cross,
    )


def radial_bundle(x: np.ndarray, f0, f1, f2, m: int) -> DerivativeBundle:
    """Bundle of ``f(|x|)`` given ``f, f', f''`` evaluated at ``r = |x|``.

    The z-parts of the frame annihilate functions of x alone, so the Euclidean
    formulas ``grad = f'(r) x / r`` and ``lap = f'' + (n - 1) f' / r`` apply.
    """
    n = x.shape[-1]
    r = np.linalg.norm(x, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = (f1 / r)[..., None] * x
        lap = f2 + (n - 1) * f1 / r
    return DerivativeBundle(np.asarray(f0, dtype=float), grad, lap)


def chain_rule_bundle(inner: DerivativeBundle, V) -> DerivativeBundle:
    """Bundle of ``V(phi)`` from the bundle of ``phi``.

    ``V`` is any object exposing ``derivatives(s) -> (V, V', V'')``.
    """
    s = inner.value
    v0, v1, v2 = V.derivatives(s)
    finite = np.isfinite(s)
    if np.any(finite & ~(np.isfinite(v1) & np.isfinite(v2))):
        bad = s[finite & ~(np.isfinite(v1) & np.isfinite(v2))]
        raise OuterSingularity(f"outer function not twice differentiable at s = {bad.ravel()[:3]}")
    with np.errstate(invalid="ignore"):
        grad = v1[..., None] * inner.grad
        lap = v1 * inner.laplacian + v2 * inner.grad_sq
    return DerivativeBundle(v0, grad, lap)


# ------------------------------------------------------------ finite differences

def default_step(p: GroupPoint) -> np.ndarray:
    """``1e-4 * max(1, |p|)`` with |p| the Euclidean length of the coordinates."""
    return 1e-4 * np.maximum(1.0, np.linalg.norm(p.stacked(), axis=-1))


def _shift(g: Step2Group, p: GroupPoint, i: int, t) -> GroupPoint:
    t = np.asarray(t, dtype=float)
    e = np.zeros(p.x.shape)
    e[..., i] = t
    return compose(g, p, GroupPoint(e, np.zeros(p.z.shape)))


def _evaluate(field, q: GroupPoint) -> np.ndarray:
    with np.errstate(all="ignore"):
        vals = np.asarray(field(q), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise EvaluationFailure("field is not finite at a finite-difference probe")
    return vals


def _resolve_step(p: GroupPoint, h, singular_x: bool) -> np.ndarray:
    h = default_step(p) if h is None else np.broadcast_to(np.asarray(h, dtype=float), p.batch_shape)
    if singular_x:
        r = np.linalg.norm(p.x, axis=-1)
        if np.any(r <= 10.0 * h):
            raise EvaluationFailure("probe ball meets the singular set {x = 0}")
    return h


def fd_directional(g: Step2Group, field, p: GroupPoint, i: int, h=None,
                   singular_x: bool = False) -> np.ndarray:
    """Centered difference of ``t -> field(p o t e_i)`` at t = 0."""
    h = _resolve_step(p, h, singular_x)
    fp = _evaluate(field, _shift(g, p, i, h))
    fm = _evaluate(field, _shift(g, p, i, -h))
    return (fp - fm) / (2.0 * h)


def fd_subgradient(g: Step2Group, field, p: GroupPoint, h=None,
                   singular_x: bool = False) -> np.ndarray:
    g.check(p)
    return np.stack([fd_directional(g, field, p, i, h, singular_x) for i in range(g.n)], axis=-1)


def fd_sublaplacian(g: Step2Group, field, p: GroupPoint, h=None,
                    singular_x: bool = False) -> np.ndarray:
    """Sum over i of the 3-point second difference along the flow of X_i."""
    g.check(p)
    h = _resolve_step(p, h, singular_x)
    f0 = _evaluate(field, p)
    total = np.zeros(p.batch_shape)
    for i in range(g.n):
        fp = _evaluate(field, _shift(g, p, i, h))
        fm = _evaluate(field, _shift(g, p, i, -h))
        total = total + (fp - 2.0 * f0 + fm)
    return total / h ** 2


def fd_bundle(g: Step2Group, field, p: GroupPoint, h=None, singular_x: bool = False) -> DerivativeBundle:
    return DerivativeBundle(_evaluate(field, p),
                            fd_subgradient(g, field, p, h, singular_x),
                            fd_sublaplacian(g, field, p, h, singular_x))


def fd_bracket(g: Step2Group, field, p: GroupPoint, i: int, j: int, h=None) -> np.ndarray:
    """``[X_i, X_j] field`` at p by nested centered differences."""
    h = _resolve_step(p, h, False)

    def xi_field(q):
        return fd_directional(g, field, q, i, h)

    def xj_field(q):
        return fd_directional(g, field, q, j, h)

    return fd_directional(g, xj_field, p, i, h) - fd_directional(g, xi_field, p, j, h)


def euclidean_directional(g: Step2Group, field, p: GroupPoint, i: int, h=None) -> np.ndarray:
    """X_i f via the frame matrix: Euclidean coordinate gradient dotted with row i."""
    h = default_step(p) if h is None else h
    frame = frame_at(g, p).coefficients[..., i, :]
    coords = p.stacked()
    total = np.zeros(p.batch_shape)
    for a in range(g.dim):
        step = np.zeros(coords.shape)
        step[..., a] = h
        fp = _evaluate(field, GroupPoint((coords + step)[..., : g.n], (coords + step)[..., g.n:]))
        fm = _evaluate(field, GroupPoint((coords - step)[..., : g.n], (coords - step)[..., g.n:]))
        total = total + frame[..., a] * (fp - fm) / (2.0 * h)
    return total
