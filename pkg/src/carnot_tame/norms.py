"""Homogeneous norms with closed-form sub-gradient and sub-Laplacian.

Families:

* ``TypeTwoSmooth(a)``: ``N = (|x|^4 + a |z|^2)^(1/4)``.
* ``TypeTwoAugmented(a)``: ``((|x|^4 + a |z|^2)^(1/2) + |x|^2)^(1/2)``.
* ``KaplanGeneralizedHeisenberg()``: ``((sum_j 2|L_j| (x_j^2 + x_{j+n}^2))^2 + 16 z^2)^(1/4)``
  on a generalized Heisenberg group.
* ``PerspectiveComposite(base, other, zeta)``: ``K = B zeta(O / B)``.
* ``GeometricMean(base, other, alpha)``: ``K = B^(1-alpha) O^alpha``.

The two quartic families are instances of ``F = (sum_i w_i x_i^2)^2 + b |z|^2``,
``N = F^(1/4)``, for which

    X_i F = 4 S w_i x_i + b (M x)_i,           M = sum_k z_k Lambda_k,
    Delta F = 8 sum_i w_i^2 x_i^2 + 4 S sum_i w_i + (b/2) sum_k |Lambda_k x|^2,

with ``S = sum_i w_i x_i^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .calculus import DerivativeBundle
from .errors import DimensionMismatch, EmptySample, InvalidParameter, OriginSingularity
from .group import GroupPoint, Step2Group, dilate, homogeneous_dimension

X_GUARD = 1e-6


# ----------------------------------------------------------------- zeta tables

@dataclass(frozen=True)
class Zeta:
    """A positive function with first and second derivatives, used in perspective norms."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    f1: Callable[[np.ndarray], np.ndarray]
    f2: Callable[[np.ndarray], np.ndarray]
    alpha: Optional[float] = None


def zeta_constant() -> Zeta:
    return Zeta("constant", lambda s: np.ones_like(s), lambda s: np.zeros_like(s),
                lambda s: np.zeros_like(s))


def zeta_root(alpha: float) -> Zeta:
    if not 0.0 < alpha < 1.0:
        raise InvalidParameter(f"root exponent must lie in (0, 1), got {alpha}")
    return Zeta("root", lambda s: s ** alpha, lambda s: alpha * s ** (alpha - 1.0),
                lambda s: alpha * (alpha - 1.0) * s ** (alpha - 2.0), alpha)


def zeta_affine(alpha: float) -> Zeta:
    """``(1 - alpha) + alpha s``: turns the perspective norm into a convex mixture."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameter(f"mixing weight must lie in [0, 1], got {alpha}")
    return Zeta("affine", lambda s: (1.0 - alpha) + alpha * s,
                lambda s: np.full_like(s, alpha), lambda s: np.zeros_like(s), alpha)


ZETAS = {"constant": lambda alpha=None: zeta_constant(), "root": zeta_root, "affine": zeta_affine}


# ----------------------------------------------------------------- norm specs

def _require_nonzero(p: GroupPoint) -> None:
    r2 = np.sum(p.x ** 2, axis=-1) + np.sum(p.z ** 2, axis=-1)
    if np.any(r2 == 0.0):
        raise OriginSingularity("norm derivatives are undefined at the identity")


def _quartic_bundle(g: Step2Group, p: GroupPoint, w: np.ndarray, b: float) -> DerivativeBundle:
    x, z = p.x, p.z
    S = np.sum(w * x ** 2, axis=-1)
    F = S ** 2 + b * np.sum(z ** 2, axis=-1)
    N = F ** 0.25
    Mx = np.einsum("...k,kil,...l->...i", z, g.lambdas, x)
    gradF = 4.0 * S[..., None] * w * x + b * Mx
    lam_x_sq = np.einsum("kil,...l->...ki", g.lambdas, x)
    lapF = (8.0 * np.sum(w ** 2 * x ** 2, axis=-1) + 4.0 * S * np.sum(w)
            + 0.5 * b * np.sum(lam_x_sq ** 2, axis=(-2, -1)))
    N3 = N ** 3
    grad = gradF / (4.0 * N3[..., None])
    lap = lapF / (4.0 * N3) - 3.0 * np.sum(grad ** 2, axis=-1) / N
    return DerivativeBundle(N, grad, lap)


class NormSpec:
    """Common interface; subclasses implement ``value`` and ``bundle``."""

    kind = "abstract"

    def value(self, g: Step2Group, p: GroupPoint) -> np.ndarray:
        raise NotImplementedError

    def bundle(self, g: Step2Group, p: GroupPoint) -> DerivativeBundle:
        raise NotImplementedError

    def validate(self, g: Step2Group) -> None:
        pass

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class TypeTwoSmooth(NormSpec):
    a: float = 16.0
    kind = "type2"

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidParameter(f"a must be positive, got {self.a}")

    def value(self, g, p):
        return (np.sum(p.x ** 2, axis=-1) ** 2 + self.a * np.sum(p.z ** 2, axis=-1)) ** 0.25

    def bundle(self, g, p):
        g.check(p)
        _require_nonzero(p)
        return _quartic_bundle(g, p, np.ones(g.n), self.a)

    def describe(self):
        return {"kind": self.kind, "a": self.a}


@dataclass(frozen=True)
class TypeTwoAugmented(NormSpec):
    a: float = 16.0
    kind = "type2aug"

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidParameter(f"a must be positive, got {self.a}")

    def value(self, g, p):
        x2 = np.sum(p.x ** 2, axis=-1)
        return (np.sqrt(x2 ** 2 + self.a * np.sum(p.z ** 2, axis=-1)) + x2) ** 0.5

    def bundle(self, g, p):
        g.check(p)
        _require_nonzero(p)
        base = _quartic_bundle(g, p, np.ones(g.n), self.a)
        # S = N^2 from the quartic bundle, then G = S + |x|^2 and result = sqrt(G)
        N = base.value
        S = N ** 2
        gradS = 2.0 * N[..., None] * base.grad
        lapS = 2.0 * N * base.laplacian + 2.0 * base.grad_sq
        x = p.x
        G = S + np.sum(x ** 2, axis=-1)
        gradG = gradS + 2.0 * x
        lapG = lapS + 2.0 * g.n
        K = np.sqrt(G)
        grad = gradG / (2.0 * K[..., None])
        lap = lapG / (2.0 * K) - np.sum(gradG ** 2, axis=-1) / (4.0 * K ** 3)
        return DerivativeBundle(K, grad, lap)

    def describe(self):
        return {"kind": self.kind, "a": self.a}


@dataclass(frozen=True)
class KaplanGeneralizedHeisenberg(NormSpec):
    kind = "kaplan_gh"

    def validate(self, g):
        if g.L is None:
            raise DimensionMismatch("kaplan_gh norm requires a generalized Heisenberg group")

    def weights(self, g) -> np.ndarray:
        self.validate(g)
        absL = 2.0 * np.abs(np.asarray(g.L))
        return np.concatenate([absL, absL])

    def value(self, g, p):
        S = np.sum(self.weights(g) * p.x ** 2, axis=-1)
        return (S ** 2 + 16.0 * np.sum(p.z ** 2, axis=-1)) ** 0.25

    def bundle(self, g, p):
        g.check(p)
        _require_nonzero(p)
        return _quartic_bundle(g, p, self.weights(g), 16.0)

    def describe(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class PerspectiveComposite(NormSpec):
    base: NormSpec = field(default_factory=TypeTwoAugmented)
    other: NormSpec = field(default_factory=TypeTwoSmooth)
    zeta: Zeta = field(default_factory=zeta_constant)
    kind = "perspective"

    def validate(self, g):
        self.base.validate(g)
        self.other.validate(g)

    def value(self, g, p):
        B = self.base.value(g, p)
        return B * self.zeta.f(self.other.value(g, p) / B)

    def bundle(self, g, p):
        Bb = self.base.bundle(g, p)
        Ob = self.other.bundle(g, p)
        B = Bb.value
        r = Ob.value / B
        z0, z1, z2 = self.zeta.f(r), self.zeta.f1(r), self.zeta.f2(r)
        lead = z0 - r * z1
        diff = Ob.grad - r[..., None] * Bb.grad
        grad = lead[..., None] * Bb.grad + z1[..., None] * Ob.grad
        lap = lead * Bb.laplacian + z2 * np.sum(diff ** 2, axis=-1) / B + z1 * Ob.laplacian
        return DerivativeBundle(B * z0, grad, lap)

    def describe(self):
        return {"kind": self.kind, "zeta": self.zeta.name, "alpha": self.zeta.alpha,
                "base": self.base.describe(), "other": self.other.describe()}


@dataclass(frozen=True)
class GeometricMean(PerspectiveComposite):
    """``B^(1 - alpha) O^alpha``; a perspective norm with a root zeta."""

    alpha: float = 0.5
    kind = "geomean"

    def __post_init__(self):
        object.__setattr__(self, "zeta", zeta_root(self.alpha))

    def describe(self):
        return {"kind": self.kind, "alpha": self.alpha,
                "base": self.base.describe(), "other": self.other.describe()}


def norm_bundle(g: Step2Group, spec: NormSpec, p: GroupPoint) -> DerivativeBundle:
    spec.validate(g)
    return spec.bundle(g, p)


def kaplan_residual(g: Step2Group, spec: NormSpec, p: GroupPoint) -> np.ndarray:
    """``Delta N - (Q - 1) |grad N|^2 / N``; zero for a Kaplan norm."""
    b = norm_bundle(g, spec, p)
    Q = homogeneous_dimension(g)
    return b.laplacian - (Q - 1) * b.grad_sq / b.value


# ------------------------------------------------------------ level-set sampling

CHUNK = 8192


def sphere_directions(g: Step2Group, size: int, rng: np.random.Generator) -> GroupPoint:
    v = rng.standard_normal((size, g.dim))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    return GroupPoint(v[:, : g.n], v[:, g.n:])


def unit_level_set(g: Step2Group, spec: NormSpec, size: int, seed: int,
                   chunk: int = CHUNK) -> GroupPoint:
    """Points on {N = 1}: Euclidean-uniform directions pushed along dilation orbits.

    Chunk ``c`` draws from ``default_rng([seed, c])`` so the sample does not
    depend on how the work is split.
    """
    if size < 1:
        raise EmptySample("sample size must be positive")
    xs, zs = [], []
    for c, start in enumerate(range(0, size, chunk)):
        rng = np.random.default_rng([seed, c])
        d = sphere_directions(g, min(chunk, size - start), rng)
        scaled = dilate(g, d, 1.0 / spec.value(g, d))
        xs.append(scaled.x)
        zs.append(scaled.z)
    return GroupPoint(np.concatenate(xs), np.concatenate(zs))


def shell(g: Step2Group, spec: NormSpec, radius: float, size: int, seed: int) -> GroupPoint:
    return dilate(g, unit_level_set(g, spec, size, seed), radius)


@dataclass(frozen=True)
class LemmaConstants:
    A_est: float
    C_est: float
    B_est: float
    sample_size: int
    excluded: int
    table: Optional[dict] = field(default=None, repr=False)


def lemma_constants(g: Step2Group, spec: NormSpec, sample_size: int, seed: int,
                    keep_table: bool = False) -> LemmaConstants:
    """Extremes of ``|grad N|^2 N^2/|x|^2`` and ``|Delta N| N^3/|x|^2`` on {N = 1}.

    Both ratios are invariant under dilations, so the level-set extremes are global.
    """
    if not isinstance(spec, (TypeTwoSmooth, KaplanGeneralizedHeisenberg)):
        raise InvalidParameter("lemma constants are defined for the quartic norms")
    p = unit_level_set(g, spec, sample_size, seed)
    r = np.linalg.norm(p.x, axis=-1)
    keep = r >= X_GUARD
    if not np.any(keep):
        raise EmptySample("every sample fell inside the center tube")
    p, r = p[keep], r[keep]
    b = norm_bundle(g, spec, p)
    N = b.value
    grad_ratio = b.grad_sq * N ** 2 / r ** 2
    lap_ratio = b.laplacian * N ** 3 / r ** 2
    table = None
    if keep_table:
        table = {"abs_x": r, "N": N, "grad_ratio": grad_ratio, "lap_ratio": lap_ratio}
    return LemmaConstants(float(grad_ratio.min()), float(grad_ratio.max()),
                          float(np.abs(lap_ratio).max()), int(keep.sum()),
                          int((~keep).sum()), table)


def gradient_bound(g: Step2Group, spec: NormSpec, sample_size: int, seed: int) -> float:
    """Empirical ``sup |grad N|`` (a degree-0 quantity)."""
    p = unit_level_set(g, spec, sample_size, seed)
    return float(np.sqrt(norm_bundle(g, spec, p).grad_sq).max())


def radial_derivative_min(g: Step2Group, spec: NormSpec, sample_size: int, seed: int) -> float:
    """Empirical ``min x . grad N`` over {N = 1}."""
    p = unit_level_set(g, spec, sample_size, seed)
    b = norm_bundle(g, spec, p)
    return float(np.sum(p.x * b.grad, axis=-1).min())


def equivalence_constant(g: Step2Group, spec_a: NormSpec, spec_b: NormSpec,
                         sample_size: int, seed: int) -> float:
    """Smallest ``c >= 1`` with ``A / c <= B <= c A`` on the sampled {A = 1}."""
    p = unit_level_set(g, spec_a, sample_size, seed)
    vals = spec_b.value(g, p)
    return float(max(1.0, vals.max(), 1.0 / vals.min()))


def perturbation_gap(g: Step2Group, spec_k: NormSpec, spec_k0: NormSpec,
                     sample_size: int, seed: int) -> float:
    """Empirical ``sup |grad K - grad K0|`` over the unit level set of K0."""
    p = unit_level_set(g, spec_k0, sample_size, seed)
    gk = norm_bundle(g, spec_k, p).grad
    gk0 = norm_bundle(g, spec_k0, p).grad
    return float(np.linalg.norm(gk - gk0, axis=-1).max())
