"""Tamed energies ``U``, the potential ``V2 = |grad U|^2/4 - Delta U/2`` and ``Z``.

Taming families (r = |x|):

* ``NoTaming``: ``U = V(N)``.
* ``AdditivePower(sigma, beta)``: ``U = V(beta N + r^-sigma)``.
* ``AdditiveLog(beta)``: ``U = V(beta N + log(1/r))``.
* ``MultiplicativePower(sigma)``: ``U = V(r^-sigma N)``.
* ``MultiplicativeII(L, alpha)``: ``U = (1 + xi~(r)) V(N)`` with
  ``xi(s) = log(e + 1/s)`` and ``xi~ = xi`` for r < 1,
  ``xi~ = ((r - L)/(1 - L))^2 xi`` for r >= 1.

All tamings except ``NoTaming`` are singular on ``{x = 0}``. There the energy is
``+inf`` and ``V2 = +inf`` by convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .calculus import (
    DerivativeBundle,
    bundle_add,
    bundle_product,
    bundle_scale,
    chain_rule_bundle,
    constant_bundle,
    fd_bundle,
    radial_bundle,
)
from .errors import (
    BudgetTooSmall,
    InvalidParameter,
    NonIntegrable,
    OriginSingularity,
)
from .group import GroupPoint, Step2Group
from .norms import NormSpec, TypeTwoSmooth, norm_bundle
from .outer import OuterFunction, Power
from .parallel import chunk_rng, chunk_sizes, map_ordered

E = np.e


# --------------------------------------------------------------- taming specs

class TamingSpec:
    kind = "abstract"
    singular = True

    def xi(self, r):
        """``(xi, xi', xi'')`` as functions of r = |x|."""
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NoTaming(TamingSpec):
    kind = "none"
    singular = False

    def xi(self, r):
        z = np.zeros_like(r)
        return z, z, z

    def describe(self):
        return {"kind": self.kind}


def _power_xi(sigma, r):
    return r ** -sigma, -sigma * r ** (-sigma - 1.0), sigma * (sigma + 1.0) * r ** (-sigma - 2.0)


@dataclass(frozen=True)
class AdditivePower(TamingSpec):
    sigma: float = 1.0
    beta: float = 1.0
    kind = "additive_power"

    def __post_init__(self):
        if not (self.sigma > 0 and self.beta > 0):
            raise InvalidParameter("additive_power needs sigma > 0 and beta > 0")

    def xi(self, r):
        return _power_xi(self.sigma, r)

    def describe(self):
        return {"kind": self.kind, "sigma": self.sigma, "beta": self.beta}


@dataclass(frozen=True)
class AdditiveLog(TamingSpec):
    beta: float = 1.0
    kind = "additive_log"

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidParameter("additive_log needs beta > 0")

    def xi(self, r):
        return -np.log(r), -1.0 / r, 1.0 / r ** 2

    def describe(self):
        return {"kind": self.kind, "beta": self.beta}


@dataclass(frozen=True)
class MultiplicativePower(TamingSpec):
    sigma: float = 1.0
    kind = "mult_power"

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidParameter("mult_power needs sigma > 0")

    def xi(self, r):
        return _power_xi(self.sigma, r)

    def describe(self):
        return {"kind": self.kind, "sigma": self.sigma}


def log_xi(s):
    """``xi(s) = log(e + 1/s)`` with its first two derivatives."""
    es = E * s
    return (np.log(E + 1.0 / s), -1.0 / ((1.0 + es) * s),
            (1.0 + 2.0 * es) / ((1.0 + es) ** 2 * s ** 2))


@dataclass(frozen=True)
class MultiplicativeII(TamingSpec):
    """``alpha`` is the weight in the dominance functional ``(1 - alpha)|grad U|^2 - Delta U``."""

    L: float = 0.5
    alpha: float = 0.5
    kind = "mult2"

    def __post_init__(self):
        if not (0.0 < self.L < 1.0 and 0.0 < self.alpha < 1.0):
            raise InvalidParameter("mult2 needs L and alpha in (0, 1)")

    def inner_branch(self, r):
        return log_xi(r)

    def outer_branch(self, r):
        f0, f1, f2 = log_xi(r)
        c = (1.0 - self.L) ** 2
        w0 = (r - self.L) ** 2 / c
        w1 = 2.0 * (r - self.L) / c
        w2 = 2.0 / c
        return w0 * f0, w1 * f0 + w0 * f1, w2 * f0 + 2.0 * w1 * f1 + w0 * f2

    def xi(self, r):
        inner = self.inner_branch(r)
        outer = self.outer_branch(r)
        far = r >= 1.0
        return tuple(np.where(far, o, i) for i, o in zip(inner, outer))

    def describe(self):
        return {"kind": self.kind, "L": self.L, "alpha": self.alpha}


def seam_jumps(taming: MultiplicativeII, n: int) -> dict:
    """One-sided limits at r = 1 of the radial profile and its derivatives.

    Returns the outer-minus-inner jumps of ``xi~``, ``|grad xi~|`` (radial
    derivative) and ``Delta xi~``.
    """
    one = np.array(1.0)
    i0, i1, i2 = taming.inner_branch(one)
    o0, o1, o2 = taming.outer_branch(one)
    return {"value": float(o0 - i0), "gradient": float(o1 - i1),
            "laplacian": float((o2 + (n - 1) * o1) - (i2 + (n - 1) * i1))}


# --------------------------------------------------------------------- models

@dataclass(frozen=True)
class EnergyModel:
    group: Step2Group
    norm: NormSpec
    taming: TamingSpec
    outer: OuterFunction

    def __post_init__(self):
        self.norm.validate(self.group)

    def describe(self) -> dict:
        return {"norm": self.norm.describe(), "taming": self.taming.describe(),
                "outer": self.outer.describe()}


def xi_bundle(taming: TamingSpec, p: GroupPoint) -> DerivativeBundle:
    r = np.linalg.norm(p.x, axis=-1)
    if taming.singular and np.any(r == 0.0):
        raise OriginSingularity("taming profile is singular at x = 0")
    f0, f1, f2 = taming.xi(r)
    return radial_bundle(p.x, f0, f1, f2, 0)


def _energy_bundle_regular(model: EnergyModel, p: GroupPoint) -> DerivativeBundle:
    t = model.taming
    nb = norm_bundle(model.group, model.norm, p)
    if isinstance(t, NoTaming):
        return chain_rule_bundle(nb, model.outer)
    xb = xi_bundle(t, p)
    if isinstance(t, (AdditivePower, AdditiveLog)):
        return chain_rule_bundle(bundle_add(bundle_scale(nb, t.beta), xb), model.outer)
    if isinstance(t, MultiplicativePower):
        return chain_rule_bundle(bundle_product(xb, nb), model.outer)
    if isinstance(t, MultiplicativeII):
        one = constant_bundle(1.0, p.batch_shape, p.x.shape[-1])
        return bundle_product(bundle_add(one, xb), chain_rule_bundle(nb, model.outer))
    raise InvalidParameter(f"unsupported taming {t!r}")


def energy_bundle(model: EnergyModel, p: GroupPoint) -> DerivativeBundle:
    """Closed-form ``(U, grad U, Delta U)``.

    On ``{x = 0}`` singular tamings give ``U = +inf``, ``grad U = 0`` and
    ``Delta U = -inf`` so that ``V2 = +inf`` there.
    """
    model.group.check(p)
    r2 = np.sum(p.x ** 2, axis=-1) + np.sum(p.z ** 2, axis=-1)
    if np.any(r2 == 0.0):
        raise OriginSingularity("energy derivatives are undefined at the identity")
    if not model.taming.singular:
        return _energy_bundle_regular(model, p)
    on_center = np.linalg.norm(p.x, axis=-1) == 0.0
    if not np.any(on_center):
        return _energy_bundle_regular(model, p)
    value = np.full(p.batch_shape, np.inf)
    grad = np.zeros(p.x.shape)
    lap = np.full(p.batch_shape, -np.inf)
    off = ~on_center
    if np.any(off):
        b = _energy_bundle_regular(model, p[off])
        value[off], grad[off], lap[off] = b.value, b.grad, b.laplacian
    return DerivativeBundle(value, grad, lap)


def energy_value(model: EnergyModel, p: GroupPoint) -> np.ndarray:
    """``U(p)`` without derivatives; ``+inf`` on the singular set."""
    t = model.taming
    N = model.norm.value(model.group, p)
    if isinstance(t, NoTaming):
        return model.outer.value(N)
    r = np.linalg.norm(p.x, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = t.xi(r)[0]
        if isinstance(t, (AdditivePower, AdditiveLog)):
            U = model.outer.value(t.beta * N + xi)
        elif isinstance(t, MultiplicativePower):
            U = model.outer.value(xi * N)
        else:
            U = (1.0 + xi) * model.outer.value(N)
    return np.where(r == 0.0, np.inf, U)


def v2_from_bundle(b: DerivativeBundle) -> np.ndarray:
    return 0.25 * b.grad_sq - 0.5 * b.laplacian


def v2_closed(model: EnergyModel, p: GroupPoint) -> np.ndarray:
    return v2_from_bundle(energy_bundle(model, p))


def v2_fd_oracle(model: EnergyModel, p: GroupPoint, h=None) -> np.ndarray:
    field = lambda q: energy_value(model, q)  # noqa: E731
    return v2_from_bundle(fd_bundle(model.group, field, p, h, singular_x=model.taming.singular))


# --------------------------------------------------------- partition function

@dataclass(frozen=True)
class PartitionEstimate:
    Z_hat: float
    stderr: float
    finite: bool
    sub_estimates: tuple
    ratio: float
    pareto_k: float


def _proposal_logpdf(g, scale, nu, x, z):
    lx = stats.multivariate_t(loc=np.zeros(g.n), shape=scale ** 2 * np.eye(g.n), df=nu).logpdf(x)
    if g.m == 0:
        return lx
    lz = stats.multivariate_t(loc=np.zeros(g.m), shape=scale ** 4 * np.eye(g.m), df=nu).logpdf(z)
    return lx + lz


def _draw_chunk(g, size, rng, scale, nu):
    """Radial Student-t in x (scale s) and in z (scale s^2)."""
    def mvt(dim, sc):
        w = rng.chisquare(nu, size) / nu
        return sc * rng.standard_normal((size, dim)) / np.sqrt(w)[:, None]
    return GroupPoint(mvt(g.n, scale), mvt(g.m, scale ** 2))


def pareto_k_hat(weights: np.ndarray) -> float:
    """Shape of a generalized Pareto fit to the largest importance weights."""
    w = np.sort(weights)
    S = w.size
    M = int(min(0.2 * S, 3.0 * np.sqrt(S)))
    if M < 5:
        return float("nan")
    tail = w[-M:]
    thresh = w[-M - 1]
    exceed = tail - thresh
    if not np.any(exceed > 0):
        return 0.0
    scale_ref = exceed.mean()
    k, _, _ = stats.genpareto.fit(exceed / scale_ref, floc=0.0)
    return float(k)


def partition_estimate(model: EnergyModel, budget: int, seed: int, scale: float = 1.0,
                       nu: float = 3.0, strict: bool = False, threads: int = 1,
                       chunk: int = 65536) -> PartitionEstimate:
    """Importance-sampling estimate of ``Z = int exp(-U) dlambda``.

    The verdict is ``finite`` when the nested prefixes of size budget/4,
    budget/2 and budget agree to a max/min ratio below 1.5 and the Pareto tail
    shape of the weights is below 0.7. With ``strict=True`` a non-finite
    verdict raises :class:`NonIntegrable`.
    """
    if budget < 10_000:
        raise BudgetTooSmall(f"budget must be >= 1e4, got {budget}")
    g = model.group
    sizes = chunk_sizes(budget, chunk)

    def work(item):
        c, size = item
        rng = chunk_rng(seed, c)
        p = _draw_chunk(g, size, rng, scale, nu)
        with np.errstate(over="ignore", invalid="ignore"):
            logw = -energy_value(model, p) - _proposal_logpdf(g, scale, nu, p.x, p.z)
        return np.where(np.isnan(logw), -np.inf, logw)

    logw = np.concatenate(map_ordered(work, list(enumerate(sizes)), threads))
    with np.errstate(over="ignore"):
        w = np.exp(logw)
    cuts = [budget // 4, budget // 2, budget]
    subs = tuple(float(w[:c].mean()) for c in cuts)
    Z_hat = subs[-1]
    stderr = float(w.std(ddof=1) / np.sqrt(budget))
    positive = [s for s in subs if s > 0]
    if len(positive) < 3 or not np.all(np.isfinite(subs)):
        ratio = float("inf")
    else:
        ratio = max(positive) / min(positive)
    k = pareto_k_hat(w[np.isfinite(w)])
    finite = bool(ratio < 1.5 and np.isfinite(Z_hat) and Z_hat > 0 and (np.isnan(k) or k < 0.7))
    est = PartitionEstimate(Z_hat, stderr, finite, subs, float(ratio), k)
    if strict and not finite:
        raise NonIntegrable(f"partition estimate unstable (ratio {ratio:.3g}, k {k:.3g})", est)
    return est


def default_model(group: Step2Group, norm: NormSpec | None = None,
                  taming: TamingSpec | None = None, outer: OuterFunction | None = None) -> EnergyModel:
    return EnergyModel(group, norm or TypeTwoSmooth(16.0), taming or NoTaming(), outer or Power(2.0))
