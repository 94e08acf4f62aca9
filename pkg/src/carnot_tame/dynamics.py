"""Sampling mu_U with a horizontal MALA chain and empirical functional inequalities.

The proposal moves along the group: from p draw
``v = -s grad U(p) + sqrt(2 s) xi`` in R^n and propose ``q = p o (v, 0)``.
The reverse move from q is ``-v`` because ``q o (-v, 0) = p``, and the map
``(p, v) -> (p o (v, 0), -v)`` is a volume-preserving involution, so the usual
Metropolis-Hastings ratio with Gaussian densities in frame coordinates leaves
mu_U invariant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special, stats

from .errors import EmptySample, InvalidParameter, NonfiniteEnergy, StartOnSingularSet
from .group import GroupPoint, compose
from .norms import TypeTwoSmooth, norm_bundle
from .taming import EnergyModel, _draw_chunk, _proposal_logpdf, energy_bundle, energy_value

TUBE = 1e-9
TARGET_ACCEPT = 0.574
THIN_FACTOR = 5.0  # keep one draw per 5 autocorrelation times


@dataclass(frozen=True)
class ChainConfig:
    """``steps`` counts every iteration per chain, burn-in included."""

    step_size: float = 0.05
    steps: int = 5000
    burn_in: int = 1000
    seed: int = 0
    start: Optional[tuple] = None  # None: importance-resampled starts
    chains: int = 1
    tune: bool = True

    def __post_init__(self):
        if not self.step_size > 0:
            raise InvalidParameter("step size must be positive")
        if self.burn_in < 0:
            raise InvalidParameter("burn_in must be >= 0")
        if self.steps <= self.burn_in:
            raise EmptySample("no steps remain after burn-in")
        if self.chains < 1:
            raise InvalidParameter("need at least one chain")


@dataclass
class ChainResult:
    samples: GroupPoint  # batch shape (chains, kept steps)
    acceptance: float
    step_size: float
    tuned: bool

    @property
    def flat(self) -> GroupPoint:
        x, z = self.samples.x, self.samples.z
        return GroupPoint(x.reshape(-1, x.shape[-1]), z.reshape(-1, z.shape[-1]))


def _grad_and_value(model: EnergyModel, p: GroupPoint):
    b = energy_bundle(model, p)
    return b.value, b.grad


def _safe_energy(model: EnergyModel, q: GroupPoint):
    """Energy and gradient with the tube and non-finite values masked out."""
    r = np.linalg.norm(q.x, axis=-1)
    ok = r >= TUBE
    U = np.full(q.batch_shape, np.inf)
    G = np.zeros(q.x.shape)
    if np.any(ok):
        with np.errstate(all="ignore"):
            u, g = _grad_and_value(model, q[ok])
        U[ok], G[ok] = u, g
    ok &= np.isfinite(U) & np.all(np.isfinite(G), axis=-1)
    return U, G, ok


def resampled_starts(model: EnergyModel, chains: int, rng: np.random.Generator,
                     pool: int = 100_000) -> GroupPoint:
    """Start points drawn by importance resampling from the heavy-tailed proposal.

    Chains then start spread out roughly like mu_U, which matters when the
    density concentrates near a level set and angular mixing is slow.
    """
    g = model.group
    p = _draw_chunk(g, pool, rng, 1.0, 3.0)
    with np.errstate(all="ignore"):
        logw = -energy_value(model, p) - _proposal_logpdf(g, 1.0, 3.0, p.x, p.z)
    logw = np.where(np.isfinite(logw) & (np.linalg.norm(p.x, axis=-1) >= TUBE), logw, -np.inf)
    if not np.any(np.isfinite(logw)):
        raise NonfiniteEnergy("no finite-energy point found for chain initialization")
    w = np.exp(logw - logw.max())
    idx = rng.choice(pool, size=chains, p=w / w.sum())
    return p[idx]


def langevin_chain(model: EnergyModel, cfg: ChainConfig) -> ChainResult:
    """Run ``cfg.chains`` independent MALA chains.

    Without an explicit ``cfg.start`` the chains start from points drawn by
    sampling-importance-resampling from the target, which avoids long transients
    on ring-shaped energy wells.

    During burn-in a shared step size is adapted towards 57.4% acceptance
    (Robbins-Monro on log s). It is frozen afterwards, so the kept samples come
    from a fixed Markov kernel.
    """
    g = model.group
    rng = np.random.default_rng(cfg.seed)
    if cfg.start is None:
        p = resampled_starts(model, cfg.chains, rng)
    else:
        x0 = np.broadcast_to(np.asarray(cfg.start[0], float), (cfg.chains, g.n)).copy()
        z0 = np.broadcast_to(np.asarray(cfg.start[1], float), (cfg.chains, g.m)).copy()
        p = GroupPoint(x0, z0)
    if model.taming.singular and np.any(np.linalg.norm(p.x, axis=-1) < TUBE):
        raise StartOnSingularSet("chain start lies on {x = 0}")
    U, G, ok = _safe_energy(model, p)
    if not np.all(ok):
        raise NonfiniteEnergy("energy or its gradient is not finite at the start point")

    log_s = np.log(cfg.step_size)
    kept = cfg.steps - cfg.burn_in
    xs = np.empty((cfg.chains, kept, g.n))
    zs = np.empty((cfg.chains, kept, g.m))
    accepted = 0
    for t in range(cfg.steps):
        s = np.exp(log_s)
        xi = rng.standard_normal((cfg.chains, g.n))
        v = -s * G + np.sqrt(2.0 * s) * xi
        q = compose(g, p, GroupPoint(v, np.zeros((cfg.chains, g.m))))
        Uq, Gq, okq = _safe_energy(model, q)
        fwd = -np.sum((v + s * G) ** 2, axis=-1) / (4.0 * s)
        bwd = -np.sum((-v + s * Gq) ** 2, axis=-1) / (4.0 * s)
        with np.errstate(invalid="ignore"):
            log_a = np.where(okq, U - Uq + bwd - fwd, -np.inf)
        acc = np.log(rng.random(cfg.chains)) < log_a
        p = GroupPoint(np.where(acc[:, None], q.x, p.x), np.where(acc[:, None], q.z, p.z))
        U = np.where(acc, Uq, U)
        G = np.where(acc[:, None], Gq, G)
        if t < cfg.burn_in:
            if cfg.tune:
                rate = np.mean(np.minimum(1.0, np.exp(np.minimum(log_a, 0.0))))
                log_s += (rate - TARGET_ACCEPT) / (1.0 + t) ** 0.6
        else:
            k = t - cfg.burn_in
            xs[:, k], zs[:, k] = p.x, p.z
            accepted += int(acc.sum())
    return ChainResult(GroupPoint(xs, zs), accepted / (kept * cfg.chains),
                       float(np.exp(log_s)), cfg.tune)


# ------------------------------------------------------------ N-marginal oracle

def n_marginal_density(model: EnergyModel, N: np.ndarray, nodes: int = 400) -> np.ndarray:
    """Unnormalized density of N under mu_U for quartic norms with m = 1.

    With ``|x| = N cos(phi)^(1/2)`` and ``z = N^2 sin(phi)/sqrt(a)`` Lebesgue
    measure becomes ``|S^(n-1)| N^(n+1) cos(phi)^((n-2)/2) / sqrt(a) dN dphi``,
    and every supported energy depends on (N, |x|) only.
    """
    g = model.group
    if not isinstance(model.norm, TypeTwoSmooth) or g.m != 1:
        raise InvalidParameter("quadrature oracle needs a type2 norm with m = 1")
    a = model.norm.a
    phi, w = np.polynomial.legendre.leggauss(nodes)
    phi = 0.5 * np.pi * phi
    w = 0.5 * np.pi * w
    c = np.cos(phi)
    Ng = np.asarray(N, float)[:, None]
    r = Ng * np.sqrt(c)[None, :]
    zc = Ng ** 2 * np.sin(phi)[None, :] / np.sqrt(a)
    x = np.zeros(r.shape + (g.n,))
    x[..., 0] = r
    p = GroupPoint(x, zc[..., None])
    U = energy_value(model, p)
    sphere = 2.0 * np.pi ** (g.n / 2.0) / special.gamma(g.n / 2.0)
    jac = sphere * Ng ** (g.n + 1) * c[None, :] ** ((g.n - 2) / 2.0) / np.sqrt(a)
    with np.errstate(over="ignore", under="ignore"):
        return np.sum(w[None, :] * jac * np.exp(-U), axis=1)


@dataclass(frozen=True)
class MarginalTest:
    edges: np.ndarray
    observed: np.ndarray
    expected: np.ndarray
    statistic: float
    p_value: float
    thin: int
    tau: float
    effective: int


def integrated_autocorr_time(series: np.ndarray, c: float = 5.0) -> float:
    """Sokal windowed estimate, averaged over chains (rows)."""
    s = np.atleast_2d(series)
    s = s - s.mean(axis=1, keepdims=True)
    T = s.shape[1]
    f = np.fft.rfft(s, n=2 * T, axis=1)
    acf = np.fft.irfft(f * np.conj(f), axis=1)[:, :T]
    acf = acf.mean(axis=0)
    acf /= acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    for M in range(1, T):
        if M >= c * taus[M]:
            return float(taus[M])
    return float(taus[-1])


def n_marginal_test(model: EnergyModel, chain: ChainResult, bins: int = 20,
                    n_max: Optional[float] = None, grid: int = 4000) -> MarginalTest:
    """Chi-square comparison of the chain's N-histogram with quadrature.

    Bins have equal probability under the quadrature CDF. Each chain is
    thinned by five integrated autocorrelation times before counting.
    """
    N_chain = model.norm.value(model.group, chain.samples)
    if N_chain.size == 0:
        raise EmptySample("chain has no kept samples")
    tau = integrated_autocorr_time(N_chain)
    thin = max(1, int(np.ceil(THIN_FACTOR * tau)))
    N_thin = N_chain[:, ::thin].ravel()
    top = n_max or 1.5 * float(N_chain.max()) + 1.0
    Ng = np.linspace(0.0, top, grid + 1)[1:]
    dens = n_marginal_density(model, Ng)
    cdf = integrate.cumulative_trapezoid(dens, Ng, initial=0.0)
    cdf /= cdf[-1]
    qs = np.linspace(0.0, 1.0, bins + 1)[1:-1]
    inner = np.interp(qs, cdf, Ng)
    edges = np.concatenate([[0.0], inner, [np.inf]])
    observed = np.histogram(N_thin, bins=edges)[0].astype(float)
    expected = np.full(bins, N_thin.size / bins)
    res = stats.chisquare(observed, expected)
    return MarginalTest(edges, observed, expected, float(res.statistic), float(res.pvalue),
                        thin, tau, int(N_thin.size))


# ------------------------------------------------------- functional inequalities

@dataclass(frozen=True)
class TestFunction:
    """A function with closed-form horizontal gradient (batch in, batch out)."""

    name: str
    f: Callable[[EnergyModel, GroupPoint], np.ndarray]
    grad: Callable[[EnergyModel, GroupPoint], np.ndarray]


def coordinate_x(i: int) -> TestFunction:
    def grad(m, p):
        e = np.zeros(p.x.shape)
        e[..., i] = 1.0
        return e
    return TestFunction(f"x{i + 1}", lambda m, p: p.x[..., i], grad)


def clipped_z(k: int) -> TestFunction:
    """``tanh(z_k)``; X_i z_k = (Lambda_k x)_i / 2."""
    def grad(m, p):
        coeff = m.group.center_coefficients(p.x)[..., :, k]
        return (1.0 / np.cosh(p.z[..., k]) ** 2)[..., None] * coeff
    return TestFunction(f"tanh(z{k + 1})", lambda m, p: np.tanh(p.z[..., k]), grad)


def capped_norm(cap: float = 10.0) -> TestFunction:
    def f(m, p):
        return np.minimum(m.norm.value(m.group, p), cap)

    def grad(m, p):
        b = norm_bundle(m.group, m.norm, p)
        return np.where((b.value < cap)[..., None], b.grad, 0.0)
    return TestFunction(f"min(N,{cap:g})", f, grad)


def exp_neg_norm() -> TestFunction:
    def grad(m, p):
        b = norm_bundle(m.group, m.norm, p)
        return -np.exp(-b.value)[..., None] * b.grad
    return TestFunction("exp(-N)", lambda m, p: np.exp(-m.norm.value(m.group, p)), grad)


def constant_one() -> TestFunction:
    return TestFunction("1", lambda m, p: np.ones(p.batch_shape),
                        lambda m, p: np.zeros(p.x.shape))


def dilating_exponential(t: float, cap: float = 30.0) -> TestFunction:
    """``exp(min(t N^2 / 2, cap))``."""
    def f(m, p):
        N = m.norm.value(m.group, p)
        return np.exp(np.minimum(0.5 * t * N ** 2, cap))

    def grad(m, p):
        b = norm_bundle(m.group, m.norm, p)
        expo = 0.5 * t * b.value ** 2
        val = np.exp(np.minimum(expo, cap))
        return np.where((expo < cap)[..., None], (val * t * b.value)[..., None] * b.grad, 0.0)
    return TestFunction(f"exp(min({t:g} N^2/2,{cap:g}))", f, grad)


def default_test_functions(model: EnergyModel) -> list[TestFunction]:
    g = model.group
    out = [coordinate_x(i) for i in range(g.n)]
    out += [clipped_z(k) for k in range(g.m)]
    out += [capped_norm(), exp_neg_norm()]
    return out


@dataclass(frozen=True)
class InequalityReport:
    worst: float
    worst_function: str
    table: dict

    def to_dict(self):
        return {"worst": self.worst, "worst_function": self.worst_function, "table": self.table}


def _prepare(samples: GroupPoint, tests, min_samples: int):
    if len(samples) < min_samples:
        raise EmptySample(f"need at least {min_samples} samples, got {len(samples)}")
    if not tests:
        raise EmptySample("test-function set is empty")


def _finish(rows: dict) -> InequalityReport:
    valid = {k: v for k, v in rows.items() if v is not None}
    if not valid:
        return InequalityReport(float("nan"), "", rows)
    name = max(valid, key=valid.get)
    return InequalityReport(float(valid[name]), name, rows)


def empirical_poincare(model: EnergyModel, samples: GroupPoint,
                       tests: Optional[Sequence[TestFunction]] = None,
                       min_samples: int = 10_000) -> InequalityReport:
    """``Var(f) / mean |grad f|^2`` per test function; 0/0 cases are skipped (None)."""
    tests = default_test_functions(model) if tests is None else list(tests)
    _prepare(samples, tests, min_samples)
    rows = {}
    for tf in tests:
        f = tf.f(model, samples)
        energy = float(np.mean(np.sum(tf.grad(model, samples) ** 2, axis=-1)))
        var = float(np.var(f))
        rows[tf.name] = None if energy == 0.0 else var / energy
    return _finish(rows)


def entropy_of_square(f: np.ndarray) -> float:
    f2 = f ** 2
    m = f2.mean()
    if m == 0.0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(f2 > 0, f2 * np.log(f2 / m), 0.0)
    return float(terms.mean())


def empirical_logsobolev(model: EnergyModel, samples: GroupPoint,
                         tests: Optional[Sequence[TestFunction]] = None,
                         min_samples: int = 10_000) -> InequalityReport:
    """``Ent(f^2) / mean |grad f|^2`` per test function; 0/0 cases are skipped (None)."""
    tests = default_test_functions(model) if tests is None else list(tests)
    _prepare(samples, tests, min_samples)
    rows = {}
    for tf in tests:
        f = tf.f(model, samples)
        energy = float(np.mean(np.sum(tf.grad(model, samples) ** 2, axis=-1)))
        ent = entropy_of_square(f)
        rows[tf.name] = None if energy == 0.0 else ent / energy
    return _finish(rows)
