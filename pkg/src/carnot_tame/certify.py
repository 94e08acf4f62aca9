"""Hypothesis checks, coercivity scans and the perturbation certificate.

Everything here is evidence, not proof: asymptotic conditions on V are decided
by exact exponent algebra for ``Power`` and by log-log trend probing otherwise,
and "diverges" / "bounded" verdicts come from finite radius ladders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import EmptySample, InvalidParameter, UnknownFamily
from .group import GroupPoint, Step2Group, dilate, heisenberg, homogeneous_dimension
from .norms import (
    KaplanGeneralizedHeisenberg,
    NormSpec,
    TypeTwoSmooth,
    gradient_bound,
    kaplan_residual,
    lemma_constants,
    norm_bundle,
    radial_derivative_min,
    unit_level_set,
)
from .outer import OuterFunction, Power
from .taming import EnergyModel, energy_bundle, v2_from_bundle
from .parallel import map_ordered

X_EXCLUSION = 1e-6
KAPLAN_TOL = 1e-8


# ------------------------------------------------------------------ verdicts

@dataclass(frozen=True)
class HypothesisVerdict:
    """``status`` is ``pass`` (margin > 0), ``weak-pass`` (margin = 0 on a
    non-strict condition) or ``fail``."""

    name: str
    satisfied: bool
    margin: float
    status: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "satisfied": self.satisfied, "margin": _num(self.margin),
                "status": self.status, "detail": self.detail}


def _num(v):
    v = float(v)
    if np.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")


def verdict_from_margin(name: str, margin: float, strict: bool, detail: str = "") -> HypothesisVerdict:
    if margin > 0:
        status = "pass"
    elif margin == 0 and not strict:
        status = "weak-pass"
    else:
        status = "fail"
    return HypothesisVerdict(name, status != "fail", float(margin), status, detail)


# ------------------------------------------------------------ outer conditions

@dataclass(frozen=True)
class OuterCondition:
    """An asymptotic condition on V.

    ``power_margin(p, sigma)`` is the exact margin for ``V = s^p``.
    ``probe(V, s, sigma)`` returns the probed quantity and ``mode`` says how its
    trend is scored: ``grow`` (tends to infinity), ``floor`` (bounded below by
    a positive constant), ``shrink`` (tends to zero) or ``infimum`` (the margin
    is the minimum itself).
    """

    name: str
    label: str
    power_margin: Callable[[float, Optional[float]], float]
    probe: Callable
    mode: str
    strict: bool
    needs_sigma: bool = False


def _v(V, s):
    return V.derivatives(s)


def _ratio_power_v1sq_v2(p, sigma):
    # (V')^2/V'' = (p/(p-1)) s^p; p = 1 has V'' = 0 (limit +inf)
    return p if p >= 1 else p - 1.0


def _ratio_power_v1sq_v2_plus(p, sigma):
    # with V''_+ the p < 1 case has V''_+ = 0 and the ratio is +inf
    return p


OUTER_CONDITIONS = {
    "v1_s7": OuterCondition(
        "v1_s7", "V'(s) s^-7 >= D > 0", lambda p, s: p - 8.0,
        lambda V, s, sig: _v(V, s)[1] * s ** -7.0, "floor", False),
    "sv1_bv": OuterCondition(
        "sv1_bv", "s V'(s) >= B V(s), B > 0", lambda p, s: p,
        lambda V, s, sig: s * _v(V, s)[1] / _v(V, s)[0], "infimum", True),
    "v1sq_v2": OuterCondition(
        "v1sq_v2", "(V')^2 / V'' -> inf", _ratio_power_v1sq_v2,
        lambda V, s, sig: _v(V, s)[1] ** 2 / _v(V, s)[2], "grow", True),
    "v1sq_v2plus": OuterCondition(
        "v1sq_v2plus", "(V')^2 / V''_+ -> inf", _ratio_power_v1sq_v2_plus,
        lambda V, s, sig: _v(V, s)[1] ** 2 / np.maximum(_v(V, s)[2], 0.0), "grow", True),
    "v1_s2": OuterCondition(
        "v1_s2", "V'(s) / s^2 -> inf", lambda p, s: p - 3.0,
        lambda V, s, sig: _v(V, s)[1] / s ** 2, "grow", True),
    "eps_v1sq": OuterCondition(
        "eps_v1sq", "eps (V')^2 >= max(V, s V')", lambda p, s: p - 2.0,
        lambda V, s, sig: _v(V, s)[1] ** 2 / np.maximum(_v(V, s)[0], s * _v(V, s)[1]),
        "floor", False),
    "v_v1": OuterCondition(
        "v_v1", "V / V' -> 0", lambda p, s: -1.0,
        lambda V, s, sig: _v(V, s)[0] / _v(V, s)[1], "shrink", True),
    "v_v2": OuterCondition(
        "v_v2", "V / V'' -> 0", lambda p, s: -2.0,
        lambda V, s, sig: _v(V, s)[0] / _v(V, s)[2], "shrink", True),
    "poincare_growth": OuterCondition(
        "poincare_growth", "s^-2(1+sigma) ((V')^2/4 - V''/2) -> inf",
        lambda p, s: p - 2.0 - s,
        lambda V, s, sig: s ** (-2.0 * (1.0 + sig)) * (0.25 * _v(V, s)[1] ** 2 - 0.5 * _v(V, s)[2]),
        "grow", True, needs_sigma=True),
}


@dataclass(frozen=True)
class TheoremRules:
    tag: str
    title: str
    outer: tuple
    geometry: tuple


THEOREMS = {
    "heis_add": TheoremRules("heis_add", "additive taming on the Heisenberg group (LSI)",
                             ("v1_s7", "sv1_bv", "v1sq_v2"),
                             ("heisenberg_group", "kaplan_identity")),
    "type2_add": TheoremRules("type2_add", "additive taming on type-2 groups (LSI / Poincare)",
                              ("v1_s7", "sv1_bv", "v1sq_v2", "poincare_growth"),
                              ("lemma_A_ge_1", "sigma_in_0_n_minus_2")),
    "type2_mult": TheoremRules("type2_mult", "multiplicative taming on type-2 groups (LSI)",
                               ("v1_s2",), ("mult_case_i_or_ii",)),
    "kaplan_mult": TheoremRules("kaplan_mult", "multiplicative taming with a Kaplan norm (LSI)",
                                ("v1sq_v2plus", "eps_v1sq"),
                                ("kaplan_identity", "sigma_le_1", "C_lt_sigma", "n_minus_3_ge_2C")),
    "mult2": TheoremRules("mult2", "multiplicative taming II (LSI)",
                          ("v_v1", "v_v2"), ("kaplan_identity", "x_dot_grad_nonneg")),
    "poincare_log": TheoremRules("poincare_log", "logarithmic additive taming (Poincare)",
                                 ("v1_s2",), ("kaplan_identity", "n_gt_2")),
}


def _slope(s, q):
    half = len(s) // 2
    return float(np.polyfit(np.log(s[half:]), np.log(q[half:]), 1)[0])


def probe_condition(cond: OuterCondition, V: OuterFunction, sigma=None,
                    lo: float = 1.0, hi: float = 6.0, points: int = 51) -> tuple[float, str]:
    """Numeric margin from the log-log trend of the probed quantity on s in 10^[lo, hi]."""
    s = np.logspace(lo, hi, points)
    with np.errstate(all="ignore"):
        q = np.asarray(cond.probe(V, s, sigma), dtype=float)
    ok = np.isfinite(q)
    if ok.sum() < 8 and ok.any():
        # shrink the window to where V is representable
        top = np.log10(s[ok].max())
        s = np.logspace(lo, max(top, lo + 0.5), points)
        with np.errstate(all="ignore"):
            q = np.asarray(cond.probe(V, s, sigma), dtype=float)
        ok = np.isfinite(q)
    if ok.sum() < 8:
        if cond.mode == "grow" and np.all(np.isinf(q[~ok]) & (q[~ok] > 0)) and (~ok).any():
            return float("inf"), "probe saturated at +inf"
        return -1.0, "probe not representable on the window"
    s, q = s[ok], q[ok]
    window = f"s in [{s[0]:.3g}, {s[-1]:.3g}]"
    if cond.mode == "infimum":
        return float(q[len(q) // 2:].min()), f"inf over upper {window}"
    if np.any(q[len(q) // 2:] <= 0):
        return -1.0, f"quantity not positive on upper {window}"
    slope = round(_slope(s, q), 6)
    if cond.mode == "shrink":
        return -slope, f"log-log slope {slope} on {window}"
    return slope, f"log-log slope {slope} on {window}"


def check_outer_conditions(V: OuterFunction, theorem: str, sigma: Optional[float] = None,
                           allow_numeric: bool = True) -> list[HypothesisVerdict]:
    """Verdicts for the V-conditions of ``theorem``.

    ``Power`` margins are exact. Other families raise :class:`UnknownFamily`
    unless ``allow_numeric`` is set, in which case trends are probed.
    """
    rules = _rules(theorem)
    out = []
    for name in rules.outer:
        cond = OUTER_CONDITIONS[name]
        if cond.needs_sigma and sigma is None:
            continue
        if isinstance(V, Power):
            margin = cond.power_margin(V.p, sigma)
            detail = f"exact for s^{V.p:g}"
            if name == "eps_v1sq" and margin >= 0:
                detail += f"; eps = {1.0 / V.p:g} works for s >= 1"
            if name == "sv1_bv":
                detail += f"; B = {V.p:g}"
        elif allow_numeric:
            margin, detail = probe_condition(cond, V, sigma)
            detail = "numeric " + detail
        else:
            raise UnknownFamily(f"no closed-form margins for outer family {V.family!r}")
        out.append(verdict_from_margin(cond.label, margin, cond.strict, detail))
    return out


def _rules(theorem: str) -> TheoremRules:
    try:
        return THEOREMS[theorem]
    except KeyError:
        raise UnknownFamily(f"unknown theorem tag {theorem!r}; known: {sorted(THEOREMS)}") from None


# --------------------------------------------------------- geometry conditions

def _taming_sigma(model: EnergyModel) -> Optional[float]:
    return getattr(model.taming, "sigma", None)


def check_geometry_conditions(model: EnergyModel, theorem: str, sample_size: int,
                              seed: int) -> tuple[list[HypothesisVerdict], dict]:
    """Verdicts for the group/norm/taming hypotheses, plus the constants used."""
    rules = _rules(theorem)
    g, norm = model.group, model.norm
    n = g.n
    sigma = _taming_sigma(model)
    constants: dict = {"n": n, "Q": homogeneous_dimension(g)}
    out: list[HypothesisVerdict] = []

    def need_sigma(label):
        if sigma is None:
            out.append(HypothesisVerdict(label, False, -1.0, "fail",
                                         "taming has no sigma parameter"))
            return False
        return True

    lemma = None
    if any(r in rules.geometry for r in ("lemma_A_ge_1", "mult_case_i_or_ii")):
        if isinstance(norm, (TypeTwoSmooth, KaplanGeneralizedHeisenberg)):
            lemma = lemma_constants(g, norm, sample_size, seed)
            constants.update(A_est=lemma.A_est, C_est=lemma.C_est, B_est=lemma.B_est)
    C = None
    if any(r in rules.geometry for r in ("C_lt_sigma", "n_minus_3_ge_2C")):
        C = gradient_bound(g, norm, sample_size, seed)
        constants["C_sup_grad"] = C

    for rule in rules.geometry:
        if rule == "heisenberg_group":
            ok = g.n == 2 and g.is_heisenberg_like()
            out.append(HypothesisVerdict("group is Heisenberg (orthogonal Lambda, m = 1)", ok,
                                         1.0 if ok else -1.0, "pass" if ok else "fail",
                                         f"n = {g.n}, m = {g.m}"))
        elif rule == "kaplan_identity":
            p = unit_level_set(g, norm, min(sample_size, 2000), seed + 1)
            res = float(np.abs(kaplan_residual(g, norm, p)).max())
            constants["kaplan_residual_max"] = res
            out.append(verdict_from_margin("norm is Kaplan (Delta N = (Q-1)|grad N|^2/N)",
                                           KAPLAN_TOL - res, True,
                                           f"max |residual| = {res:.3e} on the unit level set"))
        elif rule == "lemma_A_ge_1":
            if lemma is None:
                out.append(HypothesisVerdict("A >= 1", False, -1.0, "fail",
                                             "lemma constants need a quartic norm"))
            else:
                m = round(lemma.A_est - 1.0, 6)
                out.append(verdict_from_margin("A >= 1", m, False,
                                               f"A_est = {lemma.A_est:.8g} (rounded to 1e-6)"))
        elif rule == "sigma_in_0_n_minus_2":
            if need_sigma("sigma in (0, n-2)"):
                m = min(sigma, n - 2 - sigma)
                out.append(verdict_from_margin("sigma in (0, n-2)", m, True,
                                               f"sigma = {sigma:g}, n = {n}"))
        elif rule == "mult_case_i_or_ii":
            if lemma is None or not need_sigma("case (i) or (ii)"):
                if lemma is None:
                    out.append(HypothesisVerdict("case (i) or (ii)", False, -1.0, "fail",
                                                 "lemma constants need a quartic norm"))
                continue
            A = round(lemma.A_est, 6)
            case_i = (A >= 1 and sigma != 1) or (sigma == 1 and A > 1)
            case_ii = A <= 1 and n - 2 - sigma >= 2
            ok = case_i or case_ii
            out.append(HypothesisVerdict(
                "case (i) or (ii)", ok, 1.0 if ok else -1.0, "pass" if ok else "fail",
                f"A_est = {A:g}, sigma = {sigma:g}, n = {n}; case (i) {case_i}, case (ii) {case_ii}"))
        elif rule == "sigma_le_1":
            if need_sigma("sigma <= 1"):
                out.append(verdict_from_margin("sigma <= 1", 1.0 - sigma, False, f"sigma = {sigma:g}"))
        elif rule == "C_lt_sigma":
            if need_sigma("C < sigma"):
                m = round(sigma - C, 6)
                out.append(verdict_from_margin("C < sigma", m, True, f"C = {C:.8g}, sigma = {sigma:g}"))
        elif rule == "n_minus_3_ge_2C":
            m = round(n - 3 - 2 * C, 6)
            out.append(verdict_from_margin("n - 3 >= 2C", m, False, f"n = {n}, C = {C:.8g}"))
        elif rule == "x_dot_grad_nonneg":
            v = radial_derivative_min(g, norm, sample_size, seed + 2)
            constants["min_x_dot_grad"] = v
            m = 0.0 if v >= -1e-12 else v
            out.append(verdict_from_margin("x . grad N >= 0", m, False,
                                           f"min over {sample_size} level-set samples = {v:.3e}"))
        elif rule == "n_gt_2":
            out.append(verdict_from_margin("n > 2", n - 2, True, f"n = {n}"))
        else:
            raise UnknownFamily(f"unknown geometry rule {rule!r}")
    return out, constants


# ---------------------------------------------------------------------- scans

@dataclass(frozen=True)
class ScanRow:
    radius: float
    min_v2: float
    argmin: tuple
    dominance: float
    excluded_fraction: float


@dataclass(frozen=True)
class ScanTable:
    rows: tuple
    verdict: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "detail": self.detail,
                "rows": [{"radius": r.radius, "min_v2": _num(r.min_v2), "argmin": list(r.argmin),
                          "dominance": _num(r.dominance),
                          "excluded_fraction": r.excluded_fraction} for r in self.rows]}


def _shell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def anchor_points(g: Step2Group, norm: NormSpec) -> GroupPoint:
    """Unit-level-set points along the center axes and the horizontal axes."""
    dirs = []
    for k in range(g.m):
        for sgn in (1.0, -1.0):
            z = np.zeros(g.m)
            z[k] = sgn
            dirs.append((np.zeros(g.n), z))
    for i in range(g.n):
        for sgn in (1.0, -1.0):
            x = np.zeros(g.n)
            x[i] = sgn
            dirs.append((x, np.zeros(g.m)))
    p = GroupPoint(np.array([d[0] for d in dirs]), np.array([d[1] for d in dirs]))
    return dilate(g, p, 1.0 / norm.value(g, p))


def shell_points(model: EnergyModel, radius: float, samples: int, seed: int,
                 index: int) -> GroupPoint:
    g = model.group
    base = unit_level_set(g, model.norm, samples, _shell_seed(seed, index))
    anchors = anchor_points(g, model.norm)
    p = GroupPoint(np.concatenate([base.x, anchors.x]), np.concatenate([base.z, anchors.z]))
    return dilate(g, p, radius)


def _shell_stats(model: EnergyModel, p: GroupPoint, radius: float):
    r = np.linalg.norm(p.x, axis=-1)
    keep = np.ones(len(p), bool)
    if model.taming.singular:
        keep = r / radius >= X_EXCLUSION
    if not np.any(keep):
        raise EmptySample("every shell sample fell inside the exclusion tube")
    q = p[keep]
    b = energy_bundle(model, q)
    v2 = v2_from_bundle(b)
    i = int(np.argmin(v2))
    dom = (b.grad_sq + b.value) / (1.0 + np.maximum(v2, 0.0))
    argmin = tuple(float(c) for c in np.concatenate([q.x[i], q.z[i]]))
    return float(v2[i]), argmin, float(dom.max()), float(1.0 - keep.mean())


def _check_ladder(radii) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size < 4:
        raise InvalidParameter("radius ladder needs at least 4 rungs")
    if np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise InvalidParameter("radii must be positive and strictly increasing")
    return radii


def _scan_rows(model, radii, samples, seed, threads):
    if samples < 1:
        raise EmptySample("samples per shell must be positive")

    def work(item):
        i, R = item
        p = shell_points(model, R, samples, seed, i)
        mn, arg, dom, exc = _shell_stats(model, p, R)
        return ScanRow(float(R), mn, arg, dom, exc)

    return tuple(map_ordered(work, list(enumerate(radii)), threads))


def divergence_verdict(minima) -> tuple[str, str]:
    minima = np.asarray(minima, dtype=float)
    k = minima.size
    top = minima[k // 2:] if k % 2 == 0 else minima[(k - 1) // 2:]
    monotone = bool(np.all(np.diff(top) > 0))
    growth = bool(minima[-1] >= 10.0 * max(minima[0], 1.0))
    verdict = "diverges" if (monotone and growth) else "not diverging"
    return verdict, f"top-half strictly increasing: {monotone}; top >= 10 max(bottom, 1): {growth}"


def divergence_scan(model: EnergyModel, radii, samples: int, seed: int,
                    threads: int = 1) -> ScanTable:
    radii = _check_ladder(radii)
    rows = _scan_rows(model, radii, samples, seed, threads)
    verdict, detail = divergence_verdict([r.min_v2 for r in rows])
    return ScanTable(rows, verdict, detail)


@dataclass(frozen=True)
class DominanceResult:
    ratios: tuple
    bounded: bool
    a_emp: float
    radii: tuple

    def to_dict(self):
        return {"radii": list(self.radii), "ratios": [_num(r) for r in self.ratios],
                "bounded": self.bounded, "a_emp": _num(self.a_emp)}


DOMINANCE_SLACK = 0.05


def dominance_verdict(ratios) -> bool:
    """Bounded when the shell sup-ratios do not increase over the top half.

    A relative slack of 5% absorbs sampling noise in the per-shell supremum.
    """
    r = np.asarray(ratios, dtype=float)
    if not np.all(np.isfinite(r)):
        return False
    top = r[(r.size - 1) // 2:] if r.size % 2 else r[r.size // 2:]
    return bool(np.all(top[1:] <= top[:-1] * (1.0 + DOMINANCE_SLACK)))


def dominance_scan(model: EnergyModel, radii, samples: int, seed: int,
                   threads: int = 1, rows=None) -> DominanceResult:
    radii = _check_ladder(radii)
    rows = rows if rows is not None else _scan_rows(model, radii, samples, seed, threads)
    ratios = tuple(r.dominance for r in rows)
    return DominanceResult(ratios, dominance_verdict(ratios), float(max(ratios)),
                           tuple(float(r) for r in radii))


# -------------------------------------------------------- cancellation locus

@dataclass(frozen=True)
class CancellationScan:
    roots: tuple
    predicted_radius: float
    cell: tuple
    on_locus: bool
    min_scaled_bound: float
    certified_points: int


def cancellation_scan(sigma: float, beta: float, a: float = 16.0, r_max: float = 3.0,
                      z_max: float = 3.0, grid: int = 301) -> CancellationScan:
    """Zeros of ``|beta grad N + grad xi|^2`` on Heisenberg, xi = |x|^-sigma.

    The function depends on (|x|, z) only, so the scan runs on the half-plane
    x = (r, 0). Grid local minima are polished with Nelder-Mead and kept as
    roots when the value drops below 1e-12. Away from the roots the lower
    bound ``g N^6 >= 1`` is checked on the region where it is expected: small
    |x| (at most r0 = (sigma/(1+beta))^(1/(1+sigma))) with N >= 1, and larger
    |x| with z^2 >= 1/(a beta^2 r0^2).
    """
    g = heisenberg()
    norm = TypeTwoSmooth(a)

    def gfun(r, z):
        r = np.atleast_1d(r).astype(float)
        z = np.atleast_1d(z).astype(float)
        p = GroupPoint(np.stack([r, np.zeros_like(r)], -1), z[:, None])
        nb = norm_bundle(g, norm, p)
        grad_xi = (-sigma * r ** (-sigma - 1.0))[:, None] * p.x / r[:, None]
        return np.sum((beta * nb.grad + grad_xi) ** 2, axis=-1), nb.value

    rs = np.linspace(r_max / grid, r_max, grid)
    zs = np.linspace(-z_max, z_max, grid)
    dr, dz = rs[1] - rs[0], zs[1] - zs[0]
    R, Z = np.meshgrid(rs, zs, indexing="ij")
    G, N = gfun(R.ravel(), Z.ravel())
    G, N = G.reshape(R.shape), N.reshape(R.shape)

    padded = np.pad(G, 1, constant_values=np.inf)
    is_min = np.ones_like(G, bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                is_min &= G <= padded[1 + di: 1 + di + grid, 1 + dj: 1 + dj + grid]
    roots = []
    for i, j in zip(*np.nonzero(is_min)):
        res = optimize.minimize(lambda v: gfun(v[0], v[1])[0][0], [rs[i], zs[j]],
                                method="Nelder-Mead", bounds=[(rs[0], r_max), (-z_max, z_max)],
                                options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 4000})
        if res.fun < 1e-12:
            roots.append((float(res.x[0]), float(res.x[1]), float(res.fun)))
    predicted = (sigma / beta) ** (1.0 / (1.0 + sigma))
    on_locus = bool(roots) and all(abs(r - predicted) <= dr and abs(z) <= dz for r, z, _ in roots)

    r0 = (sigma / (1.0 + beta)) ** (1.0 / (1.0 + sigma))
    certified = ((R <= r0) & (N >= 1.0)) | ((R >= r0) & (Z ** 2 >= 1.0 / (a * beta ** 2 * r0 ** 2)))
    scaled = G * N ** 6
    min_scaled = float(scaled[certified].min()) if certified.any() else float("nan")
    return CancellationScan(tuple(roots), predicted, (float(dr), float(dz)), on_locus,
                            min_scaled, int(certified.sum()))


# --------------------------------------------------------------- perturbation

def doubling_constant(V: OuterFunction, c: float) -> float:
    """Smallest ``A_c`` with ``|V'(c^2 t)| <= A_c |V'(t)|``."""
    if not c >= 1.0:
        raise InvalidParameter(f"c must be >= 1, got {c}")
    if c == 1.0:
        return 1.0
    if isinstance(V, Power):
        return float(c ** (2.0 * (V.p - 1.0)))
    t = np.logspace(-3, 6, 901)
    with np.errstate(all="ignore"):
        ratio = np.abs(V.derivatives(c * c * t)[1]) / np.abs(V.derivatives(t)[1])
    ratio = ratio[np.isfinite(ratio)]
    if ratio.size == 0:
        raise UnknownFamily("doubling ratio not representable on t in [1e-3, 1e6]")
    return float(ratio.max())


@dataclass(frozen=True)
class PerturbationCertificate:
    q: float
    alpha_q: float
    eps: float
    A_c: float
    coefficient: float
    verdict: bool
    gradient_constant: Optional[float] = None
    D: Optional[float] = None

    def to_dict(self):
        return {k: (_num(v) if isinstance(v, float) else v) for k, v in self.__dict__.items()}


def perturbation_certificate(q: float, alpha_q: float, eps: float, A_c: float,
                             C: Optional[float] = None, D: Optional[float] = None
                             ) -> PerturbationCertificate:
    """Reduced coefficient ``alpha_q - (2 A_c eps / q)^q / 2`` for the perturbed norm.

    ``C`` and ``D`` are the constants of the unperturbed bound; the perturbed
    bound has gradient constant ``2^(q-1) C`` and the same ``D``.
    """
    if not q >= 1:
        raise InvalidParameter(f"q must be >= 1, got {q}")
    if not alpha_q > 0:
        raise InvalidParameter(f"alpha_q must be positive, got {alpha_q}")
    if not eps >= 0:
        raise InvalidParameter(f"eps must be >= 0, got {eps}")
    if not A_c >= 1:
        raise InvalidParameter(f"A_c must be >= 1, got {A_c}")
    if q == 1:
        coeff = alpha_q - A_c * eps
    else:
        coeff = alpha_q - 0.5 * (2.0 * A_c * eps / q) ** q
    gc = None if C is None else float(2.0 ** (q - 1.0) * C)
    return PerturbationCertificate(float(q), float(alpha_q), float(eps), float(A_c),
                                   float(coeff), bool(coeff > 0), gc, D)


def alpha_q_estimate(model: EnergyModel, q: int, radii, samples: int, seed: int) -> float:
    """Empirical ``inf V_q / |U'(K0)|^q`` over large shells (untamed models only).

    ``V_1 = U'|grad K0|^2 - Delta K0`` and ``V_2`` is the ground-state potential.
    """
    if q not in (1, 2):
        raise InvalidParameter("alpha_q is estimated for q in {1, 2}")
    g = model.group
    best = np.inf
    for i, R in enumerate(np.asarray(radii, float)):
        p = shell_points(model, R, samples, seed, i)
        nb = norm_bundle(g, model.norm, p)
        _, u1, _ = model.outer.derivatives(nb.value)
        if q == 1:
            vq = u1 * nb.grad_sq - nb.laplacian
        else:
            vq = v2_from_bundle(energy_bundle(model, p))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = vq / np.abs(u1) ** q
        best = min(best, float(np.nanmin(ratio)))
    return best
