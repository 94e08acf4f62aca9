"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import io
import os
import sys
import tempfile
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from carnot_tame import certify as cert
from carnot_tame.cli import main as cli_main
from carnot_tame.dynamics import ChainConfig, langevin_chain, n_marginal_test
from carnot_tame.group import (
    GroupPoint,
    compose,
    dilate,
    generalized_heisenberg,
    heisenberg,
    invert,
    random_points,
)
from carnot_tame.norms import (
    KaplanGeneralizedHeisenberg,
    PerspectiveComposite,
    TypeTwoAugmented,
    TypeTwoSmooth,
    gradient_bound,
    kaplan_residual,
    norm_bundle,
    perturbation_gap,
    zeta_affine,
)
from carnot_tame.outer import Power
from carnot_tame.spectrum import SpectrumConfig, solve_spectrum, weighted_box
from carnot_tame.group import abelian
from carnot_tame.taming import (
    AdditiveLog,
    AdditivePower,
    EnergyModel,
    MultiplicativeII,
    MultiplicativePower,
    NoTaming,
    energy_bundle,
    v2_closed,
    v2_fd_oracle,
)

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
HEIS = heisenberg()
N16 = TypeTwoSmooth(16.0)


def tamed_model(p: float = 8.0) -> EnergyModel:
    return EnergyModel(HEIS, N16, AdditivePower(1.0, 1.0), Power(p))


def untamed_model() -> EnergyModel:
    return EnergyModel(HEIS, N16, NoTaming(), Power(2.0))


def _timed(fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    return ok, detail, time.perf_counter() - t0


# ------------------------------------------------------------------ criteria

def c01_group_axioms():
    worst = 0.0
    for g in (HEIS, generalized_heisenberg([1.0, -0.5, 2.0])):
        rng = np.random.default_rng(1)
        p, q, r = (random_points(g, 1000, rng) for _ in range(3))
        e = GroupPoint(np.zeros((1000, g.n)), np.zeros((1000, g.m)))
        lam = np.exp(rng.uniform(-1, 1, 1000))

        def dev(a, b):
            return max(np.abs(a.x - b.x).max(), np.abs(a.z - b.z).max())

        worst = max(worst,
                    dev(compose(g, compose(g, p, q), r), compose(g, p, compose(g, q, r))),
                    dev(compose(g, p, e), p), dev(compose(g, e, p), p),
                    dev(compose(g, p, invert(g, p)), e), dev(compose(g, invert(g, p), p), e),
                    dev(dilate(g, compose(g, p, q), lam),
                        compose(g, dilate(g, p, lam), dilate(g, q, lam))))
    return worst <= 1e-12, f"max deviation {worst:.2e} (tol 1e-12)"


def c02_kaplan_identity():
    rng = np.random.default_rng(2)
    res = {}
    p = random_points(HEIS, 100, rng)
    res["heisenberg a=16"] = np.abs(kaplan_residual(HEIS, N16, p)).max()
    for L in ([1.0, 1.0], [1.0, -1.0], [0.5]):
        g = generalized_heisenberg(L)
        q = random_points(g, 100, rng)
        res[f"gen. Heisenberg L={L}"] = np.abs(kaplan_residual(g, KaplanGeneralizedHeisenberg(), q)).max()
    neg = np.abs(kaplan_residual(HEIS, TypeTwoSmooth(1.0), p)).max()
    ok = max(res.values()) <= 1e-8 and neg > 1e-3
    parts = ", ".join(f"{k}: {v:.1e}" for k, v in res.items())
    return ok, f"{parts}; a=1 control max {neg:.3g} (> 1e-3)"


def c03_heisenberg_relations():
    rng = np.random.default_rng(3)
    p = random_points(HEIS, 1000, rng)
    b = norm_bundle(HEIS, N16, p)
    r = np.linalg.norm(p.x, axis=-1)
    N = b.value
    e1 = np.abs(np.sqrt(b.grad_sq) - r / N).max()
    radial = np.sum(p.x * b.grad, axis=-1)
    e2 = np.abs(radial / r - r ** 3 / N ** 3).max()
    lit = np.abs(radial - r ** 3 / N ** 3).max()
    return max(e1, e2) <= 1e-10, (f"| |grad N| - |x|/N | <= {e1:.1e}; "
                                  f"| (x/|x|).grad N - |x|^3/N^3 | <= {e2:.1e} "
                                  f"(unnormalized x.grad N differs by up to {lit:.2g})")


def c04_generalized_heisenberg_identities():
    rng = np.random.default_rng(4)
    worst_lit, worst_true, min_radial = 0.0, 0.0, np.inf
    for _ in range(3):
        L = rng.uniform(0.3, 2.0, 2) * rng.choice([-1.0, 1.0], 2)
        g = generalized_heisenberg(L)
        p = random_points(g, 1000, rng)
        b = norm_bundle(g, KaplanGeneralizedHeisenberg(), p)
        k = len(L)
        rk = p.x[:, :k] ** 2 + p.x[:, k:] ** 2
        stated = np.sum(np.abs(L) * rk, axis=-1) / b.value ** 2
        corrected = 4.0 * np.sum(L ** 2 * rk, axis=-1) / b.value ** 2
        worst_lit = max(worst_lit, np.abs(b.grad_sq - stated).max())
        worst_true = max(worst_true, np.abs(b.grad_sq - corrected).max())
        min_radial = min(min_radial, np.sum(p.x * b.grad, axis=-1).min())
    ok = worst_lit <= 1e-10 and min_radial >= -1e-10
    return ok, (f"stated |grad N|^2 identity max error {worst_lit:.3g}; "
                f"4 sum L_k^2 r_k^2 / N^2 max error {worst_true:.1e}; "
                f"min x.grad N = {min_radial:.3g} (>= 0)")


def _fd_cells():
    gh = generalized_heisenberg([1.0, 1.0])
    norms = [(HEIS, N16), (gh, KaplanGeneralizedHeisenberg())]
    tamings = [NoTaming(), AdditivePower(1.0, 1.0), AdditiveLog(1.0), MultiplicativePower(1.0),
               MultiplicativeII(0.5, 0.5)]
    for g, norm in norms:
        for tam in tamings:
            for V in (Power(2.0), Power(8.0)):
                yield EnergyModel(g, norm, tam, V)


def _fd_points(model, size, seed):
    rng = np.random.default_rng(seed)
    p = random_points(model.group, 3 * size, rng)
    r = np.linalg.norm(p.x, axis=-1)
    keep = r > 0.1
    if isinstance(model.taming, MultiplicativeII):
        keep &= np.abs(r - 1.0) > 0.01
    return p[np.nonzero(keep)[0][:size]]


def c05_fd_oracle():
    worst, factors, cells = 0.0, [], 0
    for i, model in enumerate(_fd_cells()):
        p = _fd_points(model, 1000, 50 + i)
        b = energy_bundle(model, p)
        scale = 0.25 * b.grad_sq + 0.5 * np.abs(b.laplacian)
        exact = v2_closed(model, p)
        err = np.abs(v2_fd_oracle(model, p) - exact) / scale
        worst = max(worst, float(err.max()))
        sub = p[np.arange(50)]
        h = 0.02 * np.minimum(1.0, np.linalg.norm(sub.x, axis=-1))
        e1 = np.abs(v2_fd_oracle(model, sub, h) - v2_closed(model, sub))
        e2 = np.abs(v2_fd_oracle(model, sub, h / 2) - v2_closed(model, sub))
        factors.append(float(np.median(e1 / e2)))
        cells += 1
    lo, hi = min(factors), max(factors)
    ok = worst <= 1e-3 and cells >= 12 and 3.5 <= lo and hi <= 4.5
    return ok, (f"{cells} cells; max term-scaled error {worst:.2e} (tol 1e-3); "
                f"h-halving factors in [{lo:.3f}, {hi:.3f}]")


def c06_cancellation_locus():
    parts, ok = [], True
    for sigma, beta in ((1.0, 1.0), (0.5, 2.0), (2.0, 0.7)):
        s = cert.cancellation_scan(sigma, beta)
        good = s.on_locus and s.min_scaled_bound >= 1.0
        ok &= good
        parts.append(f"(sigma={sigma:g}, beta={beta:g}): {len(s.roots)} roots, predicted |x| = "
                     f"{s.predicted_radius:.4f}, on locus {s.on_locus}, "
                     f"min g N^6 = {s.min_scaled_bound:.3g}")
    return ok, "; ".join(parts)


def c07_divergence_contrast():
    radii = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
    tamed = cert.divergence_scan(tamed_model(), radii, 4096, seed=11)
    untamed = cert.divergence_scan(untamed_model(), radii, 4096, seed=11)
    model = untamed_model()
    centre = []
    for R in radii:
        a = dilate(HEIS, cert.anchor_points(HEIS, N16), R)
        on_axis = np.linalg.norm(a.x, axis=-1) == 0.0
        centre.append(np.abs(v2_closed(model, a[np.nonzero(on_axis)[0]])).max())
    u_min = [r.min_v2 for r in untamed.rows]
    ok = (tamed.verdict == "diverges" and untamed.verdict == "not diverging"
          and max(u_min) <= 0.0 and max(centre) <= 1e-6)
    t_min = [r.min_v2 for r in tamed.rows]
    return ok, (f"tamed '{tamed.verdict}' (minima {t_min[0]:.3g} -> {t_min[-1]:.3g}); "
                f"untamed '{untamed.verdict}' (max shell minimum {max(u_min):.3g}, "
                f"max |V2| on the center {max(centre):.1e})")


def c08_dominance_contrast():
    radii = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
    a_emp, bounded = [], []
    for seed in range(5):
        d = cert.dominance_scan(tamed_model(), radii, 4096, seed=100 + seed)
        a_emp.append(d.a_emp)
        bounded.append(d.bounded)
    u = cert.dominance_scan(untamed_model(), radii, 4096, seed=100)
    mean = float(np.mean(a_emp))
    spread = max(abs(a - mean) / mean for a in a_emp)
    ok = all(bounded) and spread <= 0.2 and not u.bounded
    return ok, (f"tamed bounded on all 5 seeds: {all(bounded)}, a_emp {min(a_emp):.4g}.."
                f"{max(a_emp):.4g} (max deviation {100 * spread:.1f}% of mean); "
                f"untamed bounded: {u.bounded}")


def _checker_outcomes():
    out = {}
    p9 = cert.check_outer_conditions(Power(9.0), "heis_add")
    g9, _ = cert.check_geometry_conditions(tamed_model(9.0), "heis_add", 2000, 0)
    out["p9_all_pass"] = all(v.status == "pass" for v in p9 + g9)
    p2 = {v.name: v for v in cert.check_outer_conditions(Power(2.0), "heis_add")}
    out["p2_s7_fails"] = p2["V'(s) s^-7 >= D > 0"].status == "fail"
    km = {v.name: v for v in cert.check_outer_conditions(Power(2.0), "kaplan_mult")}
    out["p2_eps_passes"] = km["eps (V')^2 >= max(V, s V')"].satisfied
    model = EnergyModel(HEIS, N16, MultiplicativePower(2.0), Power(2.0))
    geo, _ = cert.check_geometry_conditions(model, "kaplan_mult", 2000, 0)
    out["heis_n3_fails"] = {v.name: v for v in geo}["n - 3 >= 2C"].status == "fail"
    out["statuses"] = tuple(v.status for v in p9 + g9 + list(km.values()) + geo)
    return out


def c09_theorem_checkers():
    a, b = _checker_outcomes(), _checker_outcomes()
    keys = ("p9_all_pass", "p2_s7_fails", "p2_eps_passes", "heis_n3_fails")
    ok = all(a[k] for k in keys) and a == b
    return ok, ", ".join(f"{k} {a[k]}" for k in keys) + f", deterministic {a == b}"


def c10_perturbation():
    g = HEIS
    base, other = N16, TypeTwoAugmented(16.0)
    gaps = {}
    for alpha in (0.1, 0.01):
        mixed = PerspectiveComposite(base=base, other=other, zeta=zeta_affine(alpha))
        gaps[alpha] = perturbation_gap(g, mixed, base, 4096, seed=5)
    C = max(gradient_bound(g, base, 4096, 5), gradient_bound(g, other, 4096, 5))
    ratio = gaps[0.1] / gaps[0.01]
    linear = 5.0 <= ratio <= 20.0 and all(gaps[a] <= 2 * C * a for a in gaps)
    eps = np.linspace(0.0, 0.5, 11)
    coeffs = [cert.perturbation_certificate(1, 0.8, e, 1.7).coefficient for e in eps]
    exact = all(c == 0.8 - 1.7 * e for c, e in zip(coeffs, eps))
    q2 = [cert.perturbation_certificate(2, 0.8, e, 1.7).coefficient for e in eps]
    monotone = bool(np.all(np.diff(coeffs) < 0) and np.all(np.diff(q2) < 0))
    ok = linear and exact and monotone
    return ok, (f"eps(0.1) = {gaps[0.1]:.4g}, eps(0.01) = {gaps[0.01]:.4g}, ratio {ratio:.3f} "
                f"(linear within factor 2: {linear}); q=1 coefficient exact: {exact}; "
                f"monotone in eps: {monotone}")


def c11_chain():
    model = tamed_model()
    res = langevin_chain(model, ChainConfig(step_size=0.05, steps=5000, burn_in=1000,
                                            seed=2024, chains=200))
    mt = n_marginal_test(model, res, bins=20)
    ok = mt.p_value > 0.01 and 0.2 <= res.acceptance <= 0.8
    return ok, (f"1e6 steps (200 x 5000), acceptance {res.acceptance:.3f}, chi-square "
                f"{mt.statistic:.2f} on 19 dof, p = {mt.p_value:.3f}, thin {mt.thin}")


def c12_spectrum():
    cfg = SpectrumConfig((0.5, 0.75), (64, 64), k=4, zero_potential=True)
    ab = solve_spectrum(EnergyModel(abelian(2), N16, NoTaming(), Power(2.0)), cfg)
    a, b = 1.0, 1.5
    exact = np.sort([np.pi ** 2 * (k * k / a ** 2 + l * l / b ** 2)
                     for k in range(1, 5) for l in range(1, 5)])[:4]
    ab_err = float(np.max(np.abs(ab.eigenvalues - exact) / exact))
    model = tamed_model(2.0)
    r32 = solve_spectrum(model, weighted_box(3.5, 2, 1, 32, 32, k=6))
    r48 = solve_spectrum(model, weighted_box(3.5, 2, 1, 48, 48, k=6))
    l32, l48 = r32.eigenvalues[:5], r48.eigenvalues[:5]
    drift = np.abs(l48 - l32) / np.abs(l48)
    gap = float(l32[1] - l32[0])
    rq_ok = r32.rayleigh_ground < l32[1] and r48.rayleigh_ground < l48[1]
    ok = ab_err <= 0.02 and bool(np.all(drift <= 0.10)) and gap > 0 and rq_ok
    return ok, (f"abelian 64^2 max rel error {100 * ab_err:.2f}%; lambda_1..5 at 32^3 "
                f"{np.round(l32, 4).tolist()}, at 48^3 {np.round(l48, 4).tolist()}, relative "
                f"drift {np.round(100 * drift, 1).tolist()}% (tol 10%); gap {gap:.4f}; "
                f"Rayleigh quotient {r32.rayleigh_ground:.4f} / {r48.rayleigh_ground:.4f} "
                f"below lambda_2: {rq_ok}")


def c13_determinism():
    outputs = {}
    with tempfile.TemporaryDirectory() as tmp:
        for command in ("certify", "scan-v2"):
            runs = []
            for _ in range(2):
                out = os.path.join(tmp, command)
                with redirect_stdout(io.StringIO()):
                    code = cli_main([command, "--config", os.path.join(FIXTURES, "tamed.toml"),
                                     "--out", out, "--threads", "1", "--seed", "7"])
                with open(os.path.join(out, f"{command}.json"), "rb") as fh:
                    runs.append((code, fh.read()))
            outputs[command] = runs[0] == runs[1] and runs[0][0] == 0
    return all(outputs.values()), ", ".join(f"{k} byte-identical {v}" for k, v in outputs.items())


CRITERIA = [
    (1, "group axioms and dilation automorphism", c01_group_axioms, 1.0),
    (2, "Kaplan identity and a=1 negative control", c02_kaplan_identity, 1.0),
    (3, "Heisenberg a=16 exact relations", c03_heisenberg_relations, 1.0),
    (4, "generalized Heisenberg gradient identities", c04_generalized_heisenberg_identities, 1.0),
    (5, "closed-form V2 against finite differences", c05_fd_oracle, 30.0),
    (6, "cancellation locus", c06_cancellation_locus, 10.0),
    (7, "divergence contrast", c07_divergence_contrast, 60.0),
    (8, "dominance contrast", c08_dominance_contrast, 60.0),
    (9, "theorem checkers", c09_theorem_checkers, 5.0),
    (10, "perturbation suite", c10_perturbation, 30.0),
    (11, "chain correctness", c11_chain, 120.0),
    (12, "spectrum refinement", c12_spectrum, 600.0),
    (13, "CLI determinism", c13_determinism, 60.0),
]


def run_criterion(num, title, fn, budget):
    ok, detail, elapsed = _timed(fn)
    in_time = elapsed < budget
    status = "PASS" if ok and in_time else "FAIL"
    line = (f"[{status}] criterion {num:2d}: {title} | {detail} | "
            f"{elapsed:.2f} s (budget {budget:g} s)")
    return ok and in_time, line


@pytest.mark.parametrize("num,title,fn,budget", CRITERIA, ids=[f"c{c[0]:02d}" for c in CRITERIA])
def test_criterion(num, title, fn, budget, capsys):
    ok, line = run_criterion(num, title, fn, budget)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [run_criterion(*c) for c in CRITERIA]
    for _, line in results:
        print(line)
    print(f"{sum(ok for ok, _ in results)}/{len(results)} criteria passed")
    sys.exit(0 if all(ok for ok, _ in results) else 1)
