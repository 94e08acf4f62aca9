"""Command-line entry point: ``carnot-tame <command> --config model.toml``.

Every command writes ``<out>/<command>.json`` (schema version, build id,
resolved config and the command payload) plus CSV side files for tables, and
prints the JSON report to standard output. Exit codes: 0 ok, 1 runtime or
configuration error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import subprocess
import sys
from importlib import metadata
from typing import Optional

import numpy as np

from . import certify as cert
from .calculus import fd_bundle
from .config import RunConfig, build_model, build_norm, load_config, override, require
from .dynamics import (
    ChainConfig,
    default_test_functions,
    empirical_logsobolev,
    empirical_poincare,
    integrated_autocorr_time,
    langevin_chain,
    n_marginal_test,
)
from .errors import CarnotError
from .group import describe as describe_group
from .group import random_points
from .norms import (
    KaplanGeneralizedHeisenberg,
    PerspectiveComposite,
    TypeTwoSmooth,
    equivalence_constant,
    gradient_bound,
    kaplan_residual,
    lemma_constants,
    norm_bundle,
    perturbation_gap,
    radial_derivative_min,
    unit_level_set,
    zeta_affine,
)
from .parallel import resolve_threads
from .spectrum import SpectrumConfig, assemble_hamiltonian, bottom_spectrum, dump_matrix
from .spectrum import ground_state_vector, rayleigh_quotient
from .taming import energy_bundle, energy_value, v2_closed, v2_fd_oracle

SCHEMA_VERSION = 1
COMMANDS = ("describe-group", "check-norm", "check-derivatives", "certify", "scan-v2",
            "sample", "spectrum", "perturb")


# ------------------------------------------------------------------ plumbing

def build_id() -> str:
    """``git describe``-style identifier, falling back to the package version."""
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        return "v" + metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def to_jsonable(obj):
    """Recursively convert numpy types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if np.isfinite(v):
            return v
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return obj


def write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def emit(cfg: RunConfig, command: str, payload: dict, stream=None) -> str:
    report = {"schema_version": SCHEMA_VERSION, "command": command, "build_id": build_id(),
              "config": cfg.resolved(), "payload": payload}
    text = json.dumps(to_jsonable(report), sort_keys=True, indent=2, allow_nan=False)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"{command}.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(text, file=stream or sys.stdout)
    return path


def _side(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


# ------------------------------------------------------------------ commands

def cmd_describe_group(cfg: RunConfig, args) -> dict:
    from .config import build_group
    return {"group": describe_group(build_group(cfg.raw["group"]))}


def cmd_check_norm(cfg: RunConfig, args) -> dict:
    from .config import build_group
    g = build_group(cfg.raw["group"])
    norm = build_norm(cfg.raw["norm"])
    size = cfg.section("check_norm")["sample_size"]
    p = unit_level_set(g, norm, size, cfg.seed)
    res = np.abs(kaplan_residual(g, norm, p))
    out = {"norm": norm.describe(), "sample_size": size,
           "kaplan_residual_max": float(res.max()),
           "sup_grad": gradient_bound(g, norm, size, cfg.seed),
           "min_x_dot_grad": radial_derivative_min(g, norm, size, cfg.seed)}
    if isinstance(norm, (TypeTwoSmooth, KaplanGeneralizedHeisenberg)):
        lc = lemma_constants(g, norm, size, cfg.seed, keep_table=True)
        out["lemma_constants"] = {"A_est": lc.A_est, "C_est": lc.C_est, "B_est": lc.B_est,
                                  "excluded": lc.excluded}
        t = lc.table
        path = _side(cfg, "check-norm_lemma.csv")
        write_csv(path, ["index", "abs_x", "N", "grad_ratio", "lap_ratio"],
                  zip(range(t["N"].size), t["abs_x"], t["N"], t["grad_ratio"], t["lap_ratio"]))
        out["lemma_table_csv"] = os.path.basename(path)
    return out


def cmd_check_derivatives(cfg: RunConfig, args) -> dict:
    model = build_model(cfg)
    g = model.group
    sec = cfg.section("check_derivatives")
    rng = np.random.default_rng(cfg.seed)
    p = random_points(g, 4 * sec["points"], rng)
    r = np.linalg.norm(p.x, axis=-1)
    keep = r > 0.2
    if getattr(model.taming, "kind", "") == "mult2":
        keep &= np.abs(r - 1.0) > 0.05
    p = p[np.nonzero(keep)[0][: sec["points"]]]
    singular = model.taming.singular
    families = {
        "norm": (lambda q: model.norm.value(g, q), norm_bundle(g, model.norm, p)),
        "energy": (lambda q: energy_value(model, q), energy_bundle(model, p)),
    }
    rows, summary = [], {}
    for fam, (field, exact) in families.items():
        errs = []
        for h in sec["steps"]:
            fd = fd_bundle(g, field, p, h, singular_x=singular)
            scale = 1.0 + np.abs(exact.laplacian) + np.sqrt(exact.grad_sq)
            err = np.maximum(np.linalg.norm(fd.grad - exact.grad, axis=-1),
                             np.abs(fd.laplacian - exact.laplacian)) / scale
            errs.append(err)
            rows.extend((fam, i, h, e) for i, e in enumerate(err))
        maxes = [float(e.max()) for e in errs]
        factors = [a / b for a, b in zip(maxes, maxes[1:]) if b > 0]
        summary[fam] = {"steps": sec["steps"], "max_error": maxes, "convergence_factors": factors}
    v2_fd = v2_fd_oracle(model, p)
    v2_c = v2_closed(model, p)
    b = energy_bundle(model, p)
    term = 0.25 * b.grad_sq + 0.5 * np.abs(b.laplacian)
    summary["v2"] = {"max_term_scaled_error": float(np.max(np.abs(v2_fd - v2_c) / term))}
    path = _side(cfg, "check-derivatives.csv")
    write_csv(path, ["family", "point", "h", "error"], rows)
    return {"model": model.describe(), "points": len(p), "summary": summary,
            "table_csv": os.path.basename(path)}


def _scan_csv(cfg: RunConfig, name: str, table: cert.ScanTable) -> str:
    path = _side(cfg, name)
    write_csv(path, ["radius", "min_v2", "dominance", "excluded_fraction", "argmin"],
              [(r.radius, r.min_v2, r.dominance, r.excluded_fraction,
                " ".join(repr(c) for c in r.argmin)) for r in table.rows])
    return os.path.basename(path)


def cmd_certify(cfg: RunConfig, args) -> dict:
    model = build_model(cfg)
    sec, scan = cfg.section("certify"), cfg.section("scan")
    threads = resolve_threads(cfg.threads)
    sigma = getattr(model.taming, "sigma", None)
    outer = cert.check_outer_conditions(model.outer, sec["theorem"], sigma)
    geom, constants = cert.check_geometry_conditions(model, sec["theorem"], sec["sample_size"],
                                                     cfg.seed)
    div = cert.divergence_scan(model, scan["radii"], scan["samples"], cfg.seed, threads)
    dom = cert.dominance_scan(model, scan["radii"], scan["samples"], cfg.seed, rows=div.rows)
    verdicts = [v.to_dict() for v in outer + geom]
    return {"theorem": sec["theorem"], "title": cert.THEOREMS[sec["theorem"]].title,
            "verdicts": verdicts, "all_satisfied": all(v["satisfied"] for v in verdicts),
            "constants": constants,
            "scans": {"divergence": div.to_dict(), "dominance": dom.to_dict(),
                      "csv": _scan_csv(cfg, "certify_scan.csv", div)}}


def cmd_scan_v2(cfg: RunConfig, args) -> dict:
    model = build_model(cfg)
    scan = cfg.section("scan")
    div = cert.divergence_scan(model, scan["radii"], scan["samples"], cfg.seed,
                               resolve_threads(cfg.threads))
    dom = cert.dominance_scan(model, scan["radii"], scan["samples"], cfg.seed, rows=div.rows)
    return {"model": model.describe(), "divergence": div.to_dict(), "dominance": dom.to_dict(),
            "csv": _scan_csv(cfg, "scan-v2.csv", div)}


def cmd_sample(cfg: RunConfig, args) -> dict:
    model = build_model(cfg)
    sec = cfg.section("chain")
    chain = langevin_chain(model, ChainConfig(step_size=sec["step_size"], steps=sec["steps"],
                                              burn_in=sec["burn_in"], seed=cfg.seed,
                                              chains=sec["chains"], tune=sec["tune"]))
    flat = chain.flat
    N = model.norm.value(model.group, chain.samples)
    path = _side(cfg, "sample_chains.csv")
    write_csv(path, ["chain", "kept", "mean_N", "sd_N", "min_N", "max_N", "tau_N"],
              [(c, N.shape[1], N[c].mean(), N[c].std(), N[c].min(), N[c].max(),
                integrated_autocorr_time(N[c])) for c in range(N.shape[0])])
    out = {"model": model.describe(), "acceptance": chain.acceptance,
           "step_size": chain.step_size, "kept_samples": len(flat),
           "trajectory_csv": os.path.basename(path)}
    try:
        mt = n_marginal_test(model, chain, bins=sec["bins"])
        out["n_marginal"] = {"statistic": mt.statistic, "p_value": mt.p_value, "thin": mt.thin,
                             "tau": mt.tau, "effective": mt.effective}
    except CarnotError as exc:
        out["n_marginal"] = {"skipped": str(exc)}
    tests = default_test_functions(model)
    min_samples = min(10_000, len(flat))
    out["poincare"] = empirical_poincare(model, flat, tests, min_samples).to_dict()
    out["lsi"] = empirical_logsobolev(model, flat, tests, min_samples).to_dict()
    return out


def _spectrum_config(cfg: RunConfig, g, norm) -> SpectrumConfig:
    sec = cfg.section("spectrum")
    w = sec["x_half_width"]
    a = getattr(norm, "a", 16.0)
    widths = (w,) * g.n + (w * w / np.sqrt(a),) * g.m
    grid = tuple(sec["grid"]) if sec["grid"] is not None else (32,) * g.dim
    return SpectrumConfig(widths, grid, k=sec["k"], tol=sec["tol"], v_clamp=sec["v_clamp"],
                          memory_budget=sec["memory_budget"], positive_part=sec["positive_part"],
                          potential=sec["potential"])


def cmd_spectrum(cfg: RunConfig, args) -> dict:
    model = build_model(cfg)
    scfg = _spectrum_config(cfg, model.group, model.norm)
    ham = assemble_hamiltonian(model, scfg)
    if args.dump_matrix:
        dump_matrix(ham.matrix, args.dump_matrix)
    vals, _, res = bottom_spectrum(ham.matrix, scfg.k, scfg.tol, scfg.max_iter, cfg.seed)
    rq = rayleigh_quotient(ham.matrix, ground_state_vector(model, ham.mesh))
    return {"model": model.describe(), "eigenvalues": vals, "residuals": res,
            "gap": float(vals[1] - vals[0]), "rayleigh_ground": rq,
            "clamp_events": ham.clamp_events,
            "mesh": {"half_widths": list(scfg.half_widths), "grid": list(scfg.grid),
                     "steps": list(ham.mesh.steps), "unknowns": ham.mesh.size,
                     "nnz": int(ham.matrix.nnz)}}


def cmd_perturb(cfg: RunConfig, args) -> dict:
    """Certificate for the mixture ``K = (1 - alpha) K0 + alpha K_other``."""
    model = build_model(cfg)
    g = model.group
    sec = cfg.section("perturb")
    other = build_norm(sec["other"], "perturb.other")
    mixed = PerspectiveComposite(base=model.norm, other=other, zeta=zeta_affine(sec["alpha"]))
    eps = perturbation_gap(g, mixed, model.norm, sec["sample_size"], cfg.seed)
    c = equivalence_constant(g, model.norm, mixed, sec["sample_size"], cfg.seed)
    A_c = cert.doubling_constant(model.outer, c)
    alpha_q = cert.alpha_q_estimate(model, sec["q"], sec["radii"], sec["samples"], cfg.seed)
    out = {"model": model.describe(), "perturbed_norm": mixed.describe(), "eps": eps,
           "equivalence_c": c, "A_c": A_c, "alpha_q": alpha_q}
    if alpha_q > 0:
        out["certificate"] = cert.perturbation_certificate(sec["q"], alpha_q, eps, A_c).to_dict()
    else:
        out["certificate"] = {"skipped": f"alpha_q estimate {alpha_q:.4g} is not positive"}
    return out


HANDLERS = {
    "describe-group": cmd_describe_group,
    "check-norm": cmd_check_norm,
    "check-derivatives": cmd_check_derivatives,
    "certify": cmd_certify,
    "scan-v2": cmd_scan_v2,
    "sample": cmd_sample,
    "spectrum": cmd_spectrum,
    "perturb": cmd_perturb,
}


# ------------------------------------------------------------------- parsing

def _float_csv(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_csv(text: str) -> list:
    vals = _float_csv(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return [int(v) for v in vals]


def _count(text: str) -> int:
    """Integer that may be written in float notation, e.g. ``1e6``."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a count, got {text!r}")
    if v != int(v) or v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return int(v)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carnot-tame",
        description="Tamed energies on step-2 Carnot groups: checks, scans, sampling, spectra.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (default: config 'out' or '.')")
    common.add_argument("--threads", type=int, help="worker threads, 0 = auto")

    helps = {
        "describe-group": "print the group structure",
        "check-norm": "Kaplan residual, lemma constants and gradient bounds of the norm",
        "check-derivatives": "finite-difference convergence table for closed-form bundles",
        "certify": "check a theorem's hypotheses and run the coercivity scans",
        "scan-v2": "shell scan of V2 and the dominance ratio",
        "sample": "Metropolis-adjusted Langevin sampling with inequality diagnostics",
        "spectrum": "bottom spectrum of the ground-state operator on a truncated box",
        "perturb": "norm-perturbation certificate for a mixed norm",
    }
    subs = {name: sub.add_parser(name, parents=[common], help=h) for name, h in helps.items()}
    subs["certify"].add_argument("--theorem", choices=sorted(cert.THEOREMS))
    for name in ("certify", "scan-v2"):
        subs[name].add_argument("--radii", type=_float_csv, help="comma-separated shell radii")
        subs[name].add_argument("--samples", type=_count, help="samples per shell")
    subs["sample"].add_argument("--steps", type=_count, help="iterations per chain")
    subs["spectrum"].add_argument("--grid", type=_int_csv, help="grid sizes, x first, then z")
    subs["spectrum"].add_argument("--k", type=int, help="number of eigenvalues")
    subs["spectrum"].add_argument("--dump-matrix", help="write (row, col, value) triplets here")
    return parser


def resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    updates = {"seed": args.seed, "threads": args.threads, "out": args.out}
    updates["certify.theorem"] = getattr(args, "theorem", None)
    updates["scan.radii"] = getattr(args, "radii", None)
    updates["scan.samples"] = getattr(args, "samples", None)
    updates["chain.steps"] = getattr(args, "steps", None)
    updates["spectrum.grid"] = getattr(args, "grid", None)
    updates["spectrum.k"] = getattr(args, "k", None)
    cfg = override(cfg, **updates)
    require(cfg, args.command)
    return cfg


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        cfg = resolve(args)
        payload = HANDLERS[args.command](cfg, args)
        emit(cfg, args.command, payload)
    except (CarnotError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
