"""TOML run configuration: parsing, validation and object construction.

One file drives every command. ``parse_config`` validates every section that
is present and fills in defaults, so the resolved config echoed into reports
carries no hidden settings. ``require`` adds the per-command checks (which
sections must exist, whether a seed is needed).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Optional

import tomli

from .errors import CarnotError, ParseError, ValidationError
from .group import Step2Group, generalized_heisenberg, heisenberg, make_step2_group
from .norms import (
    ZETAS,
    GeometricMean,
    KaplanGeneralizedHeisenberg,
    NormSpec,
    PerspectiveComposite,
    TypeTwoAugmented,
    TypeTwoSmooth,
)
from .outer import OuterFunction, Power
from .taming import (
    AdditiveLog,
    AdditivePower,
    EnergyModel,
    MultiplicativeII,
    MultiplicativePower,
    NoTaming,
    TamingSpec,
)

MODEL_SECTIONS = ("group", "norm", "taming", "outer")
STOCHASTIC_COMMANDS = {"check-norm", "check-derivatives", "certify", "scan-v2", "sample", "spectrum", "perturb"}
COMMAND_SECTIONS = {
    "describe-group": ("group",),
    "check-norm": ("group", "norm"),
    "check-derivatives": MODEL_SECTIONS,
    "certify": MODEL_SECTIONS,
    "scan-v2": MODEL_SECTIONS,
    "sample": MODEL_SECTIONS,
    "spectrum": MODEL_SECTIONS,
    "perturb": MODEL_SECTIONS,
}

SECTION_DEFAULTS = {
    "scan": {"radii": [1.0, 2.0, 4.0, 8.0, 16.0, 32.0], "samples": 4096},
    "certify": {"theorem": "heis_add", "sample_size": 4096},
    "check_norm": {"sample_size": 4096},
    "check_derivatives": {"points": 100, "steps": [1e-2, 5e-3, 2.5e-3]},
    "chain": {"step_size": 0.05, "steps": 5000, "burn_in": 1000, "chains": 100, "tune": True,
              "bins": 20},
    "spectrum": {"x_half_width": 3.5, "grid": None, "k": 6, "tol": 1e-8,
                 "potential": "sampled", "v_clamp": 1e6, "memory_budget": 2e9,
                 "positive_part": False},
    "perturb": {"other": {"kind": "type2aug", "a": 16.0}, "alpha": 0.1, "q": 1,
                "radii": [8.0, 16.0, 32.0, 64.0], "samples": 2048, "sample_size": 4096},
}


@dataclass
class RunConfig:
    """Resolved configuration; ``raw`` is the fully defaulted table echoed in reports."""

    raw: dict
    seed: Optional[int]
    threads: int
    out: str
    sections: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.sections[name]

    def resolved(self) -> dict:
        return copy.deepcopy(self.raw)


# ------------------------------------------------------------------ helpers

def _get(table: dict, key: str, path: str, kind, required: bool = True, default=None):
    if key not in table:
        if required:
            raise ValidationError("missing required key", f"{path}.{key}")
        return default
    v = table[key]
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(f"expected a number, got {v!r}", f"{path}.{key}")
        return float(v)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or float(v) != int(v):
            raise ValidationError(f"expected an integer, got {v!r}", f"{path}.{key}")
        return int(v)
    if kind is bool:
        if not isinstance(v, bool):
            raise ValidationError(f"expected true/false, got {v!r}", f"{path}.{key}")
        return v
    if kind is str:
        if not isinstance(v, str):
            raise ValidationError(f"expected a string, got {v!r}", f"{path}.{key}")
        return v
    if kind is list:
        if not isinstance(v, list):
            raise ValidationError(f"expected an array, got {v!r}", f"{path}.{key}")
        return v
    return v


def _float_list(v, path: str) -> list:
    if not isinstance(v, list) or not v:
        raise ValidationError("expected a non-empty array of numbers", path)
    out = []
    for i, item in enumerate(v):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ValidationError(f"expected a number, got {item!r}", f"{path}[{i}]")
        out.append(float(item))
    return out


def _kind(table, path: str) -> str:
    if not isinstance(table, dict):
        raise ValidationError("expected a table", path)
    return _get(table, "kind", path, str)


def _wrap(exc: CarnotError, path: str) -> ValidationError:
    return ValidationError(str(exc), path)


# ------------------------------------------------------------ model builders

def build_group(table: dict, path: str = "group") -> Step2Group:
    kind = _kind(table, path)
    try:
        if kind == "heisenberg":
            return heisenberg()
        if kind == "generalized_heisenberg":
            return generalized_heisenberg(_float_list(_get(table, "L", path, list), f"{path}.L"))
        if kind == "step2":
            n = _get(table, "n", path, int)
            m = _get(table, "m", path, int)
            lam = _get(table, "lambdas", path, list)
            return make_step2_group(n, m, lam)
    except ValidationError:
        raise
    except (CarnotError, ValueError) as exc:
        raise _wrap(exc, path) from exc
    raise ValidationError(f"unknown group kind {kind!r}", f"{path}.kind")


def build_norm(table: dict, path: str = "norm") -> NormSpec:
    kind = _kind(table, path)
    try:
        if kind == "type2":
            return TypeTwoSmooth(_get(table, "a", path, float, False, 16.0))
        if kind == "type2aug":
            return TypeTwoAugmented(_get(table, "a", path, float, False, 16.0))
        if kind == "kaplan_gh":
            return KaplanGeneralizedHeisenberg()
        if kind == "perspective":
            zname = _get(table, "zeta", path, str, False, "root")
            if zname not in ZETAS:
                raise ValidationError(f"unknown zeta {zname!r}; known: {sorted(ZETAS)}",
                                      f"{path}.zeta")
            alpha = _get(table, "alpha", path, float, zname != "constant", None)
            return PerspectiveComposite(zeta=ZETAS[zname](alpha))
        if kind == "geomean":
            return GeometricMean(alpha=_get(table, "alpha", path, float, False, 0.5))
    except ValidationError:
        raise
    except (CarnotError, ValueError) as exc:
        raise _wrap(exc, path) from exc
    raise ValidationError(f"unknown norm kind {kind!r}", f"{path}.kind")


def build_taming(table: dict, path: str = "taming") -> TamingSpec:
    kind = _kind(table, path)
    try:
        if kind == "none":
            return NoTaming()
        if kind == "additive_power":
            return AdditivePower(_get(table, "sigma", path, float), _get(table, "beta", path, float))
        if kind == "additive_log":
            return AdditiveLog(_get(table, "beta", path, float))
        if kind == "mult_power":
            return MultiplicativePower(_get(table, "sigma", path, float))
        if kind == "mult2":
            return MultiplicativeII(_get(table, "L", path, float), _get(table, "alpha", path, float))
    except ValidationError:
        raise
    except (CarnotError, ValueError) as exc:
        raise _wrap(exc, path) from exc
    raise ValidationError(f"unknown taming kind {kind!r}", f"{path}.kind")


def build_outer(table: dict, path: str = "outer") -> OuterFunction:
    kind = _kind(table, path)
    if kind == "power":
        try:
            return Power(_get(table, "p", path, float))
        except ValidationError:
            raise
        except (CarnotError, ValueError) as exc:
            raise _wrap(exc, path) from exc
    raise ValidationError(f"unknown outer kind {kind!r}", f"{path}.kind")


def build_model(cfg: RunConfig) -> EnergyModel:
    return EnergyModel(build_group(cfg.raw["group"]), build_norm(cfg.raw["norm"]),
                       build_taming(cfg.raw["taming"]), build_outer(cfg.raw["outer"]))


# ------------------------------------------------------------------ sections

def _resolve_section(raw: dict, name: str) -> dict:
    given = raw.get(name, {})
    if not isinstance(given, dict):
        raise ValidationError("expected a table", name)
    defaults = SECTION_DEFAULTS[name]
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ValidationError(f"unknown keys {unknown}", name)
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


def _check_positive_int(sec: dict, key: str, path: str, minimum: int = 1) -> None:
    v = _get(sec, key, path, int)
    if v < minimum:
        raise ValidationError(f"must be >= {minimum}, got {v}", f"{path}.{key}")
    sec[key] = v


def _check_positive_float(sec: dict, key: str, path: str) -> None:
    v = _get(sec, key, path, float)
    if not v > 0:
        raise ValidationError(f"must be positive, got {v}", f"{path}.{key}")
    sec[key] = v


def _validate_sections(raw: dict) -> dict:
    from .certify import THEOREMS
    from .spectrum import POTENTIALS

    secs = {name: _resolve_section(raw, name) for name in SECTION_DEFAULTS}

    s = secs["scan"]
    s["radii"] = _float_list(s["radii"], "scan.radii")
    if len(s["radii"]) < 4 or any(b <= a for a, b in zip(s["radii"], s["radii"][1:])) \
            or s["radii"][0] <= 0:
        raise ValidationError("need >= 4 positive, strictly increasing radii", "scan.radii")
    _check_positive_int(s, "samples", "scan")

    c = secs["certify"]
    if _get(c, "theorem", "certify", str) not in THEOREMS:
        raise ValidationError(f"unknown theorem {c['theorem']!r}; known: {sorted(THEOREMS)}",
                              "certify.theorem")
    _check_positive_int(c, "sample_size", "certify")
    _check_positive_int(secs["check_norm"], "sample_size", "check_norm")

    d = secs["check_derivatives"]
    _check_positive_int(d, "points", "check_derivatives")
    d["steps"] = _float_list(d["steps"], "check_derivatives.steps")
    if any(h <= 0 for h in d["steps"]):
        raise ValidationError("steps must be positive", "check_derivatives.steps")

    ch = secs["chain"]
    _check_positive_float(ch, "step_size", "chain")
    _check_positive_int(ch, "steps", "chain")
    _check_positive_int(ch, "burn_in", "chain", minimum=0)
    _check_positive_int(ch, "chains", "chain")
    _check_positive_int(ch, "bins", "chain", minimum=2)
    ch["tune"] = _get(ch, "tune", "chain", bool)
    if ch["steps"] <= ch["burn_in"]:
        raise ValidationError("steps must exceed burn_in", ("chain.steps", "chain.burn_in"))

    sp = secs["spectrum"]
    _check_positive_float(sp, "x_half_width", "spectrum")
    _check_positive_int(sp, "k", "spectrum", minimum=2)
    _check_positive_float(sp, "tol", "spectrum")
    _check_positive_float(sp, "v_clamp", "spectrum")
    _check_positive_float(sp, "memory_budget", "spectrum")
    sp["positive_part"] = _get(sp, "positive_part", "spectrum", bool)
    if _get(sp, "potential", "spectrum", str) not in POTENTIALS:
        raise ValidationError(f"must be one of {list(POTENTIALS)}", "spectrum.potential")
    if sp["grid"] is not None:
        grid = _float_list(sp["grid"], "spectrum.grid")
        if any(gv != int(gv) or gv < 8 for gv in grid):
            raise ValidationError("grid sizes must be integers >= 8", "spectrum.grid")
        sp["grid"] = [int(gv) for gv in grid]

    pt = secs["perturb"]
    build_norm(pt["other"], "perturb.other")
    alpha = _get(pt, "alpha", "perturb", float)
    if not 0.0 < alpha <= 1.0:
        raise ValidationError(f"must lie in (0, 1], got {alpha}", "perturb.alpha")
    pt["alpha"] = alpha
    if _get(pt, "q", "perturb", int) not in (1, 2):
        raise ValidationError("q must be 1 or 2", "perturb.q")
    pt["q"] = int(pt["q"])
    pt["radii"] = _float_list(pt["radii"], "perturb.radii")
    _check_positive_int(pt, "samples", "perturb")
    _check_positive_int(pt, "sample_size", "perturb")
    return secs


# ------------------------------------------------------------------- parsing

def parse_config(text: str) -> RunConfig:
    """Parse and validate TOML text; raises ParseError or ValidationError."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(f"malformed config: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    """Validate an already parsed table (used for CLI overrides)."""
    known = set(MODEL_SECTIONS) | set(SECTION_DEFAULTS) | {"seed", "threads", "out"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValidationError(f"unknown top-level keys {unknown}", unknown[0])

    seed = _get(raw, "seed", "config", int, False, None)
    if seed is not None and seed < 0:
        raise ValidationError("seed must be non-negative", "seed")
    threads = _get(raw, "threads", "config", int, False, 1)
    if threads < 0:
        raise ValidationError("threads must be >= 0 (0 = auto)", "threads")
    out = _get(raw, "out", "config", str, False, ".")

    group = build_group(raw["group"]) if "group" in raw else None
    norm = build_norm(raw["norm"]) if "norm" in raw else None
    if "taming" in raw:
        build_taming(raw["taming"])
    if "outer" in raw:
        build_outer(raw["outer"])
    if group is not None and norm is not None:
        _check_norm_group(norm, group, raw)

    secs = _validate_sections(raw)
    resolved = {k: copy.deepcopy(raw[k]) for k in MODEL_SECTIONS if k in raw}
    resolved.update(copy.deepcopy(secs))
    resolved.update(seed=seed, threads=threads, out=out)
    return RunConfig(resolved, seed, threads, out, secs)


def _check_norm_group(norm: NormSpec, group: Step2Group, raw: dict) -> None:
    try:
        norm.validate(group)
    except (CarnotError, ValueError) as exc:
        raise ValidationError(f"norm {raw['norm'].get('kind')!r} is incompatible with group "
                              f"{raw['group'].get('kind')!r}: {exc}",
                              ("norm.kind", "group.kind")) from exc


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config(text)


def require(cfg: RunConfig, command: str) -> None:
    """Command-specific checks: required sections and the seed for stochastic commands."""
    for name in COMMAND_SECTIONS.get(command, ()):
        if name not in cfg.raw:
            raise ValidationError(f"section required by {command!r}", name)
    if command in STOCHASTIC_COMMANDS and cfg.seed is None:
        raise ValidationError(f"a seed is required by {command!r} (config key or --seed)", "seed")


def override(cfg: RunConfig, **updates: Any) -> RunConfig:
    """Apply CLI overrides (``seed``, ``threads``, ``out`` or ``section.key``) and revalidate."""
    raw = copy.deepcopy(cfg.raw)
    for key, value in updates.items():
        if value is None:
            continue
        if "." in key:
            sec, sub = key.split(".", 1)
            raw.setdefault(sec, {})[sub] = value
        else:
            raw[key] = value
    raw = {k: v for k, v in raw.items() if v is not None}
    return config_from_dict(raw)
