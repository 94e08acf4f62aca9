"""Outer functions V for energies ``U = V(inner)``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidParameter


class OuterFunction:
    """Interface: ``derivatives(s)`` returns ``(V(s), V'(s), V''(s))``."""

    family = "abstract"

    def derivatives(self, s):
        raise NotImplementedError

    def value(self, s):
        return self.derivatives(np.asarray(s, dtype=float))[0]

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Power(OuterFunction):
    """``V(s) = s^p``. ``p = 0`` is allowed as a constant (non-integrable) baseline."""

    p: float
    family = "power"

    def __post_init__(self):
        if not (np.isfinite(self.p) and self.p >= 0):
            raise InvalidParameter(f"power exponent must be finite and >= 0, got {self.p}")

    def derivatives(self, s):
        s = np.asarray(s, dtype=float)
        p = self.p
        with np.errstate(divide="ignore", invalid="ignore"):
            v0 = np.power(s, p) if p else np.ones_like(s)
            v1 = p * np.power(s, p - 1.0) if p else np.zeros_like(s)
            if p in (0.0, 1.0):
                v2 = np.zeros_like(s)
            else:
                v2 = p * (p - 1.0) * np.power(s, p - 2.0)
        return v0, v1, v2

    def describe(self):
        return {"kind": "power", "p": self.p}


@dataclass(frozen=True)
class CustomOuter(OuterFunction):
    """User-supplied V with derivatives; certified by numeric limit probing only."""

    name: str
    f: Callable
    f1: Callable
    f2: Callable
    family = "custom"

    def derivatives(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(all="ignore"):
            return np.asarray(self.f(s), float), np.asarray(self.f1(s), float), np.asarray(self.f2(s), float)

    def describe(self):
        return {"kind": "custom", "name": self.name}
