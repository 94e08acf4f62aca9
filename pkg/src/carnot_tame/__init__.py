"""Tamed energies on step-2 Carnot groups.

Group law and sub-Riemannian calculus, homogeneous norms, singularity-tamed
energies and their ground-state potential V2, numerical hypothesis checks,
MALA sampling and the bottom spectrum of ``-Delta + V2``.
"""

from .errors import CarnotError
from .group import (
    GroupPoint,
    Step2Group,
    abelian,
    compose,
    dilate,
    generalized_heisenberg,
    heisenberg,
    homogeneous_dimension,
    invert,
    make_step2_group,
)
from .norms import (
    GeometricMean,
    KaplanGeneralizedHeisenberg,
    PerspectiveComposite,
    TypeTwoAugmented,
    TypeTwoSmooth,
)
from .outer import CustomOuter, Power
from .taming import (
    AdditiveLog,
    AdditivePower,
    EnergyModel,
    MultiplicativeII,
    MultiplicativePower,
    NoTaming,
    energy_bundle,
    v2_closed,
)

__version__ = "0.1.0"

__all__ = [
    "CarnotError", "GroupPoint", "Step2Group", "abelian", "compose", "dilate",
    "generalized_heisenberg", "heisenberg", "homogeneous_dimension", "invert", "make_step2_group",
    "GeometricMean", "KaplanGeneralizedHeisenberg", "PerspectiveComposite", "TypeTwoAugmented",
    "TypeTwoSmooth", "CustomOuter", "Power", "AdditiveLog", "AdditivePower", "EnergyModel",
    "MultiplicativeII", "MultiplicativePower", "NoTaming", "energy_bundle", "v2_closed",
]
