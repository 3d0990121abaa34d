"""vvlab: boundary-layer corrected low-viscosity studies in reduced geometries.

Modules
-------
geometry   domain backends (flat channel, cylinder gap), distance/normal/curvature
spaces     anisotropic weighted norms, layer evaluation maps, Hardy/Gronwall checks
euler      exact inviscid base flows and their wall data
layer      boundary-layer profile solver and the pressure/velocity correctors
ns         viscous reference solver with vorticity-free slip walls
expansion  ansatz assembly, remainder extraction, Weyl/Leray projection
study      viscosity sweeps, rate fits, reports, presets, CLI backend
"""

from .geometry import GeometryDescriptor, annulus_gap, flat_channel
from .spaces import AnisotropicIndex, FastGrid, ProfileField, VolumeField
from .study import PRESETS, StudyConfig, get_preset, run_convergence_study

__version__ = "0.1.0"

__all__ = [
    "GeometryDescriptor",
    "annulus_gap",
    "flat_channel",
    "AnisotropicIndex",
    "FastGrid",
    "ProfileField",
    "VolumeField",
    "PRESETS",
    "StudyConfig",
    "get_preset",
    "run_convergence_study",
    "__version__",
]
