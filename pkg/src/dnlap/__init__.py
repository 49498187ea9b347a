"""Numerical laboratory for doubly nonlinear fractional p-Laplacian diffusion

    u_t + (-Δ_p)^s (u^m) = 0

on truncated one-dimensional or radial grids.
"""
from ._backend import BACKEND
from .barrier import BarrierConstants, build_barrier, check_domination, eval_G, eval_H
from .errors import *  # noqa: F401,F403
from .exponents import DecayRegime, ExponentSet, ModelParams, classify_regime, derive_exponents
from .grid import Domain, Field, box, box_of_mass, build_domain, cosine_bump, lq_norm, mass
from .kernel import KernelTable, assemble_kernel
from .nonlocal_op import apply_pv, energy, odd_power, pv_values, seminorm_p, weak_pairing
from .resolvent import StepConfig, Trajectory, march, resolvent
from .selfsim import ExtractionGrid, Profile, extract_barenblatt, profile_residual, to_profile
from .verify import PropertyReport

__version__ = "0.1.0"
