"""Gibbsian Laguerre tessellations: kinetic kernels, particle sampler and geometry."""

from .forward import MarginalField, build_ell_box, solve_ell_t, solve_ell_x, xi_residual
from .kinetic import (
    HamiltonianSpec,
    kinetic_residual,
    q_apply,
    q_matrix,
    reverse_kernel,
    shear_pushforward,
    solve_kinetic,
    solve_kinetic_1d,
    swap_kernel,
    tstar,
)
from .marks import Kernel, Mark, MarkSet, alpha, kernel_eval, precedes, sigma_triple, tau
from .sampler import ParticleConfig, Trajectory, flow_deterministic, sample_boundary, simulate, total_rate
from .tessellation import (
    PLCFunction,
    Tessellation,
    build_tessellation,
    hopf_evolve,
    hopf_lax_value,
    laguerre_cells,
    legendre_transform,
    reconstruct_g,
    render_svg,
    validate_generic,
)

__version__ = "0.1.0"
