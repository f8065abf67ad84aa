"""Meshless particle time-domain solver for Maxwell's curl equations.

Fields are carried on scattered E/H particle clouds; spatial derivatives are
transmitted to a compactly supported smoothing kernel.  Time integration is
either an explicit leapfrog (CFL-limited, with an eigenvalue-based bound) or
an unconditionally stable leapfrog alternating-direction-implicit scheme.
A staggered-grid FDTD solver and an analytic cylindrical-cavity solution are
included as references.
"""

from .constants import C0, EPS0, MU0
from .kernels import KernelSpec

__all__ = ["C0", "EPS0", "MU0", "KernelSpec"]

__version__ = "0.1.0"
