"""Time integration: explicit particle leapfrog, implicit leapfrog-ADI and a
staggered-grid FDTD reference.

Conventions.  Explicit particle states and the FDTD grid carry E at integer
steps and H at half steps.  The implicit leapfrog-ADI scheme is stated with
the same alignment (a pure relabeling of its staggered form), so E fields of
all three solvers live at the same physical times and can be compared at a
common step index.  Sources are injected additively into E_z after the
E-update; PEC projection zeroes masked nodes last.
"""

from dataclasses import dataclass, field

import numpy as np

from . import sparse
from .boundaries import apply_pec
from .errors import DivergenceError

import warnings

from .constants import C0


@dataclass
class FieldStateTMz:
    ez: np.ndarray   # [V/m] at E-nodes, integer steps
    hx: np.ndarray   # [A/m] at H-nodes, half steps
    hy: np.ndarray
    step: int
    dt: float
    convention: str = "explicit"  # explicit | laf

    @classmethod
    def zeros(cls, n_e, n_h, dt, convention="explicit"):
        return cls(np.zeros(n_e), np.zeros(n_h), np.zeros(n_h), 0, dt, convention)

    def max_abs(self):
        return max(
            float(np.max(np.abs(self.ez)), ) if self.ez.size else 0.0,
            float(np.max(np.abs(self.hx))) if self.hx.size else 0.0,
            float(np.max(np.abs(self.hy))) if self.hy.size else 0.0,
        )

    def check_finite(self):
        if not (np.all(np.isfinite(self.ez)) and np.all(np.isfinite(self.hx)) and np.all(np.isfinite(self.hy))):
            raise DivergenceError(self.step, "non-finite field value")


@dataclass
class FieldState3D:
    e: list   # three component vectors at E-nodes
    h: list   # three component vectors at H-nodes
    step: int
    dt: float

    @classmethod
    def zeros(cls, n_e, n_h, dt):
        return cls([np.zeros(n_e) for _ in range(3)], [np.zeros(n_h) for _ in range(3)], 0, dt)


def inject_soft_source(ez, indices, value):
    if indices is not None and value != 0.0:
        ez[indices] += value
    return ez


def step_explicit_tmz(state, ops, source=None, pec=None, pml=None):
    """One explicit leapfrog step; exactly two sparse products per field family.

    ``source`` is (node indices, amplitude) applied after the E-update.  With
    ``pml`` set, the update runs in split-field form with graded damping; at
    zero conductivity it reduces exactly to the plain update.
    """
    dt = state.dt
    if pml is None:
        state.hx -= dt * sparse.matvec(ops.curl_ez_to_hx, state.ez)
        state.hy += dt * sparse.matvec(ops.curl_ez_to_hy, state.ez)
        state.ez += dt * (
            sparse.matvec(ops.curl_hy_to_ez, state.hy) - sparse.matvec(ops.curl_hx_to_ez, state.hx)
        )
    else:
        state.hx = pml.decay_hx * state.hx - pml.gain_hx * dt * sparse.matvec(ops.curl_ez_to_hx, state.ez)
        state.hy = pml.decay_hy * state.hy + pml.gain_hy * dt * sparse.matvec(ops.curl_ez_to_hy, state.ez)
        pml.ezx = pml.decay_ex * pml.ezx + pml.gain_ex * dt * sparse.matvec(ops.curl_hy_to_ez, state.hy)
        pml.ezy = pml.decay_ey * pml.ezy - pml.gain_ey * dt * sparse.matvec(ops.curl_hx_to_ez, state.hx)
        state.ez = pml.ezx + pml.ezy
    if source is not None:
        inject_soft_source(state.ez, source[0], source[1])
        if pml is not None:
            inject_soft_source(pml.ezx, source[0], source[1])
    if pec is not None:
        apply_pec(state.ez, pec)
        if pml is not None:
            apply_pec(pml.ezx, pec)
            apply_pec(pml.ezy, pec)
    state.step += 1
    state.check_finite()
    return state


CURL_PAIRS_E = {0: (2, 1, 1, 2), 1: (0, 2, 2, 0), 2: (1, 0, 0, 1)}
# dE_k/dt = (1/eps)[D_a H_b - D_c H_d] with (b, a, d, c) per component;
# dH_k/dt mirrors it with the opposite sign.


def step_explicit_3d(state, ops, source=None):
    """Transcription of the six curl update equations (small clouds only)."""
    dt = state.dt
    new_h = []
    for k in range(3):
        b, a, d, c = CURL_PAIRS_E[k]
        curl = sparse.matvec(ops.d_h[a], state.e[b]) - sparse.matvec(ops.d_h[c], state.e[d])
        new_h.append(state.h[k] - dt * curl)
    state.h = new_h
    new_e = []
    for k in range(3):
        b, a, d, c = CURL_PAIRS_E[k]
        curl = sparse.matvec(ops.d_e[a], state.h[b]) - sparse.matvec(ops.d_e[c], state.h[d])
        new_e.append(state.e[k] + dt * curl)
    state.e = new_e
    if source is not None:
        inject_soft_source(state.e[2], source[0], source[1])
    state.step += 1
    for comp in state.e + state.h:
        if not np.all(np.isfinite(comp)):
            raise DivergenceError(state.step, "non-finite field value")
    return state


class LafStepper:
    """Implicit leapfrog stepper: one E-solve and one H-solve per full step.

    The operator blocks are factored once at construction and reused for the
    whole run.
    """

    def __init__(self, imp, method="direct", tol=1e-10):
        self.imp = imp
        self.handle_e = sparse.prepare_solver(imp.e_lhs, method=method, tol=tol)
        self.handle_h = sparse.prepare_solver(imp.h_lhs, method=method, tol=tol)

    def h_vector(self, state):
        return np.concatenate([state.hx, state.hy])

    def step(self, state, source=None, pec=None):
        imp = self.imp
        h = self.h_vector(state)
        rhs_e = sparse.matvec(imp.e_rhs, state.ez) + sparse.matvec(imp.e_from_h, h)
        ez_new = self.handle_e.solve(rhs_e)
        if source is not None:
            inject_soft_source(ez_new, source[0], source[1])
        if pec is not None:
            apply_pec(ez_new, pec)
        rhs_h = sparse.matvec(imp.h_rhs, h) + sparse.matvec(imp.h_from_e, ez_new)
        h_new = self.handle_h.solve(rhs_h)
        n_h = imp.n_h
        state.ez = ez_new
        state.hx = h_new[:n_h]
        state.hy = h_new[n_h:]
        state.step += 1
        state.check_finite()
        return state


def step_laf(state, imp, handle_e, handle_h, source=None, pec=None):
    """Functional form of LafStepper.step for prepared handles."""
    stepper = LafStepper.__new__(LafStepper)
    stepper.imp = imp
    stepper.handle_e = handle_e
    stepper.handle_h = handle_h
    return stepper.step(state, source=source, pec=pec)


class FdtdTmz:
    """Standard staggered-grid TMz reference solver with split-field PML.

    Ez cells coincide with the particle cloud's E-node layout (cell centers,
    i-major), so snapshots compare index-for-index.
    """

    def __init__(self, nx, ny, dr, dt, eps, mu, pml_spec=None, pec=None):
        if dt > dr / (C0 * np.sqrt(2.0)):
            warnings.warn("FDTD time step violates the CFL bound dr/(c sqrt(2))", stacklevel=2)
        self.nx, self.ny = nx, ny
        self.dr, self.dt = dr, dt
        self.eps, self.mu = eps, mu
        self.ezx = np.zeros((nx, ny))
        self.ezy = np.zeros((nx, ny))
        self.hx = np.zeros((nx, ny - 1))
        self.hy = np.zeros((nx - 1, ny))
        self.step_index = 0
        self.pec = pec  # boolean (nx, ny) mask or None
        cx = (np.arange(nx) + 0.5) * dr
        cy = (np.arange(ny) + 0.5) * dr
        if pml_spec is not None:
            from .boundaries import damping_coefficients, pml_profile

            th = pml_spec.thickness if pml_spec.thickness is not None else pml_spec.layers * dr

            def depth(coord, hi):
                return np.clip(np.maximum(th - coord, coord - (hi - th)) / th, 0.0, 1.0)

            sx_e = pml_profile(depth(cx, nx * dr), pml_spec, th)
            sy_e = pml_profile(depth(cy, ny * dr), pml_spec, th)
            sx_h = pml_profile(depth(np.arange(1, nx) * dr, nx * dr), pml_spec, th)
            sy_h = pml_profile(depth(np.arange(1, ny) * dr, ny * dr), pml_spec, th)
            self.dec_ex, self.gn_ex = damping_coefficients(sx_e[:, None], eps, dt)
            self.dec_ey, self.gn_ey = damping_coefficients(sy_e[None, :], eps, dt)
            self.dec_hx, self.gn_hx = damping_coefficients(sy_h[None, :], eps, dt)
            self.dec_hy, self.gn_hy = damping_coefficients(sx_h[:, None], eps, dt)
        else:
            one = 1.0
            self.dec_ex = self.gn_ex = self.dec_ey = self.gn_ey = one
            self.dec_hx = self.gn_hx = self.dec_hy = self.gn_hy = one

    @property
    def ez(self):
        return self.ezx + self.ezy

    def step(self, source=None):
        dr, dt = self.dr, self.dt
        ez = self.ez
        self.hx = self.dec_hx * self.hx - self.gn_hx * (dt / (self.mu * dr)) * (ez[:, 1:] - ez[:, :-1])
        self.hy = self.dec_hy * self.hy + self.gn_hy * (dt / (self.mu * dr)) * (ez[1:, :] - ez[:-1, :])
        curl = np.zeros((self.nx, self.ny))
        curl[1:-1, :] += self.hy[1:, :] - self.hy[:-1, :]
        curl[0, :] += self.hy[0, :]
        curl[-1, :] -= self.hy[-1, :]
        curl_y = np.zeros((self.nx, self.ny))
        curl_y[:, 1:-1] += self.hx[:, 1:] - self.hx[:, :-1]
        curl_y[:, 0] += self.hx[:, 0]
        curl_y[:, -1] -= self.hx[:, -1]
        self.ezx = self.dec_ex * self.ezx + self.gn_ex * (dt / (self.eps * dr)) * curl
        self.ezy = self.dec_ey * self.ezy - self.gn_ey * (dt / (self.eps * dr)) * curl_y
        if source is not None:
            idx, value = source
            self.ezx.ravel()[idx] += value
        if self.pec is not None:
            self.ezx[self.pec] = 0.0
            self.ezy[self.pec] = 0.0
        self.step_index += 1
        if not np.all(np.isfinite(self.ezx)):
            raise DivergenceError(self.step_index, "non-finite FDTD field")

    def ez_flat(self):
        return self.ez.ravel()


def discrete_energy(cloud, state):
    """sum eps |E|^2 dV + sum mu |H|^2 dV over the cloud."""
    e_term = float(np.sum(cloud.eps_e * state.ez**2 * cloud.vol_e))
    h_term = float(np.sum(cloud.mu_h * (state.hx**2 + state.hy**2) * cloud.vol_h))
    return e_term + h_term
