"""Model problems advanced by backward Euler.

Every problem exposes the same one-step contract:

    step(u_prev, t_prev, t_next, spatial_level=0, guess=None, smooth=False)
        -> (BlockState, StepDiagnostics)

which solves (M / dt + K(u)) u = f(t_next) + (M / dt) u_prev on the
requested spatial grid.  ``smooth`` swaps the pulsed voltage source for
its carrier-period-average surrogate; coarse setup sweeps use that.
Steppers are deterministic and hold no state besides factorizations
cached per (grid, dt), so concurrent workers may share an instance or
build their own from the same config.

Chaining steps over a whole time grid (sequential_solve) is the oracle
every parallel-in-time result is measured against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .errors import NewtonConvergenceError
from .excitation import PwmSource
from .spatial import SpatialHierarchy
from .state import BlockState, SpaceTimeVector


@dataclass(frozen=True)
class StepDiagnostics:
    iterations: int
    converged: bool = True


@dataclass(frozen=True)
class NewtonOptions:
    max_iters: int = 25
    tol: float = 1e-11
    damping: float = 0.5
    max_halvings: int = 8

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.max_iters < 1 or self.tol <= 0.0:
            raise ValueError("max_iters must be >= 1 and tol positive")


def joule_loss(u_prev, u_next, dt, weights):
    """Weighted square of the discrete time derivative of the field."""
    du = (u_next.field - u_prev.field) / dt
    return float(weights @ (du * du))


def _source_profile(kind, x, seed):
    if kind == "sine":
        return np.sin(math.pi * x)
    if kind == "bump":
        return np.exp(-((x - 0.5) / 0.15) ** 2)
    if kind == "random":
        return np.random.default_rng(seed).normal(size=x.size)
    raise ValueError(f"unknown source profile {kind!r}; "
                     "choose sine, bump or random")


class _FieldProblem:
    """Shared plumbing: grids, forcing, loss weights, initial state."""

    n_scalars = 0

    def __init__(self, nx, n_spatial_grids=1, mass_coeff=1.0,
                 excitation=None, source="sine", seed=0):
        if mass_coeff <= 0.0:
            raise ValueError(f"mass coefficient must be positive, "
                             f"got {mass_coeff}")
        self.spatial = SpatialHierarchy(nx, n_spatial_grids)
        self.mass_coeff = float(mass_coeff)
        self.excitation = excitation
        # the spatial shape multiplying the (scalar) source voltage;
        # sampled analytically on each grid so coarse levels stay
        # discretizations of the same continuous problem
        self._shapes = []
        for g in range(self.spatial.n_grids):
            x = self.spatial.coordinates(g)
            if source == "random" and g > 0:
                # coarse grids inject the fine samples to stay nested
                self._shapes.append(self._shapes[g - 1][1::2].copy())
            else:
                self._shapes.append(_source_profile(source, x, seed))

    def initial_state(self, spatial_level=0):
        return BlockState.zeros(self.spatial.size(spatial_level), self.n_scalars,
                                spatial_level)

    def loss_weights(self, spatial_level=0):
        n = self.spatial.size(spatial_level)
        return np.full(n, self.mass_coeff * self.spatial.spacing(spatial_level))

    def forcing(self, t, spatial_level=0, smooth=False):
        if self.excitation is None:
            return np.zeros(self.spatial.size(spatial_level))
        v = (self.excitation.smooth_value(t) if smooth
             else self.excitation.value(t))
        return v * self._shapes[spatial_level]


class LinearDiffusionProblem(_FieldProblem):
    """sigma u_t - nu u_xx = f(t) s(x) on (0, 1), Dirichlet, central
    differences on the interior points."""

    def __init__(self, nx, diffusivity=1.0, **kw):
        super().__init__(nx, **kw)
        if diffusivity <= 0.0:
            raise ValueError(f"diffusivity must be positive, got {diffusivity}")
        self.diffusivity = float(diffusivity)
        self._factor_cache = {}

    def _stiffness_banded(self, spatial_level):
        n = self.spatial.size(spatial_level)
        dx = self.spatial.spacing(spatial_level)
        ab = np.zeros((2, n))
        ab[0, 1:] = -self.diffusivity / dx ** 2
        ab[1, :] = 2.0 * self.diffusivity / dx ** 2
        return ab

    def prepare(self, spatial_level, dt):
        key = (spatial_level, float(dt))
        if key not in self._factor_cache:
            ab = self._stiffness_banded(spatial_level)
            ab[1, :] += self.mass_coeff / dt
            self._factor_cache[key] = cholesky_banded(ab)
        return self._factor_cache[key]

    def step(self, u_prev, t_prev, t_next, spatial_level=0, guess=None,
             smooth=False):
        dt = t_next - t_prev
        factor = self.prepare(spatial_level, dt)
        rhs = (self.forcing(t_next, spatial_level, smooth)
               + (self.mass_coeff / dt) * u_prev.field)
        return (BlockState(cho_solve_banded((factor, False), rhs),
                           spatial_level=spatial_level),
                StepDiagnostics(iterations=1))


@dataclass(frozen=True)
class BrauerCurve:
    """Reluctivity nu(s) = k1 exp(k2 s^2) + k3 of the gradient magnitude."""

    k1: float = 0.05
    k2: float = 2.0
    k3: float = 1.0

    def __post_init__(self):
        if self.k1 < 0.0 or self.k2 < 0.0 or self.k3 <= 0.0:
            raise ValueError("Brauer curve needs k1, k2 >= 0 and k3 > 0")

    def nu(self, s2):
        """nu as a function of the squared gradient."""
        return self.k1 * np.exp(self.k2 * s2) + self.k3

    def flux_derivative(self, s2):
        """d(nu(|g|) g)/dg, an even function of g expressed via g^2."""
        e = np.exp(self.k2 * s2)
        return self.k1 * e + self.k3 + 2.0 * self.k1 * self.k2 * s2 * e


class NonlinearSaturationProblem(_FieldProblem):
    """sigma u_t - d/dx(nu(|u_x|) u_x) = f(t) s(x), damped-Newton solves."""

    def __init__(self, nx, curve=None, newton=None, **kw):
        super().__init__(nx, **kw)
        self.curve = curve if curve is not None else BrauerCurve()
        self.newton = newton if newton is not None else NewtonOptions()

    def _gradients(self, u, dx):
        """Interface gradients including the Dirichlet boundaries."""
        padded = np.concatenate(([0.0], u, [0.0]))
        return np.diff(padded) / dx

    def _operator(self, u, spatial_level):
        """N(u): negative divergence of the saturating flux."""
        dx = self.spatial.spacing(spatial_level)
        g = self._gradients(u, dx)
        flux = self.curve.nu(g * g) * g
        return -np.diff(flux) / dx

    def _jacobian_banded(self, u, dt, spatial_level):
        dx = self.spatial.spacing(spatial_level)
        g = self._gradients(u, dx)
        dphi = self.curve.flux_derivative(g * g) / dx ** 2
        n = u.size
        ab = np.zeros((2, n))
        ab[0, 1:] = -dphi[1:-1]
        ab[1, :] = self.mass_coeff / dt + dphi[:-1] + dphi[1:]
        return ab

    def step(self, u_prev, t_prev, t_next, spatial_level=0, guess=None,
             smooth=False):
        dt = t_next - t_prev
        sig_dt = self.mass_coeff / dt
        rhs = (self.forcing(t_next, spatial_level, smooth)
               + sig_dt * u_prev.field)
        scale = max(float(np.linalg.norm(rhs)), 1e-300)
        opt = self.newton

        u = (guess.field if guess is not None else u_prev.field).copy()

        def res(v):
            return sig_dt * v + self._operator(v, spatial_level) - rhs

        r = res(u)
        rnorm = float(np.linalg.norm(r))
        for it in range(opt.max_iters):
            if rnorm <= opt.tol * scale:
                return (BlockState(u, spatial_level=spatial_level),
                        StepDiagnostics(iterations=it))
            factor = cholesky_banded(self._jacobian_banded(u, dt, spatial_level))
            delta = cho_solve_banded((factor, False), -r)
            alpha = 1.0
            trial = u + delta
            r_trial = res(trial)
            t_norm = float(np.linalg.norm(r_trial))
            if t_norm >= rnorm:
                alpha = opt.damping
                for _ in range(opt.max_halvings):
                    trial = u + alpha * delta
                    r_trial = res(trial)
                    t_norm = float(np.linalg.norm(r_trial))
                    if t_norm < rnorm:
                        break
                    alpha *= 0.5
            u, r, rnorm = trial, r_trial, t_norm
        if rnorm <= opt.tol * scale:
            return (BlockState(u, spatial_level=spatial_level),
                    StepDiagnostics(iterations=opt.max_iters))
        raise NewtonConvergenceError(
            f"Newton stalled at t={t_next:.6g} on grid {spatial_level}: "
            f"|F|={rnorm:.3e} > {opt.tol:.1e} * {scale:.3e} "
            f"after {opt.max_iters} iterations",
            time=t_next, iterations=opt.max_iters)


class SurrogateMachineProblem(NonlinearSaturationProblem):
    """Saturating field one-way coupled to rotor angle and speed.

    The magnetic torque is a fixed weighted sum of the new field values;
    speed and angle then take one backward Euler step:

        omega' = (T_mag(u) - friction * omega) / inertia
        theta' = omega
    """

    n_scalars = 2  # (theta, omega)

    def __init__(self, nx, inertia=1.0, friction=0.1, **kw):
        super().__init__(nx, **kw)
        if inertia <= 0.0 or friction < 0.0:
            raise ValueError("need inertia > 0 and friction >= 0")
        self.inertia = float(inertia)
        self.friction = float(friction)
        self._couplings = [
            np.sin(2.0 * math.pi * self.spatial.coordinates(g))
            * self.spatial.spacing(g)
            for g in range(self.spatial.n_grids)]

    def torque(self, field, spatial_level=0):
        return float(self._couplings[spatial_level] @ field)

    def step(self, u_prev, t_prev, t_next, spatial_level=0, guess=None,
             smooth=False):
        field_prev = BlockState(u_prev.field, spatial_level=spatial_level)
        field_guess = (BlockState(guess.field, spatial_level=spatial_level)
                       if guess is not None else None)
        new_field, diag = super().step(field_prev, t_prev, t_next,
                                       spatial_level, field_guess, smooth)
        dt = t_next - t_prev
        theta, omega = u_prev.scalars
        torque = self.torque(new_field.field, spatial_level)
        omega_new = ((omega + dt * torque / self.inertia)
                     / (1.0 + dt * self.friction / self.inertia))
        theta_new = theta + dt * omega_new
        return (BlockState(new_field.field, [theta_new, omega_new],
                           spatial_level), diag)


class DahlquistProblem:
    """Scalar test equation u' = rate * u (+ optional source voltage)."""

    n_scalars = 0

    def __init__(self, rate=-1.0, initial=1.0, excitation=None):
        self.rate = float(rate)
        self.initial = float(initial)
        self.excitation = excitation
        self.spatial = SpatialHierarchy(1, 1)

    def initial_state(self, spatial_level=0):
        return BlockState([self.initial], spatial_level=spatial_level)

    def loss_weights(self, spatial_level=0):
        return np.ones(1)

    def step(self, u_prev, t_prev, t_next, spatial_level=0, guess=None,
             smooth=False):
        dt = t_next - t_prev
        f = 0.0
        if self.excitation is not None:
            f = (self.excitation.smooth_value(t_next) if smooth
                 else self.excitation.value(t_next))
        val = (u_prev.field[0] + dt * f) / (1.0 - dt * self.rate)
        return (BlockState([val], spatial_level=0),
                StepDiagnostics(iterations=1))


def sequential_solve(problem, times, spatial_level=0, smooth=False, g=None,
                     initial=None):
    """Forward block solve: the O(n_steps) serial oracle.

    With a right-hand-side vector ``g`` this solves the all-at-once system
    u_0 = g_0, u_i = step(u_{i-1}) + g_i, which is how coarse levels carry
    their correction sources; without it, g is the plain initial-value
    right-hand side.  Returns the trajectory as a SpaceTimeVector.
    """
    n = len(times)
    if initial is None:
        initial = (g[0].clone() if g is not None
                   else problem.initial_state(spatial_level))
    states = [initial]
    for i in range(1, n):
        u, _ = problem.step(states[-1], float(times[i - 1]), float(times[i]),
                            spatial_level, guess=states[-1], smooth=smooth)
        if g is not None:
            u.add_scaled(g[i], 1.0)
        states.append(u)
    return SpaceTimeVector(states, 0)
