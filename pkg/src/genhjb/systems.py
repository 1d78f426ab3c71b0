"""Benchmark systems: linear oscillators, pendulum, cartpole.

Angle-bearing systems are expressed in embedded coordinates where the angle
theta appears as the pair (cos theta, sin theta).  For both mechanical
benchmarks theta = 0 is the upright position, so stabilizing the origin of
the stage cost means swinging up.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .dynamics import ControlAffineSystem, StateGridSpec
from .errors import ConfigError
from .penalty import ControlPenalty, symmetric_box_penalty


def linear_1d_system(a: float = 1.0, b: float = 1.0, u_max: float = 5.0,
                     epsilon: float = 0.01) -> ControlAffineSystem:
    """Scalar unstable plant dx = (a x + b u) dt + sqrt(2 eps) dW."""
    return ControlAffineSystem(
        name="linear-1d",
        n_x=1,
        n_u=1,
        drift=lambda x: a * x,
        input_map=lambda x: np.array([[b]]),
        u_min=np.array([-u_max]),
        u_max=np.array([u_max]),
        epsilon=epsilon,
    )


def linear_2d_system(u_max: float = 5.0, epsilon: float = 0.01) -> ControlAffineSystem:
    """Double integrator: position-velocity chain driven through the velocity."""
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    return ControlAffineSystem(
        name="linear-2d",
        n_x=2,
        n_u=1,
        drift=lambda x: A @ x,
        input_map=lambda x: B,
        u_min=np.array([-u_max]),
        u_max=np.array([u_max]),
        epsilon=epsilon,
    )


# Pendulum physical constants.  The effective inertia about the pivot is
# J = I + m lc^2 with lc = l / 2.
_PEND = dict(mass=1.0, gravity=9.81, length=1.0, damping=0.1, inertia=0.0842)


def pendulum_system(epsilon: float = 0.02, u_max: float = 1.5, mass: float = _PEND["mass"],
                    gravity: float = _PEND["gravity"], length: float = _PEND["length"],
                    damping: float = _PEND["damping"],
                    inertia: float = _PEND["inertia"]) -> ControlAffineSystem:
    """Torque-driven pendulum in embedded coordinates (cos t, sin t, omega).

    J omega' = u - damping * omega + m g lc sin(theta), theta = 0 upright.
    """
    lc = 0.5 * length
    J = inertia + mass * lc**2
    mglc = mass * gravity * lc

    def drift(x):
        c, s, w = x
        return np.array([-s * w, c * w, (mglc * s - damping * w) / J])

    G = np.array([[0.0], [0.0], [1.0 / J]])
    return ControlAffineSystem(
        name="pendulum",
        n_x=3,
        n_u=1,
        drift=drift,
        input_map=lambda x: G,
        u_min=np.array([-u_max]),
        u_max=np.array([u_max]),
        epsilon=epsilon,
    )


def pendulum_intrinsic_system(epsilon: float = 0.02, u_max: float = 1.5,
                              mass: float = _PEND["mass"], gravity: float = _PEND["gravity"],
                              length: float = _PEND["length"], damping: float = _PEND["damping"],
                              inertia: float = _PEND["inertia"]) -> ControlAffineSystem:
    """The same pendulum in physical coordinates (theta, omega).

    Use this one for rollout simulation: integrating the embedded state
    directly does not preserve cos^2 + sin^2 = 1, and at high spin rates the
    drift off the circle is large enough to distort both the policy input and
    the measured angle.
    """
    lc = 0.5 * length
    J = inertia + mass * lc**2
    mglc = mass * gravity * lc

    def drift(x):
        t, w = x
        return np.array([w, (mglc * np.sin(t) - damping * w) / J])

    G = np.array([[0.0], [1.0 / J]])
    return ControlAffineSystem(
        name="pendulum-intrinsic",
        n_x=2,
        n_u=1,
        drift=drift,
        input_map=lambda x: G,
        u_min=np.array([-u_max]),
        u_max=np.array([u_max]),
        epsilon=epsilon,
    )


def pendulum_stage_cost(q_sin: float = 30.0, q_cos: float = 30.0,
                        q_omega: float = 1.0) -> Callable:
    """q(x) = q_sin s^2 + q_cos (c - 1)^2 + q_omega omega^2; zero only upright at rest."""
    def cost(x):
        c, s, w = x
        return q_sin * s**2 + q_cos * (c - 1.0) ** 2 + q_omega * w**2
    return cost


def pendulum_default_grid(theta_count: int = 50, omega_count: int = 50,
                          theta_frac: float = 0.99,
                          omega_max: float = 10.0) -> StateGridSpec:
    tmax = theta_frac * np.pi
    return StateGridSpec(
        bounds=((-tmax, tmax), (-omega_max, omega_max)),
        counts=(theta_count, omega_count),
        angle_dims=(0,),
    )


# Cartpole constants: cart mass M, pole mass m, pole length l (lc = l / 2),
# cart viscous friction k, rotational damping b, pole inertia I about its
# center of mass.
_CART = dict(cart_mass=0.5, pole_mass=0.5, length=1.0, cart_damping=0.05,
             rot_damping=0.05, gravity=9.81, inertia=0.0513)


def cartpole_system(epsilon: float = 0.01, u_max: float = 7.0,
                    cart_mass: float = _CART["cart_mass"],
                    pole_mass: float = _CART["pole_mass"],
                    length: float = _CART["length"],
                    cart_damping: float = _CART["cart_damping"],
                    rot_damping: float = _CART["rot_damping"],
                    gravity: float = _CART["gravity"],
                    inertia: float = _CART["inertia"]) -> ControlAffineSystem:
    """Cart-and-pole in embedded coordinates (p, v, cos t, sin t, omega).

    The coupled accelerations solve

        [M + m      m lc c ] [p'']   [u + m lc s w^2 - k v]
        [m lc c   I + m lc^2] [w''] = [m g lc s - b w      ]

    with theta = 0 the upright pole.
    """
    lc = 0.5 * length
    m11 = cart_mass + pole_mass
    m22 = inertia + pole_mass * lc**2
    mlc = pole_mass * lc
    mglc = pole_mass * gravity * lc

    def _accelerations(x, u):
        p, v, c, s, w = x
        m12 = mlc * c
        det = m11 * m22 - m12 * m12
        r1 = u + mlc * s * w * w - cart_damping * v
        r2 = mglc * s - rot_damping * w
        acc_p = (m22 * r1 - m12 * r2) / det
        acc_w = (m11 * r2 - m12 * r1) / det
        return acc_p, acc_w

    def drift(x):
        p, v, c, s, w = x
        acc_p, acc_w = _accelerations(x, 0.0)
        return np.array([v, acc_p, -s * w, c * w, acc_w])

    def input_map(x):
        c = x[2]
        m12 = mlc * c
        det = m11 * m22 - m12 * m12
        # G = Minv @ [1, 0] lifted into the embedded state
        return np.array([[0.0], [m22 / det], [0.0], [0.0], [-m12 / det]])

    return ControlAffineSystem(
        name="cartpole",
        n_x=5,
        n_u=1,
        drift=drift,
        input_map=input_map,
        u_min=np.array([-u_max]),
        u_max=np.array([u_max]),
        epsilon=epsilon,
    )


def cartpole_intrinsic_system(epsilon: float = 0.01, u_max: float = 7.0,
                              cart_mass: float = _CART["cart_mass"],
                              pole_mass: float = _CART["pole_mass"],
                              length: float = _CART["length"],
                              cart_damping: float = _CART["cart_damping"],
                              rot_damping: float = _CART["rot_damping"],
                              gravity: float = _CART["gravity"],
                              inertia: float = _CART["inertia"]) -> ControlAffineSystem:
    """The same cartpole in physical coordinates (p, v, theta, omega)."""
    lc = 0.5 * length
    m11 = cart_mass + pole_mass
    m22 = inertia + pole_mass * lc**2
    mlc = pole_mass * lc
    mglc = pole_mass * gravity * lc

    def _accelerations(x, u):
        p, v, t, w = x
        c, s = np.cos(t), np.sin(t)
        m12 = mlc * c
        det = m11 * m22 - m12 * m12
        r1 = u + mlc * s * w * w - cart_damping * v
        r2 = mglc * s - rot_damping * w
        return (m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det

    def drift(x):
        acc_p, acc_w = _accelerations(x, 0.0)
        return np.array([x[1], acc_p, x[3], acc_w])

    def input_map(x):
        m12 = mlc * np.cos(x[2])
        det = m11 * m22 - m12 * m12
        return np.array([[0.0], [m22 / det], [0.0], [-m12 / det]])

    return ControlAffineSystem(
        name="cartpole-intrinsic",
        n_x=4,
        n_u=1,
        drift=drift,
        input_map=input_map,
        u_min=np.array([-u_max]),
        u_max=np.array([u_max]),
        epsilon=epsilon,
    )


def cartpole_stage_cost(q_tip: float = 10.0, q_upright: float = 100.0,
                        q_cart_vel: float = 1.0, q_omega: float = 1.0,
                        length: float = _CART["length"]) -> Callable:
    """Penalizes the pole tip's horizontal excursion, pole tilt, and speeds.

    q(x) = q_tip (p - l s)^2 + q_upright l^2 (c - 1)^2 + q_cart_vel v^2
           + q_omega w^2.
    """
    ql2 = q_upright * length**2

    def cost(x):
        p, v, c, s, w = x
        return q_tip * (p - length * s) ** 2 + ql2 * (c - 1.0) ** 2 \
            + q_cart_vel * v**2 + q_omega * w**2
    return cost


def cartpole_default_grid(counts=(9, 7, 23, 23), p_max: float = 2.5, v_max: float = 3.0,
                          theta_frac: float = 0.99, omega_max: float = 8.0) -> StateGridSpec:
    tmax = theta_frac * np.pi
    return StateGridSpec(
        bounds=((-p_max, p_max), (-v_max, v_max), (-tmax, tmax), (-omega_max, omega_max)),
        counts=tuple(counts),
        angle_dims=(2,),
    )


def lqr_feedback(A, B, Q, R, u_min=None, u_max=None) -> Callable:
    """Continuous-time LQR state feedback u = -R^-1 B' P x, optionally clipped.

    P solves the algebraic Riccati equation A'P + PA - P B R^-1 B' P + Q = 0.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    P = scipy.linalg.solve_continuous_are(A, B, Q, R)
    K = np.linalg.solve(R, B.T @ P)

    def policy(x):
        u = -K @ np.asarray(x, dtype=float)
        if u_min is not None or u_max is not None:
            u = np.clip(u, u_min, u_max)
        return u
    return policy


@dataclass(frozen=True)
class Benchmark:
    """A system bundled with its default grid, stage cost, and penalty.

    `sim_system` holds the same dynamics in the coordinates a simulator
    should integrate.  For angle-embedded systems that is the physical
    (theta, omega) form; otherwise it is `system` itself.  Policies and
    stage costs always act on embedded states, so rollouts of `sim_system`
    go through `grid.embed` / `grid.embed_point` first.
    """

    system: ControlAffineSystem
    grid: StateGridSpec
    stage_cost: Callable
    pen: ControlPenalty
    sim_system: ControlAffineSystem


def _linear_1d_benchmark(epsilon, u_max, system_params, cost_params):
    u_max = 5.0 if u_max is None else u_max
    sys_ = linear_1d_system(u_max=u_max, epsilon=epsilon, **system_params)
    q_weight = cost_params.pop("q_weight", 1.5)
    r_weight = cost_params.pop("r_weight", 0.5)
    _reject_leftover(cost_params)
    grid = StateGridSpec(bounds=((-2.0, 2.0),), counts=(200,))
    return Benchmark(sys_, grid, lambda x: q_weight * float(x[0]) ** 2,
                     symmetric_box_penalty([r_weight], u_max), sys_)


def _linear_2d_benchmark(epsilon, u_max, system_params, cost_params):
    u_max = 5.0 if u_max is None else u_max
    sys_ = linear_2d_system(u_max=u_max, epsilon=epsilon, **system_params)
    q_weight = cost_params.pop("q_weight", 1.0)
    r_weight = cost_params.pop("r_weight", 0.5)
    _reject_leftover(cost_params)
    grid = StateGridSpec(bounds=((-2.0, 2.0), (-2.0, 2.0)), counts=(30, 30))
    return Benchmark(sys_, grid, lambda x: q_weight * float(x @ x),
                     symmetric_box_penalty([r_weight], u_max), sys_)


def _pendulum_benchmark(epsilon, u_max, system_params, cost_params):
    u_max = 1.5 if u_max is None else u_max
    sys_ = pendulum_system(epsilon=epsilon, u_max=u_max, **system_params)
    sim = pendulum_intrinsic_system(epsilon=epsilon, u_max=u_max, **system_params)
    r_weight = cost_params.pop("r_weight", 0.5)
    cost = pendulum_stage_cost(**cost_params)
    return Benchmark(sys_, pendulum_default_grid(), cost,
                     symmetric_box_penalty([r_weight], u_max), sim)


def _cartpole_benchmark(epsilon, u_max, system_params, cost_params):
    u_max = 7.0 if u_max is None else u_max
    sys_ = cartpole_system(epsilon=epsilon, u_max=u_max, **system_params)
    sim = cartpole_intrinsic_system(epsilon=epsilon, u_max=u_max, **system_params)
    r_weight = cost_params.pop("r_weight", 0.2)
    cost = cartpole_stage_cost(**cost_params)
    return Benchmark(sys_, cartpole_default_grid(), cost,
                     symmetric_box_penalty([r_weight], u_max), sim)


_BENCHMARKS = {
    "linear-1d": (_linear_1d_benchmark, 0.01),
    "linear-2d": (_linear_2d_benchmark, 0.01),
    "pendulum": (_pendulum_benchmark, 0.02),
    "cartpole": (_cartpole_benchmark, 0.01),
}

BENCHMARK_NAMES = tuple(sorted(_BENCHMARKS))


def _reject_leftover(params):
    if params:
        raise ConfigError(f"unknown cost parameters: {sorted(params)}")


def make_benchmark(name: str, epsilon: float | None = None, u_max: float | None = None,
                   system_params: dict | None = None,
                   cost_params: dict | None = None) -> Benchmark:
    """Instantiate a named benchmark with optional parameter overrides."""
    if name not in _BENCHMARKS:
        raise ConfigError(f"unknown system {name!r}; expected one of {BENCHMARK_NAMES}")
    build, default_eps = _BENCHMARKS[name]
    eps = default_eps if epsilon is None else float(epsilon)
    try:
        return build(eps, u_max, dict(system_params or {}), dict(cost_params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for system {name!r}: {exc}") from None
