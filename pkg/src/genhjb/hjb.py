"""Finite-dimensional HJB final-value problem in the learned RKHS basis.

With the fitted operator blocks A-hat, B-hat_j and the cost coefficients q,
the value function's coefficient vector v(t) solves the backward ODE

    -dv/dt = A-hat v + q + K_gamma^{-1} D_r(lambda(v)),

integrated from the zero final condition over the horizon.  Here
lambda_j(v) at the data points is K B-hat_j v, and D_r is the box-penalty
dual from :mod:`genhjb.penalty` applied row-wise.  The default scheme treats
the linear part implicitly and the control nonlinearity explicitly:

    (I - dt A-hat) w_{m+1} = w_m + dt (q + d(w_m)).

The fully implicit variant iterates the same step to a fixed point of
d(w_{m+1}).  Time is reversed, so step m holds the value of a horizon of
m dt and the last iterate is the initial-time coefficient vector v0.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels, penalty as penalty_mod
from .errors import DivergenceError, StepSizeError
from .generator import GeneratorModel
from .npzio import load_arrays, save_arrays
from .penalty import ControlPenalty

SEMI_IMPLICIT = "semi-implicit"
IMPLICIT = "implicit"
_SCHEMES = (SEMI_IMPLICIT, IMPLICIT)

FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class HjbConfig:
    """Time-stepping parameters for the final-value problem.

    ``record_trajectory`` stores every iterate, (horizon_steps + 1, N)
    floats, so leave it off for large runs.
    """

    dt: float
    horizon_steps: int
    scheme: str = SEMI_IMPLICIT
    record_trajectory: bool = False
    fixed_point_tol: float = 1e-10
    fixed_point_max_iter: int = 50

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.horizon_steps) < 1:
            raise ValueError("horizon_steps must be >= 1")
        object.__setattr__(self, "horizon_steps", int(self.horizon_steps))
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {_SCHEMES}")
        if not (np.isfinite(self.fixed_point_tol) and self.fixed_point_tol > 0):
            raise ValueError("fixed_point_tol must be positive")
        if int(self.fixed_point_max_iter) < 1:
            raise ValueError("fixed_point_max_iter must be >= 1")


@dataclass
class HjbSolution:
    """Solved value function and the pieces needed to evaluate feedback.

    ``v0`` are the value coefficients at initial time; ``bv0[j] = B-hat_j v0``
    gives the policy's dual variables via kernel evaluation.  ``trajectory``
    (optional) stacks the coefficient iterates from final to initial time.
    """

    model: GeneratorModel
    config: HjbConfig
    v0: np.ndarray
    bv0: np.ndarray
    trajectory: np.ndarray | None = None


def solve_fvp(model: GeneratorModel, pen: ControlPenalty | None,
              config: HjbConfig) -> HjbSolution:
    """Integrate the HJB final-value problem backward over the horizon.

    ``pen`` None drops the control term and solves the uncontrolled
    (linear) cost accumulation problem.
    """
    if pen is not None and pen.n_u != model.n_u:
        raise ValueError(f"penalty has {pen.n_u} channels, model has {model.n_u}")
    N = model.n_points
    dt = config.dt

    step_matrix = np.eye(N) - dt * model.A_hat
    with warnings.catch_warnings():
        # an exactly singular factor is detected below and reported as
        # StepSizeError, so scipy's advisory warning is redundant here
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu = scipy.linalg.lu_factor(step_matrix)
    udiag = np.abs(np.diag(lu[0]))
    if udiag.min() <= 1e-14 * max(udiag.max(), 1.0):
        raise StepSizeError(
            f"I - dt A is numerically singular for dt={dt}; reduce the step"
        )

    def d_coeff(z):
        # lambda at the data points, one column per channel, then the dual
        Lam = np.stack([model.K @ (model.B_hat[j] @ z) for j in range(model.n_u)], axis=1)
        dr = penalty_mod.dual_value(pen, Lam)
        return scipy.linalg.cho_solve(model.kgamma_cho, dr)

    def step(rhs, m):
        if not np.all(np.isfinite(rhs)):
            raise DivergenceError(f"HJB iterate diverged at step {m}", step=m)
        return scipy.linalg.lu_solve(lu, rhs, check_finite=False)

    w = np.zeros(N)
    traj = [w.copy()] if config.record_trajectory else None
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(config.horizon_steps):
            base = w + dt * model.q_coeff
            if pen is None:
                w_next = step(base, m)
            elif config.scheme == SEMI_IMPLICIT:
                w_next = step(base + dt * d_coeff(w), m)
            else:
                z = step(base + dt * d_coeff(w), m)
                converged = False
                for _ in range(config.fixed_point_max_iter):
                    z_next = step(base + dt * d_coeff(z), m)
                    delta = np.max(np.abs(z_next - z))
                    z = z_next
                    if delta <= config.fixed_point_tol:
                        converged = True
                        break
                if not converged:
                    raise DivergenceError(
                        f"implicit step {m} did not reach a fixed point in "
                        f"{config.fixed_point_max_iter} iterations", step=m,
                    )
                w_next = z
            if not np.all(np.isfinite(w_next)):
                raise DivergenceError(f"HJB iterate diverged at step {m}", step=m)
            w = w_next
            if traj is not None:
                traj.append(w.copy())

    bv0 = np.stack([model.B_hat[j] @ w for j in range(model.n_u)], axis=0)
    return HjbSolution(
        model=model, config=config, v0=w, bv0=bv0,
        trajectory=np.array(traj) if traj is not None else None,
    )


def value_at(sol: HjbSolution, x) -> float:
    """Value function estimate at a single state."""
    kv = kernels.cross_kernel_vector(sol.model.kernel, sol.model.X, x)
    return float(sol.v0 @ kv)


def value_on(sol: HjbSolution, X) -> np.ndarray:
    """Value function estimate on a batch of states (M, n_x) -> (M,)."""
    Kc = kernels.cross_kernel_matrix(sol.model.kernel, sol.model.X, X)
    return Kc.T @ sol.v0


def _lambda_at(sol: HjbSolution, x) -> np.ndarray:
    kv = kernels.cross_kernel_vector(sol.model.kernel, sol.model.X, x)
    return sol.bv0 @ kv


def policy_at(sol: HjbSolution, pen: ControlPenalty, x) -> np.ndarray:
    """Feedback input at a state: the box-penalty minimizer for lambda(x)."""
    return penalty_mod.u_star(pen, _lambda_at(sol, x))


def policy_on(sol: HjbSolution, pen: ControlPenalty, X) -> np.ndarray:
    """Feedback inputs on a batch of states (M, n_x) -> (M, n_u)."""
    Kc = kernels.cross_kernel_matrix(sol.model.kernel, sol.model.X, X)
    return penalty_mod.u_star(pen, (sol.bv0 @ Kc).T)


def smoothed_policy_at(sol: HjbSolution, pen: ControlPenalty, x,
                       u_max=None) -> np.ndarray:
    """Arctan-mollified feedback, (2 umax / pi) arctan(u(x)) per channel.

    Keeps the sign and saturation level of the raw policy but removes the
    bang-bang switching that chatters under zero-order hold.  ``u_max``
    defaults to the penalty's upper box bound.
    """
    u = policy_at(sol, pen, x)
    umax = pen.u_max if u_max is None else np.broadcast_to(
        np.asarray(u_max, dtype=float), u.shape)
    return (2.0 * umax / np.pi) * np.arctan(u)


def write_value_policy_csv(path, sol: HjbSolution, pen: ControlPenalty, states,
                           config_hash: str | None = None) -> None:
    """Tabulate value and feedback on given states as CSV.

    Columns: state coordinates, value, one input per channel; floats carry
    17 significant digits.
    """
    states = np.asarray(states, dtype=float)
    V = value_on(sol, states)
    U = policy_on(sol, pen, states)
    n_x = states.shape[1]
    cols = [f"x_{i}" for i in range(1, n_x + 1)] + ["v"]
    cols += [f"u_{j}" for j in range(1, U.shape[1] + 1)]
    with open(path, "w", newline="") as fh:
        if config_hash is not None:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write(",".join(cols) + "\n")
        for i in range(states.shape[0]):
            row = list(states[i]) + [V[i]] + list(U[i])
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def save_solution(path, sol: HjbSolution, config_hash: str | None = None) -> None:
    """Serialize the solved coefficients to a byte-stable .npz archive."""
    meta = {
        "kind": "hjb-solution",
        "dt": sol.config.dt,
        "horizon_steps": sol.config.horizon_steps,
        "scheme": sol.config.scheme,
        "config_hash": config_hash,
    }
    arrays = {"v0": sol.v0, "bv0": sol.bv0}
    if sol.trajectory is not None:
        arrays["trajectory"] = sol.trajectory
    save_arrays(path, arrays, meta=meta)


def load_solution(path, model: GeneratorModel):
    """Load a solution archive and bind it to its fitted model.

    Returns (solution, meta); the caller is responsible for checking that
    the model and solution belong together (config hashes match).
    """
    arrays, meta = load_arrays(path)
    if meta is None or meta.get("kind") != "hjb-solution":
        raise ValueError(f"{path} is not an HJB solution archive")
    config = HjbConfig(
        dt=meta["dt"], horizon_steps=meta["horizon_steps"], scheme=meta["scheme"],
    )
    sol = HjbSolution(
        model=model, config=config, v0=arrays["v0"], bv0=arrays["bv0"],
        trajectory=arrays.get("trajectory"),
    )
    return sol, meta
