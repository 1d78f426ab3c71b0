"""Kernel ridge regression of the generator of a controlled diffusion.

For a drift field f_pi and diffusion strength eps, the generator acts on
observables as L h = <f_pi, grad h> + eps laplacian h.  Sampling L applied
to the kernel sections k(x_l, .) at the data points gives the target matrix

    (K_pi)_{ij} = <f_pi(x_i), grad_x1 k(x_i, x_j)> + eps tr hess_x1 k(x_i, x_j),

and ridge regression with the regularized Gram matrix K_gamma = K + N gamma I
yields the compressed operator K_gamma^{-1} K_pi acting on coefficient
vectors.  Control-affine structure survives the regression: with A-hat from
the zero-input channel and B-hat_j from channel differences, the operator
under input u is A-hat + sum_j u_j B-hat_j.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels
from .dynamics import GeneratorDataset
from .errors import ConditioningError, NumericalDomainError
from .kernels import KernelSpec
from .npzio import load_arrays, save_arrays


def target_kernel_matrix(kernel: KernelSpec, X, drift, epsilon: float) -> np.ndarray:
    """Generator target matrix for one drift channel.

    ``drift`` holds the drift vector at each sample point (same shape as X).
    Entry (i, j) applies the generator in the first kernel argument at x_i.
    """
    if not (np.isfinite(epsilon) and epsilon >= 0):
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    # bad labels surface as the error below, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        out = kernels.pairwise_grad_dot(kernel, X, drift)
        if epsilon > 0:
            out += epsilon * kernels.pairwise_hess_trace(kernel, X)
    if not np.all(np.isfinite(out)):
        i, j = np.argwhere(~np.isfinite(out))[0]
        raise NumericalDomainError(
            f"non-finite target matrix entry at ({i}, {j})", where=(int(i), int(j))
        )
    return out


@dataclass
class GeneratorModel:
    """Fitted generator: data, kernel, and compressed operator blocks.

    ``A_hat`` is the zero-input generator on coefficient vectors, ``B_hat[j]``
    the correction per unit input channel, ``q_coeff`` the coefficients of
    the stage cost's kernel interpolant.  ``kgamma_cho`` holds the Cholesky
    factorization of K + N gamma I for reuse in downstream solves.
    """

    kernel: KernelSpec
    X: np.ndarray
    gamma: float
    epsilon: float
    K: np.ndarray
    kgamma_cho: tuple
    A_hat: np.ndarray
    B_hat: np.ndarray
    q_coeff: np.ndarray

    @property
    def n_points(self) -> int:
        return self.X.shape[0]

    @property
    def n_u(self) -> int:
        return self.B_hat.shape[0]


def _factor_kgamma(K: np.ndarray, gamma: float):
    N = K.shape[0]
    Kg = K + (N * gamma) * np.eye(N)
    try:
        return scipy.linalg.cho_factor(Kg, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ConditioningError(
            f"Cholesky of the regularized Gram matrix failed (N={N}, gamma={gamma}); "
            f"increase gamma or thin the dataset: {exc}"
        ) from None


def fit(dataset: GeneratorDataset, kernel: KernelSpec, gamma: float,
        epsilon: float) -> GeneratorModel:
    """Fit the generator operator blocks from a drift dataset.

    The ridge parameter enters as N gamma on the Gram diagonal, so tabulated
    gamma values transfer across dataset sizes.
    """
    if not (np.isfinite(gamma) and gamma > 0):
        raise ValueError(f"gamma must be positive, got {gamma}")
    X = dataset.X
    K = kernels.gram_matrix(kernel, X)
    cho = _factor_kgamma(K, gamma)

    K0 = target_kernel_matrix(kernel, X, dataset.drift_labels[0], epsilon)
    A_hat = scipy.linalg.cho_solve(cho, K0)
    B_hat = np.empty((dataset.n_u, X.shape[0], X.shape[0]))
    for j in range(dataset.n_u):
        Kj = target_kernel_matrix(kernel, X, dataset.drift_labels[j + 1], epsilon)
        Kj -= K0
        B_hat[j] = scipy.linalg.cho_solve(cho, Kj)
        del Kj
    del K0
    q_coeff = scipy.linalg.cho_solve(cho, dataset.q)
    return GeneratorModel(
        kernel=kernel, X=X, gamma=gamma, epsilon=epsilon, K=K,
        kgamma_cho=cho, A_hat=A_hat, B_hat=B_hat, q_coeff=q_coeff,
    )


def solve_regularized(model: GeneratorModel, rhs: np.ndarray) -> np.ndarray:
    """Solve K_gamma z = rhs with the stored factorization."""
    return scipy.linalg.cho_solve(model.kgamma_cho, rhs)


def generator_apply(model: GeneratorModel, u, h_coeff, x) -> float:
    """Apply the learned generator under input u to an RKHS function at x.

    ``h_coeff`` are the coefficients of h = sum_i h_i k(x_i, .); the result
    is (L-hat_u h)(x).  The zero vector selects the uncontrolled generator.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (model.n_u,):
        raise ValueError(f"input must have shape ({model.n_u},), got {u.shape}")
    h_coeff = np.asarray(h_coeff, dtype=float)
    if h_coeff.shape != (model.n_points,):
        raise ValueError(f"h_coeff must have shape ({model.n_points},)")
    coeff = model.A_hat @ h_coeff
    for j in range(model.n_u):
        if u[j] != 0.0:
            coeff += u[j] * (model.B_hat[j] @ h_coeff)
    return float(coeff @ kernels.cross_kernel_vector(model.kernel, model.X, x))


def min_eig_estimate(model: GeneratorModel, iters: int = 30, seed: int = 0) -> float:
    """Smallest eigenvalue of K_gamma, estimated by inverse power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(model.n_points)
    v /= np.linalg.norm(v)
    lam_inv = 0.0
    for _ in range(iters):
        w = scipy.linalg.cho_solve(model.kgamma_cho, v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        lam_inv = nw
        v = w / nw
    if lam_inv == 0.0:
        raise ConditioningError("inverse power iteration collapsed")
    return 1.0 / lam_inv


def save_model(path, model: GeneratorModel, config_hash: str | None = None) -> None:
    """Serialize a fitted model to a byte-stable .npz archive.

    The Gram matrix and its factorization are rebuilt on load, so only the
    data points and operator blocks are stored.
    """
    meta = {
        "kind": "generator-model",
        "kernel_family": model.kernel.family,
        "sigma": model.kernel.sigma,
        "smoothing_lengthscale_ratio": model.kernel.smoothing_lengthscale_ratio,
        "smoothing_radius": model.kernel.smoothing_radius,
        "gamma": model.gamma,
        "epsilon": model.epsilon,
        "config_hash": config_hash,
    }
    save_arrays(
        path,
        {"X": model.X, "A_hat": model.A_hat, "B_hat": model.B_hat,
         "q_coeff": model.q_coeff},
        meta=meta,
    )


def load_model(path):
    """Load a model archive; returns (model, meta)."""
    arrays, meta = load_arrays(path)
    if meta is None or meta.get("kind") != "generator-model":
        raise ValueError(f"{path} is not a generator model archive")
    kernel = KernelSpec(
        family=meta["kernel_family"],
        sigma=meta["sigma"],
        smoothing_lengthscale_ratio=meta["smoothing_lengthscale_ratio"],
        smoothing_radius=meta["smoothing_radius"],
    )
    X = arrays["X"]
    K = kernels.gram_matrix(kernel, X)
    cho = _factor_kgamma(K, meta["gamma"])
    model = GeneratorModel(
        kernel=kernel, X=X, gamma=meta["gamma"], epsilon=meta["epsilon"], K=K,
        kgamma_cho=cho, A_hat=arrays["A_hat"], B_hat=arrays["B_hat"],
        q_coeff=arrays["q_coeff"],
    )
    return model, meta
