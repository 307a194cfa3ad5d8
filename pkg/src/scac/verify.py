"""Oracle identity suite shared by the ``verify`` subcommand and the tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import GarnetSpec, garnet_generate
from .oracle import (check_negative_definite, compute_bundle, eta_of_theta, td_fixed_point,
                     td_matrix)
from .policy import build_feature_set

GRAD_IDENTITY_TOL = 1e-9
FD_EPS = 1e-5
FD_REL_TOL = 1e-5
STATIONARY_TOL = 1e-10
POISSON_TOL = 1e-9
FIXED_POINT_TOL = 1e-10
LAMBDAS = (0.0, 0.5, 0.9)


@dataclass
class Check:
    name: str
    worst: float
    tol: float
    higher_is_better: bool = False

    @property
    def passed(self) -> bool:
        if self.higher_is_better:
            return self.worst > self.tol
        return self.worst <= self.tol

    def line(self) -> str:
        op = ">" if self.higher_is_better else "<="
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.worst:.3e} {op} {self.tol:.0e}"


def verification_spec(states: int, actions: int, branching: int = 2) -> GarnetSpec:
    """Instance family for the identity checks; its basis can exclude the constant."""
    L = max(1, min(states - 1, states // 2 + 1))
    return GarnetSpec(states, actions, min(branching, states), 0.0, L, min(2, L))


def finite_difference_gradient(mdp, fs, theta, eps=FD_EPS) -> np.ndarray:
    grad = np.empty_like(theta)
    for k in range(theta.size):
        step = np.zeros_like(theta)
        step[k] = eps
        grad[k] = (eta_of_theta(mdp, fs, theta + step) - eta_of_theta(mdp, fs, theta - step)) / (2 * eps)
    return grad


def run_verification(states: int, actions: int, trials: int, seed: int,
                     thetas_per_instance: int = 1, branching: int = 2) -> list[Check]:
    """Worst-case residuals over ``trials`` random instances (and thetas per instance)."""
    spec = verification_spec(states, actions, branching)
    rng = np.random.default_rng(seed)
    worst = {k: 0.0 for k in ("grad", "fd", "stat", "poisson", "fixed", "td_mean")}
    gamma_min = np.inf
    for t in range(trials):
        mdp = garnet_generate(spec, seed + t)
        fs = build_feature_set(spec, seed + t, exclude_constant=True)
        for _ in range(thetas_per_instance):
            theta = rng.standard_normal(fs.K)
            for lam in LAMBDAS:
                B = compute_bundle(mdp, fs, theta, lam)
                gamma_min = min(gamma_min, check_negative_definite(B.A)[1])
                w = td_fixed_point(B.A, B.b)
                worst["fixed"] = max(worst["fixed"], np.abs(B.A @ w + B.b).max())
            worst["grad"] = max(worst["grad"], np.abs(B.grad_eta - B.grad_eta_h).max())
            fd = finite_difference_gradient(mdp, fs, theta)
            worst["fd"] = max(worst["fd"], np.abs(fd - B.grad_eta).max() / np.abs(B.grad_eta).max())
            worst["stat"] = max(worst["stat"], np.abs(B.pi @ B.P - B.pi).max())
            resid = B.h - (mdp.state_reward - B.eta + B.P @ B.h)
            worst["poisson"] = max(worst["poisson"], np.abs(resid).max(), abs(B.h[B.x_star]))
            d = td_matrix(mdp.state_reward, B.eta, B.h)
            worst["td_mean"] = max(worst["td_mean"], abs(np.sum(B.pi[:, None] * B.P * d)))
    return [
        Check("gradient identity |grad_td - grad_h|_inf", worst["grad"], GRAD_IDENTITY_TOL),
        Check("finite-difference relative error", worst["fd"], FD_REL_TOL),
        Check("stationarity residual |pi'P - pi'|_inf", worst["stat"], STATIONARY_TOL),
        Check("Poisson residual", worst["poisson"], POISSON_TOL),
        Check("TD fixed point residual |Aw* + b|_inf", worst["fixed"], FIXED_POINT_TOL),
        Check("stationary mean of the TD", worst["td_mean"], 1e-10),
        Check("negative definiteness margin gamma", float(gamma_min), 0.0, higher_is_better=True),
    ]
