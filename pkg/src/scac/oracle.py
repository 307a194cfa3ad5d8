"""Exact linear-algebra counterparts of every quantity the learner estimates.

For a fixed theta these give the stationary distribution, average reward,
differential values, both forms of the policy gradient, the matrices of the
mean critic dynamics and the critic fixed points. Stationary distributions
use GTH elimination; every other solve is dense LU with partial pivoting.
Geometric series in lambda are resolvent solves, never truncated sums.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, ErgodicityError, ParameterError
from .mdp import Mdp, transition_under_policy, validate_chain
from .policy import FeatureSet, as_theta, likelihood_ratio_all, policy_matrix

COND_LIMIT = 1e12
NULL_RTOL = 1e-10


def _solve(M: np.ndarray, rhs: np.ndarray, what: str, error=ConditioningError) -> np.ndarray:
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise error(f"{what}: singular system") from exc
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        if error is ConditioningError:
            raise ConditioningError(f"{what}: ill-conditioned system", cond)
        raise error(f"{what}: ill-conditioned system (cond={cond:.3e})")
    return sol


def stationary_distribution(P: np.ndarray, check: bool = True) -> np.ndarray:
    """Stationary distribution of an ergodic chain.

    Solves the balance equations pi'(I - P) = 0, sum(pi) = 1 by GTH
    elimination: Gaussian elimination in which every pivot is formed from
    off-diagonal sums, so no subtraction occurs and tiny probabilities of
    near-deterministic policies keep full relative accuracy.
    """
    P = np.asarray(P, dtype=float)
    if check:
        report = validate_chain(P)
        if not report.ergodic:
            raise ErgodicityError(
                f"chain is not ergodic (irreducible={report.irreducible}, period={report.period})")
    A = P.copy()
    n = A.shape[0]
    for k in range(n - 1):
        scale = A[k, k + 1:].sum()
        if scale <= 0:
            raise ErgodicityError("singular balance equations: chain is reducible")
        A[k + 1:, k] /= scale
        A[k + 1:, k + 1:] += np.outer(A[k + 1:, k], A[k, k + 1:])
    pi = np.zeros(n)
    pi[-1] = 1.0
    for k in range(n - 2, -1, -1):
        pi[k] = pi[k + 1:] @ A[k + 1:, k]
    pi /= pi.sum()
    if not np.all(pi > 0):
        raise ErgodicityError("stationary distribution has non-positive entries")
    return pi


def average_reward(pi: np.ndarray, reward: np.ndarray) -> float:
    pi = np.asarray(pi, dtype=float)
    reward = np.asarray(reward, dtype=float)
    if pi.shape != reward.shape:
        raise ParameterError(f"length mismatch: {pi.shape} vs {reward.shape}")
    return float(pi @ reward)


def anchor_state(pi: np.ndarray) -> int:
    """Recurrent reference state: the most probable one, lowest index on ties."""
    return int(np.argmax(pi))


def differential_value(P: np.ndarray, reward: np.ndarray, eta: float, x_star: int) -> np.ndarray:
    """Solve h = r - eta + P h with the row of ``x_star`` replaced by h(x_star) = 0."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    system = np.eye(n) - P
    rhs = np.asarray(reward, dtype=float) - eta
    system[x_star, :] = 0.0
    system[x_star, x_star] = 1.0
    rhs[x_star] = 0.0
    return _solve(system, rhs, "Poisson equation", ErgodicityError)


@dataclass
class OracleBundle:
    theta: np.ndarray
    lam: float
    P: np.ndarray
    pi: np.ndarray
    eta: float
    x_star: int
    h: np.ndarray
    grad_eta: np.ndarray
    grad_eta_h: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    M: np.ndarray
    w_star_td: np.ndarray
    critic_null_dim: int
    w_star_proj: np.ndarray
    eps_app: float

    def to_dict(self) -> dict:
        out = {}
        for key, value in self.__dict__.items():
            out[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return out


def td_exact(bundle: OracleBundle, reward: np.ndarray, x: int, y: int) -> float:
    """Temporal difference r(x) - eta + h(y) - h(x)."""
    return float(reward[x] - bundle.eta + bundle.h[y] - bundle.h[x])


def td_matrix(reward: np.ndarray, eta: float, h: np.ndarray) -> np.ndarray:
    """d(x, y) for every pair of states."""
    return (np.asarray(reward) - eta - h)[:, None] + h[None, :]


def _transition_weights(mdp: Mdp, pi: np.ndarray, mu: np.ndarray) -> np.ndarray:
    # pi(x) mu(u|x) P(y|x,u), indexed (x, u, y)
    return pi[:, None, None] * mu[:, :, None] * np.transpose(mdp.transitions, (1, 0, 2))


def _chain(mdp: Mdp, fs: FeatureSet, theta):
    if fs.n_states != mdp.n_states or fs.n_actions != mdp.n_actions:
        raise ParameterError("feature set does not match the MDP dimensions")
    mu = policy_matrix(fs, theta)
    P = transition_under_policy(mdp, mu)
    pi = stationary_distribution(P)
    eta = average_reward(pi, mdp.state_reward)
    x_star = anchor_state(pi)
    h = differential_value(P, mdp.state_reward, eta, x_star)
    return mu, P, pi, eta, x_star, h


def _gradients(mdp, fs, theta, mu, pi, eta, h):
    weights = _transition_weights(mdp, pi, mu)
    psi = likelihood_ratio_all(fs, theta)
    d = td_matrix(mdp.state_reward, eta, h)
    grad_td = np.einsum("xuy,xy,xuk->k", weights, d, psi)
    grad_h = np.einsum("xuy,y,xuk->k", weights, h, psi)
    return grad_td, grad_h


def gradient_exact(mdp: Mdp, fs: FeatureSet, theta) -> tuple[np.ndarray, np.ndarray]:
    """Policy gradient computed from the TD signal and from h(y) directly."""
    theta = as_theta(theta)
    mu, P, pi, eta, x_star, h = _chain(mdp, fs, theta)
    return _gradients(mdp, fs, theta, mu, pi, eta, h)


def eta_of_theta(mdp: Mdp, fs: FeatureSet, theta) -> float:
    mu = policy_matrix(fs, theta)
    pi = stationary_distribution(transition_under_policy(mdp, mu), check=False)
    return average_reward(pi, mdp.state_reward)


def critic_ode_from_chain(P, pi, eta, reward, phi, lam):
    if not 0.0 <= lam < 1.0:
        raise ParameterError(f"lambda must lie in [0, 1), got {lam}")
    n = P.shape[0]
    S = _solve(np.eye(n) - lam * P, np.eye(n), "resolvent (I - lambda P)")
    weighted = phi.T * pi  # Phi' Pi
    G = weighted @ S
    M = (1.0 - lam) * S @ P
    A = weighted @ (M - np.eye(n)) @ phi
    b = G @ (np.asarray(reward) - eta)
    return A, b, G, M


def critic_ode_quantities(mdp: Mdp, fs: FeatureSet, theta, lam: float):
    """(A, b, G, M) of the mean critic dynamics at theta."""
    theta = as_theta(theta)
    _, P, pi, eta, _, _ = _chain(mdp, fs, theta)
    return critic_ode_from_chain(P, pi, eta, mdp.state_reward, fs.phi, lam)


def td_fixed_point(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """w* = -A^{-1} b. A singular A signals a basis that represents the constant."""
    return _solve(np.asarray(A, dtype=float), -np.asarray(b, dtype=float), "TD fixed point")


def td_fixed_point_min_norm(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-norm solution of A w = -b and an orthonormal basis of null(A).

    Bases with exactly l ones per row always contain the constant direction,
    which leaves A singular; the TD update cannot move w along that null
    direction in the mean, so critic errors are measured modulo it.
    """
    U, s, Vt = np.linalg.svd(A)
    keep = s > NULL_RTOL * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    w = -(Vt.T * inv) @ (U.T @ b)
    return w, Vt[~keep].T


def critic_distance(w: np.ndarray, w_star: np.ndarray, null_basis: np.ndarray) -> float:
    diff = np.asarray(w) - w_star
    if null_basis.size:
        diff = diff - null_basis @ (null_basis.T @ diff)
    return float(np.linalg.norm(diff))


def projected_weights_and_error(fs: FeatureSet, pi: np.ndarray, h: np.ndarray):
    """Best Pi-weighted least-squares fit of h in span(Phi) and its residual norm."""
    phi = fs.phi
    weighted = phi.T * pi
    w = _solve(weighted @ phi, weighted @ h, "projection normal equations")
    resid = h - phi @ w
    return w, float(np.sqrt(pi @ resid ** 2))


def check_negative_definite(A: np.ndarray) -> tuple[bool, float]:
    """gamma = -(largest eigenvalue of the symmetric part); negative definite iff gamma > 0."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError(f"A must be square, got {A.shape}")
    gamma = -float(np.linalg.eigvalsh(0.5 * (A + A.T))[-1])
    return gamma > 0, gamma


def compute_bundle(mdp: Mdp, fs: FeatureSet, theta, lam: float = 0.5) -> OracleBundle:
    theta = as_theta(theta)
    mu, P, pi, eta, x_star, h = _chain(mdp, fs, theta)
    grad_td, grad_h = _gradients(mdp, fs, theta, mu, pi, eta, h)
    A, b, G, M = critic_ode_from_chain(P, pi, eta, mdp.state_reward, fs.phi, lam)
    w_td, null_basis = td_fixed_point_min_norm(A, b)
    w_proj, eps = projected_weights_and_error(fs, pi, h)
    return OracleBundle(theta=theta, lam=lam, P=P, pi=pi, eta=eta, x_star=x_star, h=h,
                        grad_eta=grad_td, grad_eta_h=grad_h, A=A, b=b, G=G, M=M,
                        w_star_td=w_td, critic_null_dim=null_basis.shape[1],
                        w_star_proj=w_proj, eps_app=eps)
