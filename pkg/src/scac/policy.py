"""Binary critic features and the linear-softmax actor."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .mdp import GarnetSpec, inverse_cdf

MAX_FEATURE_ATTEMPTS = 200
# keeps the feature stream distinct from the instance stream of the same seed
FEATURE_STREAM_TAG = 0xFEA7


@dataclass(frozen=True)
class FeatureSet:
    """Critic basis ``phi`` (|X| x L) and the number of actions.

    The actor feature xi(x, u) of length L*|U| is phi(x) placed in block u,
    so theta reshaped to (|U|, L) holds one row of weights per action.
    """

    phi: np.ndarray
    n_actions: int

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim != 2:
            raise ParameterError(f"phi must be a matrix, got shape {phi.shape}")
        if self.n_actions < 1:
            raise ParameterError("n_actions must be >= 1")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    @property
    def L(self) -> int:
        return self.phi.shape[1]

    @property
    def K(self) -> int:
        return self.phi.shape[1] * self.n_actions

    def to_dict(self) -> dict:
        return {"n_actions": self.n_actions, "phi": self.phi.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureSet":
        return cls(np.asarray(data["phi"], dtype=float), int(data["n_actions"]))


@dataclass(frozen=True)
class PolicyParams:
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", as_theta(self.theta))


def as_theta(theta) -> np.ndarray:
    if isinstance(theta, PolicyParams):
        return theta.theta
    t = np.asarray(theta, dtype=float)
    if t.ndim != 1:
        raise ParameterError(f"theta must be a vector, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ParameterError("theta has non-finite entries")
    return t


def has_constant_in_span(phi: np.ndarray) -> bool:
    """True when the all-ones vector is a linear combination of the columns."""
    aug = np.column_stack([phi, np.ones(phi.shape[0])])
    return np.linalg.matrix_rank(aug) <= np.linalg.matrix_rank(phi)


def build_feature_set(spec: GarnetSpec, seed: int, *, exclude_constant: bool = False,
                      normalize_columns: bool = False) -> FeatureSet:
    """Random binary critic basis with pairwise distinct rows.

    Default construction: every row has exactly ``l`` ones at uniformly drawn
    columns. Such a basis always represents the constant vector (the weights
    ``1/l`` reproduce it), so A(theta) is singular along that direction.

    ``exclude_constant=True`` draws the number of ones per row uniformly from
    ``1..l`` and rejects bases whose span contains the constant vector; this
    is the basis family on which A(theta) is strictly negative definite.

    Draw order: per state, optionally ``integers(1, l + 1)`` for the row
    weight, then ``choice(L, k, replace=False)``; a row duplicating an earlier
    one is redrawn in place. A basis failing the rank checks is redrawn from
    the same stream.
    """
    spec.validate()
    X, L, l = spec.X, spec.L, spec.l
    if exclude_constant:
        patterns = sum(math.comb(L, k) for k in range(1, l + 1))
        if L + 1 > X:
            raise ParameterError(f"a basis excluding the constant needs L + 1 <= X, got L={L}, X={X}")
    else:
        patterns = math.comb(L, l)
    if patterns < X:
        raise ParameterError(f"only {patterns} distinct feature rows exist for {X} states")
    if L > X:
        raise ParameterError(f"L={L} columns cannot be independent over X={X} states")

    rng = np.random.default_rng([seed, FEATURE_STREAM_TAG])
    for _ in range(MAX_FEATURE_ATTEMPTS):
        phi = np.zeros((X, L))
        seen: set[tuple] = set()
        for x in range(X):
            while True:
                k = int(rng.integers(1, l + 1)) if exclude_constant else l
                cols = tuple(sorted(rng.choice(L, size=k, replace=False).tolist()))
                if cols not in seen:
                    seen.add(cols)
                    break
            phi[x, list(cols)] = 1.0
        if np.linalg.matrix_rank(phi) < L:
            continue
        if exclude_constant and has_constant_in_span(phi):
            continue
        if normalize_columns:
            phi = phi / np.linalg.norm(phi, axis=0)
        return FeatureSet(phi, spec.U)
    raise ParameterError(f"no admissible basis after {MAX_FEATURE_ATTEMPTS} attempts")


def action_feature(fs: FeatureSet, x: int, u: int) -> np.ndarray:
    if not (0 <= x < fs.n_states and 0 <= u < fs.n_actions):
        raise IndexError(f"state {x} or action {u} out of range")
    xi = np.zeros(fs.K)
    xi[u * fs.L:(u + 1) * fs.L] = fs.phi[x]
    return xi


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def policy_distribution(fs: FeatureSet, theta, x: int) -> np.ndarray:
    t = as_theta(theta)
    return _softmax(t.reshape(fs.n_actions, fs.L) @ fs.phi[x])


def policy_matrix(fs: FeatureSet, theta) -> np.ndarray:
    """mu(u|x, theta) for every state, shape (|X|, |U|)."""
    t = as_theta(theta)
    return _softmax(fs.phi @ t.reshape(fs.n_actions, fs.L).T)


def likelihood_ratio(fs: FeatureSet, theta, x: int, u: int) -> np.ndarray:
    """Score ``grad mu / mu = xi(x,u) - sum_u' mu(u'|x) xi(x,u')``."""
    mu = policy_distribution(fs, theta, x)
    weights = -mu
    weights[u] += 1.0
    return np.outer(weights, fs.phi[x]).ravel()


def likelihood_ratio_all(fs: FeatureSet, theta) -> np.ndarray:
    """psi(x, u, theta) for every pair, shape (|X|, |U|, K)."""
    mu = policy_matrix(fs, theta)
    weights = np.eye(fs.n_actions)[None, :, :] - mu[:, None, :]  # (x, u, u')
    return np.einsum("xuv,xl->xuvl", weights, fs.phi).reshape(
        fs.n_states, fs.n_actions, fs.K)


def sample_action(fs: FeatureSet, theta, x: int, rng: np.random.Generator) -> int:
    """Draw an action; consumes exactly one ``random()``."""
    return inverse_cdf(policy_distribution(fs, theta, x), rng.random())
