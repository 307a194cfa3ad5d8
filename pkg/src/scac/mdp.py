"""Finite MDPs, GARNET instance generation and chain validation.

Random draws are taken from a ``numpy.random.Generator`` (PCG64). The draw
order of every stochastic function is part of its contract and is documented
on the function, so runs reproduce bit-for-bit across platforms.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import ParameterError

MDP_FORMAT = "scac.mdp"
MDP_FORMAT_VERSION = 1
ROW_TOL = 1e-12
MAX_GARNET_RETRIES = 1000


@dataclass(frozen=True)
class GarnetSpec:
    """Parameters of a GARNET(X, U, B, sigma) instance plus its critic basis size.

    ``sigma`` is the reward noise standard deviation, so the per-transition
    observation variance is ``sigma**2``.
    """

    X: int
    U: int
    B: int
    sigma: float
    L: int = 8
    l: int = 3

    def validate(self) -> None:
        if self.X < 1 or self.U < 1:
            raise ParameterError(f"need X >= 1 and U >= 1, got X={self.X}, U={self.U}")
        if not 1 <= self.B <= self.X:
            raise ParameterError(f"branching factor B={self.B} must lie in [1, X={self.X}]")
        if not 1 <= self.l <= self.L:
            raise ParameterError(f"need 1 <= l <= L, got l={self.l}, L={self.L}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ParameterError(f"sigma must be finite and >= 0, got {self.sigma}")

    @classmethod
    def parse(cls, text: str, L: int = 8, l: int = 3) -> "GarnetSpec":
        """Parse ``"X,U,B,sigma"`` as written on the command line."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ParameterError(f"expected X,U,B,sigma, got {text!r}")
        try:
            spec = cls(int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3]), L, l)
        except ValueError as exc:
            raise ParameterError(f"malformed GARNET spec {text!r}") from exc
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        return {"X": self.X, "U": self.U, "B": self.B, "sigma": self.sigma,
                "L": self.L, "l": self.l}


@dataclass(frozen=True)
class Mdp:
    transitions: np.ndarray  # (U, X, X), P[u, x, y]
    state_reward: np.ndarray  # (X,)
    reward_noise_var: float = 0.0
    spec: GarnetSpec | None = None
    seed: int | None = None
    retries: int = 0

    def __post_init__(self):
        P = np.array(self.transitions, dtype=float)
        r = np.array(self.state_reward, dtype=float)
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise ParameterError(f"transitions must have shape (U, X, X), got {P.shape}")
        if r.shape != (P.shape[1],):
            raise ParameterError(f"state_reward must have length {P.shape[1]}, got {r.shape}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > ROW_TOL:
            raise ParameterError("every transition row must be a probability vector")
        if not np.all(np.isfinite(r)):
            raise ParameterError("state rewards must be finite")
        if not self.reward_noise_var >= 0:
            raise ParameterError("reward_noise_var must be >= 0")
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "state_reward", r)

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_states(self) -> int:
        return self.transitions.shape[1]

    def to_dict(self) -> dict:
        return {
            "format": MDP_FORMAT,
            "version": MDP_FORMAT_VERSION,
            "spec": None if self.spec is None else self.spec.to_dict(),
            "seed": self.seed,
            "retries": self.retries,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "reward_noise_var": self.reward_noise_var,
            "state_reward": self.state_reward.tolist(),
            "transitions": self.transitions.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mdp":
        if data.get("format") != MDP_FORMAT:
            raise ParameterError(f"not an MDP document: format={data.get('format')!r}")
        if data.get("version") != MDP_FORMAT_VERSION:
            raise ParameterError(f"unsupported MDP format version {data.get('version')!r}")
        spec = data.get("spec")
        return cls(
            transitions=np.asarray(data["transitions"], dtype=float),
            state_reward=np.asarray(data["state_reward"], dtype=float),
            reward_noise_var=float(data["reward_noise_var"]),
            spec=None if spec is None else GarnetSpec(**spec),
            seed=data.get("seed"),
            retries=int(data.get("retries", 0)),
        )

    def dumps(self) -> str:
        # json writes floats with repr(), which round-trips exactly
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Mdp":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "Mdp":
        return cls.loads(Path(path).read_text())


@dataclass(frozen=True)
class ChainReport:
    irreducible: bool
    aperiodic: bool
    period: int

    @property
    def ergodic(self) -> bool:
        return self.irreducible and self.aperiodic


def _garnet_draw(spec: GarnetSpec, rng: np.random.Generator):
    X, U, B = spec.X, spec.U, spec.B
    P = np.zeros((U, X, X))
    for u in range(U):
        for x in range(X):
            targets = rng.choice(X, size=B, replace=False)
            cuts = np.sort(rng.random(B - 1))
            P[u, x, targets] = np.diff(np.concatenate(([0.0], cuts, [1.0])))
    rewards = rng.standard_normal(X)
    return P, rewards


def garnet_generate(spec: GarnetSpec, seed: int) -> Mdp:
    """Generate a GARNET instance that is ergodic under the uniform policy.

    Draw order for a given seed: for each action ``u`` then each state ``x``,
    ``choice(X, B, replace=False)`` for the targets followed by ``random(B-1)``
    cut points; then ``standard_normal(X)`` for the state rewards. If the
    uniform-policy chain is not irreducible and aperiodic the instance is
    redrawn with ``seed + 1`` and the retry count is recorded.

    Since softmax policies give every action positive probability, the support
    of P(theta) equals the uniform-policy support, so one check covers every
    theta.
    """
    spec.validate()
    for retry in range(MAX_GARNET_RETRIES):
        rng = np.random.default_rng(seed + retry)
        P, rewards = _garnet_draw(spec, rng)
        uniform = np.full((spec.X, spec.U), 1.0 / spec.U)
        if validate_chain(transition_under_policy_raw(P, uniform)).ergodic:
            # stored seed is the requested one; retries locate the used stream
            return Mdp(P, rewards, spec.sigma ** 2, spec=spec, seed=seed, retries=retry)
    raise ParameterError(f"no ergodic GARNET instance within {MAX_GARNET_RETRIES} seeds")


def transition_under_policy_raw(P: np.ndarray, policy_matrix: np.ndarray) -> np.ndarray:
    return np.einsum("xu,uxy->xy", policy_matrix, P)


def transition_under_policy(mdp: Mdp, policy_matrix: np.ndarray) -> np.ndarray:
    """Chain transition matrix ``P(y|x) = sum_u mu(u|x) P(y|x,u)``."""
    mu = np.asarray(policy_matrix, dtype=float)
    if mu.shape != (mdp.n_states, mdp.n_actions):
        raise ParameterError(
            f"policy matrix must have shape {(mdp.n_states, mdp.n_actions)}, got {mu.shape}")
    if np.any(mu < 0) or np.max(np.abs(mu.sum(axis=1) - 1.0)) > 1e-10:
        raise ParameterError("policy rows must be probability vectors")
    return transition_under_policy_raw(mdp.transitions, mu)


def sample_step(mdp: Mdp, x: int, u: int, rng: np.random.Generator) -> tuple[int, float]:
    """One environment transition from ``x`` under action ``u``.

    Consumes exactly one ``random()`` (next state, inverse CDF in index order)
    and then one ``standard_normal()`` (reward noise), even when the noise
    variance is zero.
    """
    if not (0 <= x < mdp.n_states and 0 <= u < mdp.n_actions):
        raise IndexError(f"state {x} or action {u} out of range")
    row = mdp.transitions[u, x]
    y = inverse_cdf(row, rng.random())
    noise = rng.standard_normal()
    return y, float(mdp.state_reward[x] + math.sqrt(mdp.reward_noise_var) * noise)


def inverse_cdf(probs: np.ndarray, v: float) -> int:
    """Smallest index whose cumulative probability exceeds ``v``."""
    c = 0.0
    last = 0
    for i, p in enumerate(probs):
        if p > 0:
            last = i
        c += p
        if v < c:
            return i
    # v within rounding of 1: fall back to the last supported index
    return last


def validate_chain(P: np.ndarray) -> ChainReport:
    """Irreducibility and period of a row-stochastic matrix."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ParameterError(f"chain matrix must be square, got {P.shape}")
    if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-9:
        raise ParameterError("chain matrix must be row-stochastic")
    graph = csr_matrix(P > 0)
    n_comp, _ = connected_components(graph, directed=True, connection="strong")
    irreducible = n_comp == 1
    period = _period(graph, P.shape[0])
    return ChainReport(irreducible=irreducible, aperiodic=period == 1, period=period)


def _period(graph: csr_matrix, n: int) -> int:
    # gcd of level[u] + 1 - level[v] over edges reachable from state 0
    order, _ = breadth_first_order(graph, 0, directed=True, return_predecessors=True)
    level = np.full(n, -1)
    level[0] = 0
    for u in order:
        for v in graph.indices[graph.indptr[u]:graph.indptr[u + 1]]:
            if level[v] < 0:
                level[v] = level[u] + 1
    g = 0
    for u in order:
        for v in graph.indices[graph.indptr[u]:graph.indptr[u + 1]]:
            g = math.gcd(g, int(level[u] + 1 - level[v]))
    return g if g > 0 else 1
