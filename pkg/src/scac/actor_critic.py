"""Online actor-critic iterates: single time scale and the two-time-scale baseline.

Every step draws one variate from each of three independent streams (action
choice, next state, reward noise), spawned from one seed. Splitting the
streams this way lets the compiled trajectory kernel pre-draw whole blocks
while consuming exactly the same numbers as the step-by-step functions, and
lets paired experiments share the environment streams across algorithms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .errors import NumericalFailure, ParameterError
from .mdp import Mdp, inverse_cdf
from .policy import FeatureSet, likelihood_ratio, policy_distribution

SCHEDULE_KINDS = ("single", "two_scale_critic_w", "two_scale_critic_eta", "two_scale_actor")
CRITIC_ETA_FACTOR = 0.95


@dataclass(frozen=True)
class ScheduleSpec:
    """Step sizes ``c0 / (c1 + n**p)``, scaled by 0.95 for the critic-eta kind."""

    c0: float
    c1: float
    p: float
    kind: str = "single"

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ParameterError(f"unknown schedule kind {self.kind!r}")
        if not (self.c0 > 0 and self.c1 >= 0):
            raise ParameterError("schedule needs c0 > 0 and c1 >= 0")
        if not 0.5 < self.p <= 1.0:
            raise ParameterError(f"exponent p={self.p} violates sum(g)=inf, sum(g^2)<inf")

    @property
    def factor(self) -> float:
        return CRITIC_ETA_FACTOR if self.kind == "two_scale_critic_eta" else 1.0

    def to_dict(self) -> dict:
        return {"c0": self.c0, "c1": self.c1, "p": self.p, "kind": self.kind}


def step_size(spec: ScheduleSpec, n: int) -> float:
    if n < 1:
        raise ParameterError(f"step index must be >= 1, got {n}")
    return spec.factor * spec.c0 / (spec.c1 + n ** spec.p)


# critic-w and actor schedules of the compared two-time-scale experiments
SCHEDULE_PRESETS = {
    "small": (ScheduleSpec(100.0, 1000.0, 2.0 / 3.0), ScheduleSpec(1000.0, 1e5, 1.0)),
    "large": (ScheduleSpec(1e5, 1e6, 2.0 / 3.0), ScheduleSpec(1e6, 1e8, 1.0)),
}


@dataclass(frozen=True)
class AlgoConfig:
    algorithm: str = "single"
    gamma_eta: float = 1.0
    gamma_w: float = 1.0
    lam: float = 0.5
    b_w: float = 1e3
    schedule: ScheduleSpec = field(default_factory=lambda: SCHEDULE_PRESETS["small"][0])
    actor_schedule: ScheduleSpec = field(default_factory=lambda: SCHEDULE_PRESETS["small"][1])
    freeze_actor: bool = False

    def __post_init__(self):
        if self.algorithm not in ("single", "two_scale"):
            raise ParameterError(f"algorithm must be 'single' or 'two_scale', got {self.algorithm!r}")
        if not (self.gamma_eta > 0 and self.gamma_w > 0):
            raise ParameterError("gamma_eta and gamma_w must be positive")
        if not 0.0 <= self.lam < 1.0:
            raise ParameterError(f"lambda must lie in [0, 1), got {self.lam}")
        if not self.b_w > 0:
            raise ParameterError("b_w must be positive")

    @classmethod
    def preset(cls, algorithm: str, size: str = "small", **overrides) -> "AlgoConfig":
        critic, actor = SCHEDULE_PRESETS[size]
        return cls(algorithm=algorithm, schedule=critic, actor_schedule=actor, **overrides)

    @property
    def effective_lam(self) -> float:
        # the baseline is a TD(0) method
        return self.lam if self.algorithm == "single" else 0.0

    def schedules(self) -> tuple[ScheduleSpec, ScheduleSpec, ScheduleSpec]:
        """(eta, w, theta) schedules with their constant multipliers folded in."""
        s = self.schedule
        if self.algorithm == "single":
            base = replace(s, kind="single")
            return base, base, base
        return (replace(s, kind="two_scale_critic_eta"), replace(s, kind="two_scale_critic_w"),
                replace(self.actor_schedule, kind="two_scale_actor"))

    def multipliers(self) -> tuple[float, float]:
        if self.algorithm == "single":
            return self.gamma_eta, self.gamma_w
        return 1.0, 1.0

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm, "gamma_eta": self.gamma_eta, "gamma_w": self.gamma_w,
            "lambda": self.lam, "b_w": self.b_w, "schedule": self.schedule.to_dict(),
            "actor_schedule": self.actor_schedule.to_dict(), "freeze_actor": self.freeze_actor,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AlgoConfig":
        return cls(algorithm=data["algorithm"], gamma_eta=data["gamma_eta"],
                   gamma_w=data["gamma_w"], lam=data["lambda"], b_w=data["b_w"],
                   schedule=ScheduleSpec(**data["schedule"]),
                   actor_schedule=ScheduleSpec(**data["actor_schedule"]),
                   freeze_actor=data.get("freeze_actor", False))


@dataclass
class AgentState:
    theta: np.ndarray
    w: np.ndarray
    eta_tilde: float
    elig: np.ndarray
    n: int
    x: int

    @classmethod
    def initial(cls, fs: FeatureSet, x0: int = 0) -> "AgentState":
        return cls(theta=np.zeros(fs.K), w=np.zeros(fs.L), eta_tilde=0.0,
                   elig=np.zeros(fs.L), n=0, x=x0)

    def copy(self) -> "AgentState":
        return AgentState(self.theta.copy(), self.w.copy(), self.eta_tilde,
                          self.elig.copy(), self.n, self.x)


@dataclass
class RunStreams:
    action: np.random.Generator
    transition: np.random.Generator
    noise: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RunStreams":
        a, t, z = np.random.SeedSequence(seed).spawn(3)
        return cls(np.random.default_rng(a), np.random.default_rng(t), np.random.default_rng(z))


def project_weights(w: np.ndarray, b_w: float) -> np.ndarray:
    """Componentwise clamp of the critic weights to [-b_w, b_w]."""
    if not b_w > 0:
        raise ParameterError("b_w must be positive")
    return np.clip(w, -b_w, b_w)


def _generic_step(state: AgentState, mdp: Mdp, fs: FeatureSet, config: AlgoConfig,
                  streams: RunStreams) -> AgentState:
    n = state.n + 1
    x = state.x
    sched_eta, sched_w, sched_theta = config.schedules()
    mult_eta, mult_w = config.multipliers()
    g_eta = mult_eta * step_size(sched_eta, n)
    g_w = mult_w * step_size(sched_w, n)
    g_theta = step_size(sched_theta, n)

    u = inverse_cdf(policy_distribution(fs, state.theta, x), streams.action.random())
    y = inverse_cdf(mdp.transitions[u, x], streams.transition.random())
    r = mdp.state_reward[x] + math.sqrt(mdp.reward_noise_var) * streams.noise.standard_normal()

    eta_next = state.eta_tilde + g_eta * (r - state.eta_tilde)
    d = r - state.eta_tilde + fs.phi[y] @ state.w - fs.phi[x] @ state.w
    elig = config.effective_lam * state.elig + fs.phi[x]
    w = project_weights(state.w + g_w * d * elig, config.b_w)
    theta = state.theta
    if not config.freeze_actor:
        theta = state.theta + g_theta * likelihood_ratio(fs, state.theta, x, u) * d

    new = AgentState(theta=theta, w=w, eta_tilde=float(eta_next), elig=elig, n=n, x=int(y))
    if not (math.isfinite(new.eta_tilde) and np.all(np.isfinite(w)) and np.all(np.isfinite(theta))):
        raise NumericalFailure("non-finite iterate", step=n, state=state)
    return new


def algorithm1_step(state: AgentState, mdp: Mdp, fs: FeatureSet, config: AlgoConfig,
                    streams: RunStreams) -> AgentState:
    """One single-time-scale step; every iterate shares the base step size."""
    if config.algorithm != "single":
        config = replace(config, algorithm="single")
    return _generic_step(state, mdp, fs, config, streams)


def baseline_two_timescale_step(state: AgentState, mdp: Mdp, fs: FeatureSet,
                                config: AlgoConfig, streams: RunStreams) -> AgentState:
    """One step of the TD(0) two-time-scale baseline with separate schedules."""
    if config.algorithm != "two_scale":
        config = replace(config, algorithm="two_scale")
    return _generic_step(state, mdp, fs, config, streams)


def step(state, mdp, fs, config, streams):
    if config.algorithm == "single":
        return algorithm1_step(state, mdp, fs, config, streams)
    return baseline_two_timescale_step(state, mdp, fs, config, streams)


@njit(cache=True)
def _kernel(P, rbar, noise_sd, phi, n_actions, theta, w, elig, scalars, x, n0,
            u_act, u_tr, z, sched, lam, b_w, freeze_actor):
    # scalars[0] holds eta_tilde; sched rows are (c0, c1, p, multiplier) for eta, w, theta
    L = phi.shape[1]
    logits = np.empty(n_actions)
    mu = np.empty(n_actions)
    for k in range(u_act.shape[0]):
        n = n0 + k + 1
        g_eta = sched[0, 3] * sched[0, 0] / (sched[0, 1] + n ** sched[0, 2])
        g_w = sched[1, 3] * sched[1, 0] / (sched[1, 1] + n ** sched[1, 2])
        g_th = sched[2, 3] * sched[2, 0] / (sched[2, 1] + n ** sched[2, 2])

        mx = -np.inf
        for a in range(n_actions):
            s = 0.0
            for j in range(L):
                s += theta[a * L + j] * phi[x, j]
            logits[a] = s
            if s > mx:
                mx = s
        tot = 0.0
        for a in range(n_actions):
            mu[a] = np.exp(logits[a] - mx)
            tot += mu[a]
        for a in range(n_actions):
            mu[a] /= tot

        u = _icdf(mu, u_act[k])
        y = _icdf(P[u, x], u_tr[k])
        r = rbar[x] + noise_sd * z[k]

        eta = scalars[0]
        vy = 0.0
        vx = 0.0
        for j in range(L):
            vy += phi[y, j] * w[j]
            vx += phi[x, j] * w[j]
        d = r - eta + vy - vx
        scalars[0] = eta + g_eta * (r - eta)
        for j in range(L):
            elig[j] = lam * elig[j] + phi[x, j]
            wj = w[j] + g_w * d * elig[j]
            if wj > b_w:
                wj = b_w
            elif wj < -b_w:
                wj = -b_w
            w[j] = wj
        if not freeze_actor:
            for a in range(n_actions):
                coef = ((1.0 if a == u else 0.0) - mu[a]) * g_th * d
                for j in range(L):
                    theta[a * L + j] += coef * phi[x, j]
        if not (np.isfinite(scalars[0]) and np.isfinite(d)):
            return x, n
        x = y
    return x, -1


@njit(cache=True)
def _icdf(probs, v):
    c = 0.0
    last = 0
    for i in range(probs.shape[0]):
        if probs[i] > 0:
            last = i
        c += probs[i]
        if v < c:
            return i
    return last


def advance(state: AgentState, mdp: Mdp, fs: FeatureSet, config: AlgoConfig,
            streams: RunStreams, n_steps: int) -> AgentState:
    """Run ``n_steps`` steps with the compiled kernel; same draws as repeated ``step``."""
    if n_steps <= 0:
        return state.copy()
    new = state.copy()
    u_act = streams.action.random(n_steps)
    u_tr = streams.transition.random(n_steps)
    z = streams.noise.standard_normal(n_steps)
    sched = np.array([[s.c0, s.c1, s.p, s.factor * m]
                      for s, m in zip(config.schedules(), (*config.multipliers(), 1.0))])
    scalars = np.array([new.eta_tilde])
    x, bad = _kernel(mdp.transitions, mdp.state_reward, math.sqrt(mdp.reward_noise_var),
                     fs.phi, fs.n_actions, new.theta, new.w, new.elig, scalars, new.x,
                     new.n, u_act, u_tr, z, sched, config.effective_lam, config.b_w,
                     config.freeze_actor)
    if bad >= 0 or not (np.all(np.isfinite(new.theta)) and np.all(np.isfinite(new.w))):
        raise NumericalFailure("non-finite iterate", step=bad if bad >= 0 else None, state=state)
    new.eta_tilde = float(scalars[0])
    new.x = int(x)
    new.n = state.n + n_steps
    return new
