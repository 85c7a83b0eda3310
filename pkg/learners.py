#!/usr/bin/env python3
"""
Episodic tabular Q-learning with UCB-Hoeffding bonuses.

Three variants share one interface:
  UCBH          - the baseline: Q initialized to H, every (x, a, h) updated.
  MAXOPT        - Max-Optimal initialization: Q = Q* everywhere except the
                  special triple (x1, a1, h=1), which starts at H and is the
                  only entry ever updated.
  MAXOPT_NO_A2  - same initialization, but every triple is updated with its
                  own visit counter (the restriction to the special triple
                  is dropped).

Update rule for a visited (x, a, h) with counter t = N + 1:
    Q <- (1 - alpha_t) Q + alpha_t (r + V[h+1](x') + b_t)
    alpha_t = (H + 1) / (H + t),  b_t = c * sqrt(H^3 * iota / t)
with iota = ln(S*A*T/p), T = K*H, for UCBH and iota' = ln(K/p) for both
Max-Optimal variants. All indices are 0-based.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from exact_solver import DeterministicPolicy, ValueTables, greedy_policy_from_q
from mdp_core import InvariantViolation, RngStream

logger = logging.getLogger(__name__)

TIE_SMALLEST_INDEX = "smallest_index"
TIE_SEEDED_RANDOM = "seeded_random"
TIE_RULES = (TIE_SMALLEST_INDEX, TIE_SEEDED_RANDOM)


class Variant(str, Enum):
    UCBH = "UCBH"
    MAXOPT = "MAXOPT"
    MAXOPT_NO_A2 = "MAXOPT_NO_A2"

    @property
    def max_optimal(self) -> bool:
        return self is not Variant.UCBH


class LearnerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparameters:
    c: float
    p: float
    K: int
    H: int
    S: int
    A: int

    @property
    def T(self) -> int:
        return self.K * self.H


@dataclass(frozen=True)
class Transition:
    x: int
    a: int
    h: int
    r: float
    x_next: int


@dataclass
class LearnerState:
    variant: Variant
    Q: np.ndarray  # (H, S, A)
    V: np.ndarray  # (H + 1, S); for Max-Optimal variants rows 1..H hold V*
    N: np.ndarray  # (H, S, A) visit counters
    hyper: Hyperparameters
    iota: float
    special: Optional[Tuple[int, int]] = None
    q_star_ref: Optional[ValueTables] = None
    tie_rule: str = TIE_SMALLEST_INDEX
    updates: int = 0


def create_learner(variant, spec_dims: Tuple[int, int, int], K: int, p: float, c: float,
                   q_star: Optional[ValueTables] = None, special: Optional[Tuple[int, int]] = None,
                   tie_rule: str = TIE_SMALLEST_INDEX, use_iota_prime: bool = False) -> LearnerState:
    """
    Build a learner. spec_dims is (S, A, H). q_star and special are required
    exactly for the Max-Optimal variants. use_iota_prime makes the UCBH
    baseline use ln(K/p) instead of ln(SAT/p).
    """
    variant = Variant(variant)
    S, A, H = (int(d) for d in spec_dims)

    if not 0.0 < p < 1.0:
        raise LearnerConfigError(f"p must lie in (0, 1), got {p}")
    if p > 0.5:
        logger.warning(f"p={p} is above 1/2; the regret guarantee is stated for p in (0, 1/2]")
    if K < 1:
        raise LearnerConfigError(f"K must be at least 1, got {K}")
    if c < 0:
        raise LearnerConfigError(f"c must be non-negative, got {c}")
    if tie_rule not in TIE_RULES:
        raise LearnerConfigError(f"Unknown tie rule '{tie_rule}', expected one of {TIE_RULES}")

    hyper = Hyperparameters(c=float(c), p=float(p), K=int(K), H=H, S=S, A=A)
    N = np.zeros((H, S, A), dtype=np.int64)

    if variant.max_optimal:
        if q_star is None or special is None:
            raise LearnerConfigError(f"{variant.value} needs both the optimal tables and the special (x1, a1) pair")
        if q_star.Q.shape != (H, S, A):
            raise LearnerConfigError(f"optimal Q has shape {q_star.Q.shape}, expected {(H, S, A)}")
        x1, a1 = (int(i) for i in special)
        if not (0 <= x1 < S and 0 <= a1 < A):
            raise LearnerConfigError(f"special pair (x{x1 + 1}, a{a1 + 1}) is outside S={S}, A={A}")

        Q = np.array(q_star.Q, dtype=float)
        Q[0, x1, a1] = float(H)
        V = np.zeros((H + 1, S))
        # Rows h >= 2 (1-based) are V* and stay cached; row 1 follows the usual cap
        V[1:H] = np.asarray(q_star.V, dtype=float)[1:H]
        V[0] = np.minimum(H, Q[0].max(axis=1))
        iota = math.log(K / p)
        special = (x1, a1)
    else:
        Q = np.full((H, S, A), float(H))
        V = np.zeros((H + 1, S))
        V[:H] = float(H)
        iota = math.log(K / p) if use_iota_prime else math.log(S * A * hyper.T / p)
        special = None
        q_star = None

    logger.debug(f"Created {variant.value} learner S={S} A={A} H={H} K={K} p={p} c={c} iota={iota:.4f}")
    return LearnerState(variant=variant, Q=Q, V=V, N=N, hyper=hyper, iota=iota,
                        special=special, q_star_ref=q_star, tie_rule=tie_rule)


def alpha(t: int, H: int) -> float:
    if t < 1:
        raise ValueError(f"learning rate is defined for t >= 1, got t={t}")
    return (H + 1) / (H + t)


def bonus(t: int, state: LearnerState) -> float:
    if t < 1:
        raise ValueError(f"bonus is defined for t >= 1, got t={t}")
    H = state.hyper.H
    return state.hyper.c * math.sqrt(H ** 3 * state.iota / t)


def select_action(state: LearnerState, x: int, h: int, rng: Optional[RngStream] = None,
                  snapshot: Optional[DeterministicPolicy] = None) -> int:
    """
    Greedy action at (x, h). With a snapshot taken at the start of the
    episode, its action is returned: rows for steps h and later are not
    updated before step h of the same episode, so it is still greedy.
    """
    if snapshot is not None:
        return snapshot(h, x)
    row = state.Q[h, x]
    if state.tie_rule == TIE_SEEDED_RANDOM:
        best = np.flatnonzero(row == row.max())
        if len(best) > 1:
            if rng is None:
                raise ValueError("seeded_random tie rule needs a tie-break stream")
            return rng.choice(best)
        return int(best[0])
    return int(np.argmax(row))


def observe(state: LearnerState, tr: Transition) -> LearnerState:
    """Apply one transition; MAXOPT ignores everything but its special triple."""
    H = state.hyper.H
    x, a, h = tr.x, tr.a, tr.h

    if state.variant is Variant.MAXOPT and (h != 0 or (x, a) != state.special):
        return state

    state.N[h, x, a] += 1
    t = int(state.N[h, x, a])
    step_size = alpha(t, H)
    target = tr.r + state.V[h + 1, tr.x_next] + bonus(t, state)
    state.Q[h, x, a] = (1.0 - step_size) * state.Q[h, x, a] + step_size * target

    if state.variant is not Variant.MAXOPT:
        state.V[h, x] = min(float(H), float(state.Q[h, x].max()))

    if not math.isfinite(state.Q[h, x, a]):
        raise InvariantViolation(f"Q[{h + 1}][x{x + 1}][a{a + 1}] became {state.Q[h, x, a]}")
    state.updates += 1
    return state


def greedy_policy(state: LearnerState, rng: Optional[RngStream] = None) -> DeterministicPolicy:
    """Greedy snapshot under the learner's tie rule; seeded_random ties draw from rng in (h, x) order"""
    policy = greedy_policy_from_q(state.Q)
    if state.tie_rule == TIE_SEEDED_RANDOM:
        H, S, _ = state.Q.shape
        for h in range(H):
            for x in range(S):
                policy.actions[h, x] = select_action(state, x, h, rng)
    return policy


def dump_tables(state: LearnerState) -> ValueTables:
    return ValueTables(state.Q.copy(), state.V.copy())


def alpha_weights(t: int, H: int) -> np.ndarray:
    """
    Weights (a_t^0, a_t^1, ..., a_t^t) of the unrolled update:
    a_t^0 = prod_{j<=t} (1 - alpha_j), a_t^i = alpha_i prod_{i<j<=t} (1 - alpha_j).
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if t == 0:
        return np.ones(1)
    rates = (H + 1) / (H + np.arange(1, t + 1, dtype=float))
    suffix = np.ones(t + 1)
    suffix[:t] = np.cumprod((1.0 - rates)[::-1])[::-1]
    weights = suffix.copy()
    weights[1:] *= rates
    return weights


def beta(t: int, state: LearnerState) -> float:
    if t < 1:
        raise ValueError(f"beta is defined for t >= 1, got t={t}")
    H = state.hyper.H
    bonuses = state.hyper.c * np.sqrt(H ** 3 * state.iota / np.arange(1, t + 1, dtype=float))
    return 2.0 * float(np.dot(alpha_weights(t, H)[1:], bonuses))


def optimism_gap(state: LearnerState) -> Tuple[float, float]:
    """
    (Q1 - Q1*)(x1, a1) and its upper bound a_t^0 H + beta_t at the current
    visit count t of the special triple; beta_0 is taken as 0.
    """
    if state.q_star_ref is None or state.special is None:
        raise LearnerConfigError("optimism diagnostic needs a Max-Optimal learner")
    x1, a1 = state.special
    H = state.hyper.H
    t = int(state.N[0, x1, a1])
    gap = float(state.Q[0, x1, a1] - state.q_star_ref.Q[0, x1, a1])
    upper = float(alpha_weights(t, H)[0] * H) + (beta(t, state) if t >= 1 else 0.0)
    return gap, upper
