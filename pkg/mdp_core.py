#!/usr/bin/env python3
"""
Finite-horizon tabular MDP model.
Holds the step-indexed transition and reward tables, validates them, and
samples initial states and transitions from seeded random streams.

Indexing: externally (docs, CLI output) states, actions and steps are
1-based (x1, a1, h=1). Internally and in JSON files everything is 0-based,
so x1 is index 0 and step h is stored at index h - 1.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

PROB_TOLERANCE = 1e-9

# Stream purposes; one RNG stream per (run, purpose)
PURPOSE_INIT_STATE = "init-state"
PURPOSE_TRANSITIONS = "transitions"
PURPOSE_TIE_BREAK = "tie-break"
PURPOSES = (PURPOSE_INIT_STATE, PURPOSE_TRANSITIONS, PURPOSE_TIE_BREAK)


class MdpStructureError(ValueError):
    """Table shapes disagree with the declared sizes, or an index is out of range."""


class MdpValidationError(ValueError):
    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__(f"MDP failed validation with {len(report.violations)} violation(s): "
                         + "; ".join(str(v) for v in report.violations[:5]))


class InvariantViolation(RuntimeError):
    """A runtime invariant (non-negative regret, finite Q values, ...) was broken."""


@dataclass(frozen=True, eq=False)
class MdpSpec:
    num_states: int
    num_actions: int
    horizon: int
    transitions: np.ndarray  # (H, S, A, S)
    rewards: np.ndarray      # (H, S, A)
    initial_dist: np.ndarray  # (S,)

    def __post_init__(self):
        # Freeze the tables so a validated spec can be shared between runs
        for name in ('transitions', 'rewards', 'initial_dist'):
            table = np.array(getattr(self, name), dtype=float)
            table.setflags(write=False)
            object.__setattr__(self, name, table)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.num_states, self.num_actions, self.horizon


@dataclass
class Violation:
    kind: str
    message: str
    h: Optional[int] = None
    x: Optional[int] = None
    a: Optional[int] = None

    def __str__(self):
        coords = [f"{label}={value + 1}" for label, value in (('h', self.h), ('x', self.x), ('a', self.a))
                  if value is not None]
        where = f" at ({', '.join(coords)})" if coords else ""
        return f"{self.message}{where}"


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _check_structure(spec: MdpSpec):
    S, A, H = spec.num_states, spec.num_actions, spec.horizon
    for name, value in (('num_states', S), ('num_actions', A), ('horizon', H)):
        if int(value) != value or value < 1:
            raise MdpStructureError(f"{name} must be a positive integer, got {value}")

    expected = {
        'transitions': (H, S, A, S),
        'rewards': (H, S, A),
        'initial_dist': (S,),
    }
    for name, shape in expected.items():
        actual = getattr(spec, name).shape
        if actual != shape:
            raise MdpStructureError(f"{name} has shape {actual}, expected {shape} for S={S}, A={A}, H={H}")


def validate_mdp(spec: MdpSpec) -> ValidationReport:
    """Collect every invariant violation of the spec, with coordinates"""
    _check_structure(spec)
    report = ValidationReport()
    P, r, rho = spec.transitions, spec.rewards, spec.initial_dist

    for h, x, a in zip(*np.nonzero(~np.isfinite(r))):
        report.violations.append(Violation('reward', "reward is not finite", int(h), int(x), int(a)))
    for h, x, a in zip(*np.nonzero(np.isfinite(r) & ((r < 0.0) | (r > 1.0)))):
        report.violations.append(Violation(
            'reward', f"reward out of [0,1] ({r[h, x, a]!r})", int(h), int(x), int(a)))

    bad_entries = ~np.isfinite(P) | (P < 0.0) | (P > 1.0)
    for h, x, a in zip(*np.nonzero(bad_entries.any(axis=3))):
        report.violations.append(Violation(
            'transition', "transition probability out of [0,1]", int(h), int(x), int(a)))

    row_sums = P.sum(axis=3)
    for h, x, a in zip(*np.nonzero(~(np.abs(row_sums - 1.0) <= PROB_TOLERANCE))):
        report.violations.append(Violation(
            'transition', f"row not stochastic (sums to {row_sums[h, x, a]!r})", int(h), int(x), int(a)))

    if not np.all(np.isfinite(rho)) or np.any(rho < 0.0) or np.any(rho > 1.0):
        report.violations.append(Violation('initial_dist', "initial distribution entry out of [0,1]"))
    if not abs(rho.sum() - 1.0) <= PROB_TOLERANCE:
        report.violations.append(Violation(
            'initial_dist', f"initial distribution not stochastic (sums to {rho.sum()!r})"))

    if report.ok:
        logger.debug(f"MDP S={spec.num_states} A={spec.num_actions} H={spec.horizon} passed validation")
    return report


def require_valid(spec: MdpSpec) -> MdpSpec:
    report = validate_mdp(spec)
    if not report.ok:
        raise MdpValidationError(report)
    return spec


def with_initial_dist(spec: MdpSpec, rho: Sequence[float]) -> MdpSpec:
    """Copy of the spec with a different initial-state distribution"""
    return MdpSpec(spec.num_states, spec.num_actions, spec.horizon,
                   spec.transitions, spec.rewards, np.asarray(rho, dtype=float))


class RngStream:
    """
    Seeded random stream.

    Algorithm: numpy's Philox-4x64 counter-based bit generator keyed by
    SeedSequence([seed, stream_id]). Both the key derivation and the
    Philox output are specified bit-for-bit by numpy, so identical
    (seed, stream_id) pairs reproduce identical draws on every platform.
    Uniforms come from Generator.random (53-bit doubles).
    """

    def __init__(self, seed: int, stream_id: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        self._generator = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([self.seed, self.stream_id])))

    @classmethod
    def for_purpose(cls, seed: int, run_stream: int, purpose: str) -> "RngStream":
        if purpose not in PURPOSES:
            raise ValueError(f"Unknown stream purpose '{purpose}', expected one of {PURPOSES}")
        return cls(seed, stable_hash(f"{run_stream}:{purpose}"))

    def uniform(self) -> float:
        return float(self._generator.random())

    def sample_index(self, probs: np.ndarray) -> int:
        """Inverse-CDF draw from a probability vector using one uniform"""
        u = self.uniform()
        cdf = np.cumsum(probs)
        idx = int(np.searchsorted(cdf, u, side='right'))
        # Round-off can leave cdf[-1] slightly below 1; fall back to the last positive entry
        if idx >= len(probs):
            idx = int(np.flatnonzero(np.asarray(probs) > 0)[-1])
        return idx

    def choice(self, candidates: Sequence[int]) -> int:
        return int(candidates[min(int(self.uniform() * len(candidates)), len(candidates) - 1)])


def stable_hash(text: str) -> int:
    """64-bit hash that does not change between interpreter runs"""
    return int.from_bytes(hashlib.md5(text.encode('utf-8')).digest()[:8], 'big')


def sample_initial_state(spec: MdpSpec, rng: RngStream) -> int:
    return rng.sample_index(spec.initial_dist)


def step(spec: MdpSpec, x: int, a: int, h: int, rng: RngStream) -> Tuple[int, float]:
    """
    Take action a in state x at step h (all 0-based).
    Returns (next_state, reward); the reward is r[h][x][a] and never depends
    on the sampled successor.
    """
    S, A, H = spec.dims
    if not (0 <= h < H and 0 <= x < S and 0 <= a < A):
        raise MdpStructureError(f"step index out of range: h={h}, x={x}, a={a} for S={S}, A={A}, H={H}")
    reward = float(spec.rewards[h, x, a])
    next_state = rng.sample_index(spec.transitions[h, x, a])
    return next_state, reward


def mdp_to_dict(spec: MdpSpec) -> Dict:
    return {
        'num_states': spec.num_states,
        'num_actions': spec.num_actions,
        'horizon': spec.horizon,
        'transitions': spec.transitions.tolist(),
        'rewards': spec.rewards.tolist(),
        'initial_dist': spec.initial_dist.tolist(),
    }


def mdp_from_dict(data: Dict) -> MdpSpec:
    missing = [key for key in ('num_states', 'num_actions', 'horizon', 'transitions', 'rewards', 'initial_dist')
               if key not in data]
    if missing:
        raise MdpStructureError(f"MDP document is missing field(s): {', '.join(missing)}")
    for key in ('num_states', 'num_actions', 'horizon'):
        value = data[key]
        whole = isinstance(value, (int, np.integer)) or (isinstance(value, float) and value.is_integer())
        if isinstance(value, bool) or not whole:
            raise MdpStructureError(f"{key} must be a whole number, got {value!r}")
    try:
        spec = MdpSpec(
            num_states=int(data['num_states']),
            num_actions=int(data['num_actions']),
            horizon=int(data['horizon']),
            transitions=np.array(data['transitions'], dtype=float),
            rewards=np.array(data['rewards'], dtype=float),
            initial_dist=np.array(data['initial_dist'], dtype=float),
        )
    except (TypeError, ValueError) as e:
        # Ragged nested arrays end up here
        raise MdpStructureError(f"MDP document has malformed tables: {e}")
    _check_structure(spec)
    return spec


def load_mdp(path: str) -> MdpSpec:
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    logger.info(f"Loaded MDP from {path}")
    return mdp_from_dict(data)


def save_mdp(spec: MdpSpec, path: str, decimals: Optional[int] = None):
    data = mdp_to_dict(spec)
    if decimals is not None:
        data['rewards'] = np.round(spec.rewards, decimals).tolist()
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2)
    logger.info(f"Saved MDP to {path}")
