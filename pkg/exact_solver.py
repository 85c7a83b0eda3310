#!/usr/bin/env python3
"""
Exact finite-horizon solvers.
Backward induction for Q*/V* and for the value of a fixed deterministic
policy, plus a brute-force policy enumeration oracle used to cross-check
the dynamic program on tiny instances.

Tables are 0-based: Q[h, x, a] for h in 0..H-1 and V[h, x] for h in 0..H,
where the extra row V[H] is the explicit zero boundary.
"""

import json
import logging
import os
from dataclasses import dataclass
from typing import Dict

import numpy as np

from mdp_core import MdpSpec, MdpStructureError

logger = logging.getLogger(__name__)

DEFAULT_BRUTE_FORCE_CAP = 10 ** 6
ENUMERATION_CHUNK = 4096


class OracleCapExceeded(ValueError):
    pass


@dataclass
class ValueTables:
    Q: np.ndarray  # (H, S, A)
    V: np.ndarray  # (H + 1, S), V[H] == 0

    @property
    def horizon(self) -> int:
        return self.Q.shape[0]

    def v1(self) -> np.ndarray:
        return self.V[0]


@dataclass
class DeterministicPolicy:
    actions: np.ndarray  # (H, S) of action indices

    def __call__(self, h: int, x: int) -> int:
        return int(self.actions[h, x])


def greedy_policy_from_q(Q: np.ndarray) -> DeterministicPolicy:
    # np.argmax returns the first maximum, i.e. ties go to the smallest action index
    return DeterministicPolicy(np.argmax(Q, axis=2).astype(int))


def solve_optimal(spec: MdpSpec) -> ValueTables:
    S, A, H = spec.dims
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    for h in reversed(range(H)):
        # Q*_h = r_h + P_h V*_{h+1}
        Q[h] = spec.rewards[h] + spec.transitions[h] @ V[h + 1]
        V[h] = Q[h].max(axis=1)
    return ValueTables(Q, V)


def evaluate_policy(spec: MdpSpec, pol: DeterministicPolicy) -> ValueTables:
    S, A, H = spec.dims
    actions = np.asarray(pol.actions)
    if actions.shape != (H, S):
        raise MdpStructureError(f"policy has shape {actions.shape}, expected {(H, S)}")
    if actions.min() < 0 or actions.max() >= A:
        raise MdpStructureError(f"policy picks actions outside [1..{A}]")

    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    states = np.arange(S)
    for h in reversed(range(H)):
        Q[h] = spec.rewards[h] + spec.transitions[h] @ V[h + 1]
        V[h] = Q[h][states, actions[h]]
    return ValueTables(Q, V)


def brute_force_optimal(spec: MdpSpec, cap: int = DEFAULT_BRUTE_FORCE_CAP) -> ValueTables:
    """
    Enumerate every deterministic step-dependent policy and keep the pointwise
    maximum of its value. Q is rebuilt from the maximal V by one Bellman backup.
    """
    S, A, H = spec.dims
    count = A ** (S * H)
    if count > cap:
        raise OracleCapExceeded(
            f"Brute-force enumeration needs A^(S*H) = {A}^({S}*{H}) = {count} policies, cap is {cap}")

    logger.debug(f"Enumerating {count} deterministic policies")
    best_V = np.full((H + 1, S), -np.inf)
    digits = A ** np.arange(S * H, dtype=np.int64)
    for start in range(0, count, ENUMERATION_CHUNK):
        # Policy number n -> its base-A digits, one action per (h, x)
        ids = np.arange(start, min(start + ENUMERATION_CHUNK, count), dtype=np.int64)
        actions = ((ids[:, None] // digits[None, :]) % A).reshape(-1, H, S)

        # Same backward induction as evaluate_policy, for a whole chunk at once
        V = np.zeros((len(ids), H + 1, S))
        for h in reversed(range(H)):
            q = spec.rewards[h][None] + np.einsum('xay,ny->nxa', spec.transitions[h], V[:, h + 1])
            V[:, h] = np.take_along_axis(q, actions[:, h, :, None], axis=2)[..., 0]
        best_V = np.maximum(best_V, V.max(axis=0))

    Q = np.zeros((H, S, A))
    for h in range(H):
        Q[h] = spec.rewards[h] + spec.transitions[h] @ best_V[h + 1]
    return ValueTables(Q, best_V)


def tables_to_dict(tables: ValueTables) -> Dict:
    return {'Q': tables.Q.tolist(), 'V': tables.V.tolist()}


def tables_from_dict(data: Dict) -> ValueTables:
    try:
        Q = np.array(data['Q'], dtype=float)
        V = np.array(data['V'], dtype=float)
    except KeyError as e:
        raise MdpStructureError(f"value table document is missing {e}")
    if Q.ndim != 3 or V.shape != (Q.shape[0] + 1, Q.shape[1]):
        raise MdpStructureError(f"value tables have inconsistent shapes Q={Q.shape}, V={V.shape}")
    return ValueTables(Q, V)


def save_tables(tables: ValueTables, path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(tables_to_dict(tables), f, indent=2)
    logger.info(f"Saved value tables to {path}")


def load_tables(path: str) -> ValueTables:
    with open(path, 'r', encoding='utf-8') as f:
        return tables_from_dict(json.load(f))
