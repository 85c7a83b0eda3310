#!/usr/bin/env python3
"""
Canned environments: the 3-state 1-D gridworld, its chain generalization,
and seeded random MDPs for property tests.

Action mapping is fixed: a1 (index 0) = left, a2 (index 1) = right.
Walls self-loop.
"""

import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Union

import numpy as np

from mdp_core import MdpSpec, load_mdp, require_valid

logger = logging.getLogger(__name__)

LEFT, RIGHT = 0, 1


class EnvKind(str, Enum):
    GRIDWORLD_1D = "GRIDWORLD_1D"
    CHAIN = "CHAIN"
    RANDOM = "RANDOM"


REQUIRED_PARAMS = {
    EnvKind.CHAIN: ("S", "H"),
    EnvKind.RANDOM: ("seed", "S", "A", "H"),
}


@dataclass
class EnvRecipe:
    kind: EnvKind
    params: Dict[str, int] = field(default_factory=dict)

    def describe(self) -> str:
        if not self.params:
            return self.kind.value.lower()
        args = ','.join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.kind.value.lower()}:{args}"


def chain_mdp(length: int, horizon: int) -> MdpSpec:
    """
    Left/right chain of `length` states. Reward 1 for any move that lands in
    the rightmost state (including staying there), 0 otherwise. The same
    tables are used at every step; start state is uniform.
    """
    S, H = int(length), int(horizon)
    if S < 2 or H < 1:
        raise ValueError(f"chain needs S >= 2 and H >= 1, got S={S}, H={H}")

    P = np.zeros((S, 2, S))
    r = np.zeros((S, 2))
    for x in range(S):
        left, right = max(x - 1, 0), min(x + 1, S - 1)
        P[x, LEFT, left] = 1.0
        P[x, RIGHT, right] = 1.0
        r[x, LEFT] = 1.0 if left == S - 1 else 0.0
        r[x, RIGHT] = 1.0 if right == S - 1 else 0.0

    spec = MdpSpec(
        num_states=S,
        num_actions=2,
        horizon=H,
        transitions=np.broadcast_to(P, (H, S, 2, S)),
        rewards=np.broadcast_to(r, (H, S, 2)),
        initial_dist=np.full(S, 1.0 / S),
    )
    return require_valid(spec)


def gridworld_1d() -> MdpSpec:
    """Three states, two actions, H = 3; going right from x2 or x3 pays 1."""
    return chain_mdp(3, 3)


def random_mdp(seed: int, S: int, A: int, H: int) -> MdpSpec:
    gen = np.random.default_rng(np.random.SeedSequence(int(seed)))
    weights = gen.random((H, S, A, S))
    # A zero row is practically impossible but would break normalization
    weights[weights.sum(axis=3) == 0.0] = 1.0
    spec = MdpSpec(
        num_states=S,
        num_actions=A,
        horizon=H,
        transitions=weights / weights.sum(axis=3, keepdims=True),
        rewards=gen.random((H, S, A)),
        initial_dist=np.full(S, 1.0 / S),
    )
    return require_valid(spec)


def parse_recipe(text: str) -> EnvRecipe:
    """
    Recipe strings: 'gridworld3' (or 'gridworld'), 'chain:S=5,H=6',
    'random:seed=7,S=3,A=2,H=3'.
    """
    name, _, arg_text = text.strip().partition(':')
    name = name.lower()
    params = {}
    if arg_text:
        for item in arg_text.split(','):
            key, sep, value = item.partition('=')
            if not sep:
                raise ValueError(f"Bad recipe argument '{item}' in '{text}', expected key=value")
            try:
                params[key.strip()] = int(value)
            except ValueError:
                raise ValueError(f"Recipe argument '{key}' must be an integer, got '{value}'")

    if name in ('gridworld', 'gridworld3', 'gridworld_1d'):
        if params:
            raise ValueError("gridworld recipe takes no arguments")
        return EnvRecipe(EnvKind.GRIDWORLD_1D)
    if name == 'chain':
        _require_params(params, REQUIRED_PARAMS[EnvKind.CHAIN], text)
        return EnvRecipe(EnvKind.CHAIN, params)
    if name == 'random':
        _require_params(params, REQUIRED_PARAMS[EnvKind.RANDOM], text)
        return EnvRecipe(EnvKind.RANDOM, params)
    raise ValueError(f"Unknown environment recipe '{text}'")


def _require_params(params, names, text):
    missing = [n for n in names if n not in params]
    extra = [n for n in params if n not in names]
    if missing or extra:
        raise ValueError(f"Recipe '{text}' needs exactly {', '.join(names)}"
                         f" (missing: {missing or 'none'}, unexpected: {extra or 'none'})")


def make_env(recipe: EnvRecipe) -> MdpSpec:
    if recipe.kind is EnvKind.GRIDWORLD_1D:
        return gridworld_1d()
    if recipe.kind is EnvKind.CHAIN:
        return chain_mdp(recipe.params['S'], recipe.params['H'])
    return random_mdp(recipe.params['seed'], recipe.params['S'], recipe.params['A'], recipe.params['H'])


def build_env(source: Union[str, Dict, EnvRecipe]) -> MdpSpec:
    """Environment from a recipe string, a {"kind", "params"} dict, a recipe, or a JSON file path"""
    if isinstance(source, EnvRecipe):
        return make_env(source)
    if isinstance(source, dict):
        try:
            recipe = EnvRecipe(EnvKind(str(source['kind']).upper()), dict(source.get('params', {})))
        except (KeyError, ValueError):
            raise ValueError(f"Bad environment entry {source}")
        if recipe.kind in REQUIRED_PARAMS:
            _require_params(recipe.params, REQUIRED_PARAMS[recipe.kind], recipe.describe())
        return make_env(recipe)
    if source.endswith('.json') or os.path.sep in source:
        if not os.path.exists(source):
            raise FileNotFoundError(f"MDP file not found: {source}")
        return load_mdp(source)
    return make_env(parse_recipe(source))
