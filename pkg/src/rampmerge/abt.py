"""Online POMDP solving with an adaptive belief tree.

The solver is generic over a :class:`GenerativeModel`: a black-box sampler of
(next state, observation, reward, terminal) transitions plus a frontier value
estimate.  Beliefs are weighted particle sets attached to tree nodes; edges
accumulate visit counts and total discounted returns.  Planning samples
episodes root-to-frontier, expanding at most one node per episode, and the
acted policy is the root action with the highest mean return.  After acting,
the matching observation branch becomes the new root and its particle set is
re-weighted and replenished.

Everything is single-threaded and driven by one numpy Generator, so a fixed
seed reproduces the full action sequence bit for bit.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Optional, Sequence

import numpy as np


class DegenerateBeliefError(RuntimeError):
    """Every particle weight collapsed to zero during a belief update."""


@dataclass
class SolverConfig:
    """Search budgets and constants (defaults follow the merging setup)."""

    episodes: int = 10000      # episodes sampled per planning step
    particles: int = 1000      # target belief size
    depth: int = 10            # maximum episode length
    ucb_c: float = 200000.0    # exploration constant
    discount: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1 or self.particles < 1 or self.depth < 1:
            raise ValueError("episodes, particles and depth must be >= 1")
        # 0 is admitted (degenerate myopic planning) on top of the usual (0, 1]
        if not (0.0 <= self.discount <= 1.0):
            raise ValueError("discount must be in [0, 1]")
        if self.ucb_c < 0.0:
            raise ValueError("ucb_c must be nonnegative")


class GenerativeModel(abc.ABC):
    """Black-box POMDP used by the solver.

    `step` must be deterministic given the rng stream, and `actions` must
    return the same finite ordered set on every call.
    """

    @abc.abstractmethod
    def actions(self) -> Sequence:
        ...

    @abc.abstractmethod
    def step(self, state, action, rng) -> tuple:
        """Return (next_state, observation, reward, terminal)."""

    @abc.abstractmethod
    def heuristic(self, state) -> float:
        """Estimated future reward from `state` (frontier tail value)."""

    @abc.abstractmethod
    def obs_key(self, observation) -> Hashable:
        """Discrete equivalence class used for tree branching."""

    @abc.abstractmethod
    def sample_initial_belief(self, rng):
        ...

    @abc.abstractmethod
    def reweight(self, state, observation) -> float:
        """Nonnegative likelihood of `observation` given `state`."""

    def is_terminal(self, state) -> bool:
        """Whether no further transition should be sampled from `state`."""
        return False

    def predict(self, state, action, rng) -> tuple:
        """(next_state, observation) only; hook for cheaper belief updates."""
        next_state, observation, _, _ = self.step(state, action, rng)
        return next_state, observation


@dataclass
class Particle:
    state: Any
    weight: float = 1.0


class BeliefNode:
    """One belief in the tree: particles plus per-action edge statistics."""

    __slots__ = ("particles", "edge_visits", "edge_returns", "children",
                 "depth", "_cdf")

    def __init__(self, n_actions: int, depth: int = 0):
        self.particles: list[Particle] = []
        self.edge_visits = np.zeros(n_actions, dtype=np.int64)
        self.edge_returns = np.zeros(n_actions, dtype=float)
        self.children: dict[tuple, BeliefNode] = {}
        self.depth = depth
        self._cdf: Optional[np.ndarray] = None

    def add_particle(self, state, weight: float = 1.0) -> None:
        self.particles.append(Particle(state, weight))
        self._cdf = None

    def normalize(self) -> None:
        total = math.fsum(p.weight for p in self.particles)
        if not (total > 0.0) or not math.isfinite(total):
            raise DegenerateBeliefError(
                "all particle weights are zero; observation is inconsistent "
                "with the predicted belief"
            )
        for p in self.particles:
            p.weight /= total
        self._cdf = None

    def sample_particle(self, rng) -> Particle:
        if not self.particles:
            raise ValueError("belief node holds no particles")
        if self._cdf is None:
            w = np.array([p.weight for p in self.particles])
            self._cdf = np.cumsum(w)
        u = rng.random() * self._cdf[-1]
        return self.particles[int(np.searchsorted(self._cdf, u))]


@dataclass
class Episode:
    """One sampled trajectory: (state, action index, obs key, reward) steps."""

    steps: list = field(default_factory=list)
    tail_value: float = 0.0

    def value(self, discount: float) -> float:
        g = self.tail_value
        for _, _, _, reward in reversed(self.steps):
            g = reward + discount * g
        return g


def select_action_ucb(node: BeliefNode, c: float, rng) -> int:
    """UCB action index; unvisited actions take strict priority (uniform)."""
    visits = node.edge_visits
    unvisited = np.flatnonzero(visits == 0)
    if len(unvisited):
        return int(unvisited[rng.integers(len(unvisited))])
    means = node.edge_returns / visits
    if c > 0.0:
        means = means + c * np.sqrt(math.log(visits.sum()) / visits)
    return int(np.argmax(means))


def export_node_stats(node: BeliefNode) -> dict:
    """Statistics snapshot for external formula cross-checks."""
    return {
        "depth": node.depth,
        "particles": len(node.particles),
        "edges": [
            {
                "action_index": int(i),
                "visits": int(node.edge_visits[i]),
                "total_return": float(node.edge_returns[i]),
            }
            for i in np.flatnonzero(node.edge_visits > 0)
        ],
    }


class ABTSolver:
    """Adaptive-belief-tree planner bound to one model and one rng stream."""

    def __init__(self, model: GenerativeModel, config: SolverConfig, rng=None):
        self.model = model
        self.config = config
        self.rng = np.random.default_rng(config.seed) if rng is None else rng
        self._actions = tuple(model.actions())
        if not self._actions:
            raise ValueError("model exposes no actions")
        self._action_index = {a: i for i, a in enumerate(self._actions)}

    # -- belief construction ------------------------------------------------

    def initial_belief(self) -> BeliefNode:
        root = BeliefNode(len(self._actions))
        for _ in range(self.config.particles):
            root.add_particle(self.model.sample_initial_belief(self.rng))
        root.normalize()
        return root

    def root_from_states(self, states) -> BeliefNode:
        root = BeliefNode(len(self._actions))
        for s in states:
            root.add_particle(s)
        root.normalize()
        return root

    # -- planning -------------------------------------------------------------

    def plan(self, root: BeliefNode):
        """Sample the episode budget from `root`, return the greedy action."""
        if not root.particles:
            raise ValueError("cannot plan from an empty belief")
        for _ in range(self.config.episodes):
            self.sample_episode(root)
        tried = np.flatnonzero(root.edge_visits > 0)
        if not len(tried):
            raise RuntimeError("no action was expanded at the root")
        means = root.edge_returns[tried] / root.edge_visits[tried]
        return self._actions[int(tried[int(np.argmax(means))])]

    def sample_episode(self, root: BeliefNode) -> Episode:
        model = self.model
        gamma = self.config.discount
        rng = self.rng
        state = root.sample_particle(rng).state

        episode = Episode()
        if model.is_terminal(state):
            episode.tail_value = model.heuristic(state)
            return episode

        node = root
        path = []  # (node, action_index, reward)
        tail = 0.0
        while True:
            if len(path) >= self.config.depth:
                tail = model.heuristic(state)
                break
            a_idx = select_action_ucb(node, self.config.ucb_c, rng)
            next_state, obs, reward, terminal = model.step(
                state, self._actions[a_idx], rng
            )
            key = model.obs_key(obs)
            path.append((node, a_idx, reward))
            episode.steps.append((state, a_idx, key, reward))
            child = node.children.get((a_idx, key))
            if child is None:
                child = BeliefNode(len(self._actions), node.depth + 1)
                node.children[(a_idx, key)] = child
                child.add_particle(next_state)
                tail = 0.0 if terminal else model.heuristic(next_state)
                break
            child.add_particle(next_state)
            state = next_state
            node = child
            if terminal:
                tail = 0.0
                break

        episode.tail_value = tail
        g = tail
        for node_i, a_idx, reward in reversed(path):
            g = reward + gamma * g
            node_i.edge_returns[a_idx] += g
            node_i.edge_visits[a_idx] += 1
        return episode

    # -- belief update -----------------------------------------------------------

    def update_belief(self, root: BeliefNode, action, observation) -> BeliefNode:
        """Condition on (action, observation); the matching child becomes root.

        Child particles are re-weighted by the observation likelihood and the
        set is replenished by rejection on the observation key (stepping root
        particles through `action`).  A missing child, or replenishment that
        stalls below 1 percent acceptance over 100x the particle budget,
        regenerates the belief without key rejection and drops the tree.
        """
        model = self.model
        rng = self.rng
        n_par = self.config.particles
        a_idx = self._action_index[action]
        key = model.obs_key(observation)

        child = root.children.get((a_idx, key))
        if child is not None:
            for particle in child.particles:
                particle.weight *= model.reweight(particle.state, observation)
            need = n_par - len(child.particles)
            if need > 0:
                cap = 100 * n_par
                attempts = 0
                accepted = 0
                while accepted < need and attempts < cap:
                    attempts += 1
                    state = root.sample_particle(rng).state
                    nxt, obs = model.predict(state, action, rng)
                    if model.obs_key(obs) == key:
                        child.add_particle(nxt, model.reweight(nxt, observation))
                        accepted += 1
                    elif attempts >= 2 * n_par and accepted < 0.01 * attempts:
                        break  # acceptance provably below 1 percent
                if accepted < need:
                    child = None  # stalled; fall through to regeneration
            if child is not None:
                child.normalize()
                _renumber(child)
                return child

        fresh = BeliefNode(len(self._actions))
        for _ in range(n_par):
            state = root.sample_particle(rng).state
            nxt, _ = model.predict(state, action, rng)
            fresh.add_particle(nxt, model.reweight(nxt, observation))
        fresh.normalize()
        return fresh


def _renumber(node: BeliefNode) -> None:
    shift = node.depth
    if shift == 0:
        return
    stack = [node]
    while stack:
        n = stack.pop()
        n.depth -= shift
        stack.extend(n.children.values())


def evaluate_policy(model: GenerativeModel, config: SolverConfig,
                    n_rollouts: int, rng=None, max_steps: int = 200):
    """Closed-loop Monte Carlo value estimate on the model's own simulator.

    Returns (mean discounted return, 95 percent confidence half-width).
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    seeds = rng.integers(0, 2**63, size=n_rollouts, dtype=np.uint64)
    returns = np.empty(n_rollouts)
    for j in range(n_rollouts):
        run_rng = np.random.default_rng(int(seeds[j]))
        solver = ABTSolver(model, config, rng=run_rng)
        state = model.sample_initial_belief(run_rng)
        root = solver.initial_belief()
        total = 0.0
        disc = 1.0
        for _ in range(max_steps):
            if model.is_terminal(state):
                break
            action = solver.plan(root)
            state, obs, reward, terminal = model.step(state, action, run_rng)
            total += disc * reward
            disc *= config.discount
            if terminal:
                break
            root = solver.update_belief(root, action, obs)
        returns[j] = total
    mean = float(returns.mean())
    if n_rollouts == 1:
        return mean, 0.0
    half = 1.96 * float(returns.std(ddof=1)) / math.sqrt(n_rollouts)
    return mean, half
