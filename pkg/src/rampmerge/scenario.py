"""Closed-loop experiments: scenario files, templates, runs, batch reports.

A scenario pins a lane map, the ego's starting state, and one pre-recorded
trajectory per traffic vehicle.  During a run the traffic replays its
recording (it does not react to the ego, mirroring evaluation against
recorded data), while the planner senses, updates its belief, plans, and
steers the ego.  Synthetic templates pre-roll their traffic with the
car-following model among themselves and then store the result as a
recording, so template runs and file-based runs share one code path.

File format (JSON)::

    { "map": path-relative-to-this-file,
      "ego": {"lane": int, "p": m, "d": m, "v": mps, "W": m, "L": m},
      "vehicles": [ {"dims": [W, L],
                     "mode": "recorded" | "synthetic",
                     "states": [[k, p, v, lane], ...]      # recorded
                     "init": {"p":, "v":, "lane":, "trait":}} ],  # synthetic
      "duration": int, "label": str }
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .abt import ABTSolver, DegenerateBeliefError, SolverConfig
from .lanes import LaneMap, load_map, map_from_dict
from .merging import (
    ActionPair,
    EgoState,
    JointState,
    MergeModel,
    ModelConfig,
    NonEgoState,
    ObservationVector,
)

OUTCOMES = ("merged", "collision", "bounds", "overrun", "timeout", "error")


class ScenarioError(ValueError):
    """Scenario file violates the schema or a structural invariant."""


@dataclass
class VehicleTrack:
    width: float
    length: float
    states: list            # (p, v, lane) per step index 0..duration
    mode: str = "recorded"

    def state_at(self, k: int, lane_length: float) -> NonEgoState:
        p, v, lane = self.states[k]
        return NonEgoState(p=p, v=v, lane=lane, width=self.width,
                           length=self.length, departed=p > lane_length)


@dataclass
class EgoInit:
    lane: int
    p: float
    d: float
    v: float
    width: float = 2.0
    length: float = 5.0


@dataclass
class Scenario:
    lane_map: LaneMap
    ego: EgoInit
    tracks: list
    duration: int
    label: str = ""
    map_path: Optional[str] = None
    map_data: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "map": self.map_path or "map.json",
            "ego": {"lane": self.ego.lane, "p": self.ego.p, "d": self.ego.d,
                    "v": self.ego.v, "W": self.ego.width, "L": self.ego.length},
            "vehicles": [
                {
                    "dims": [t.width, t.length],
                    "mode": "recorded",
                    "states": [[k, p, v, lane]
                               for k, (p, v, lane) in enumerate(t.states)],
                }
                for t in self.tracks
            ],
            "duration": self.duration,
            "label": self.label,
        }


@dataclass
class StepLog:
    k: int
    ego: EgoState
    action: ActionPair
    reward: float
    collision: bool
    bounds: bool
    overrun: bool
    merged: bool
    others: tuple = ()
    observation: Optional[ObservationVector] = None
    belief: Optional[list] = None     # per-vehicle summary dicts


@dataclass
class SimResult:
    outcome: str
    merge_time: Optional[int]
    min_gap: float
    steps: list = field(default_factory=list)
    seed: int = 0
    label: str = ""
    error: Optional[str] = None
    belief_resets: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["k", "p", "d", "v", "lane", "accel", "dtheta_deg",
                             "reward", "collision", "bounds", "overrun", "merged"])
            for s in self.steps:
                writer.writerow([
                    s.k, repr(s.ego.p), repr(s.ego.d), repr(s.ego.v), s.ego.lane,
                    repr(s.action.accel), repr(s.action.dtheta_deg),
                    repr(s.reward), int(s.collision), int(s.bounds),
                    int(s.overrun), int(s.merged),
                ])


# -- loading and validation -----------------------------------------------------


def _preroll_synthetic(entries, lane_map: LaneMap, duration: int,
                       model_cfg: ModelConfig, rng) -> list:
    """Roll car-following traffic among themselves into recorded tracks."""
    from .merging import idm_accel

    sim = [list(e["init_state"]) + [e["trait"]] for e in entries]  # p, v, lane, trait
    states = [[(p, v, lane)] for p, v, lane, _ in sim]
    for _ in range(duration):
        accels = []
        for i, (p, v, lane, trait) in enumerate(sim):
            leader = None
            best = math.inf
            for j, (p2, v2, lane2, _) in enumerate(sim):
                if j == i or lane2 != lane or p2 <= p:
                    continue
                gap = p2 - p - 0.5 * (entries[i]["dims"][1] + entries[j]["dims"][1])
                if gap < best:
                    best = gap
                    leader = (max(gap, 0.1), v2)
            accels.append(idm_accel(v, leader, model_cfg, omega1=trait))
        for i, a in enumerate(accels):
            p, v, lane, trait = sim[i]
            p += v * model_cfg.dt + 0.5 * a * model_cfg.dt ** 2
            v = max(0.0, v + a * model_cfg.dt)
            sim[i] = [p, v, lane, trait]
            states[i].append((p, v, lane))
    return states


def scenario_from_dict(data: dict, lane_map: LaneMap,
                       map_path: Optional[str] = None,
                       model_cfg: Optional[ModelConfig] = None,
                       preroll_seed: int = 0) -> Scenario:
    try:
        ego_raw = data["ego"]
        ego = EgoInit(lane=int(ego_raw["lane"]), p=float(ego_raw["p"]),
                      d=float(ego_raw["d"]), v=float(ego_raw["v"]),
                      width=float(ego_raw.get("W", 2.0)),
                      length=float(ego_raw.get("L", 5.0)))
        duration = int(data["duration"])
        vehicles = data.get("vehicles", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"scenario schema: {exc}") from exc
    if duration < 1:
        raise ScenarioError("duration must be >= 1")

    cfg = model_cfg if model_cfg is not None else ModelConfig()
    rng = np.random.default_rng(preroll_seed)
    tracks = []
    synthetic = []
    for idx, raw in enumerate(vehicles):
        dims = raw.get("dims", [2.0, 5.0])
        mode = raw.get("mode", "recorded")
        if mode == "synthetic":
            init = raw["init"]
            trait = float(init.get("trait", rng.normal(
                0.0, math.sqrt(cfg.idm_sigma[0]))))
            synthetic.append({
                "index": idx,
                "dims": dims,
                "init_state": (float(init["p"]), float(init["v"]),
                               int(init["lane"])),
                "trait": trait,
            })
            tracks.append(VehicleTrack(width=float(dims[0]),
                                       length=float(dims[1]),
                                       states=None, mode="synthetic"))
            continue
        if mode != "recorded":
            raise ScenarioError(f"vehicle {idx}: unknown mode {mode!r}")
        raw_states = raw.get("states", [])
        by_k = {}
        for entry in raw_states:
            if not (isinstance(entry, list) and len(entry) == 4):
                raise ScenarioError(
                    f"vehicle {idx}: state entries must be [k, p, v, lane]")
            by_k[int(entry[0])] = (float(entry[1]), float(entry[2]),
                                   int(entry[3]))
        missing = [k for k in range(duration + 1) if k not in by_k]
        if missing:
            raise ScenarioError(
                f"vehicle {idx}: trajectory gap at step {missing[0]} "
                f"(must cover 0..{duration})")
        tracks.append(VehicleTrack(width=float(dims[0]), length=float(dims[1]),
                                   states=[by_k[k] for k in range(duration + 1)]))

    if synthetic:
        rolled = _preroll_synthetic(synthetic, lane_map, duration, cfg, rng)
        for entry, states in zip(synthetic, rolled):
            tracks[entry["index"]].states = states

    if ego.lane not in lane_map.lanes:
        raise ScenarioError(f"ego lane {ego.lane} not in map")
    for idx, track in enumerate(tracks):
        for p, v, lane in track.states:
            if lane not in lane_map.lanes:
                raise ScenarioError(f"vehicle {idx}: lane {lane} not in map")
            if v < 0:
                raise ScenarioError(f"vehicle {idx}: negative speed")

    scenario = Scenario(lane_map=lane_map, ego=ego, tracks=tracks,
                        duration=duration, label=str(data.get("label", "")),
                        map_path=map_path)
    _check_initial_overlap(scenario, cfg)
    return scenario


def _check_initial_overlap(scenario: Scenario, cfg: ModelConfig) -> None:
    cfg = replace(cfg, ego_width=scenario.ego.width,
                  ego_length=scenario.ego.length)
    model = MergeModel(scenario.lane_map, cfg)
    state = initial_state(scenario)
    if model.collision_check(state, ActionPair(0.0, 0.0)):
        raise ScenarioError("initial vehicle rectangles overlap")


def load_scenario(path, model_cfg: Optional[ModelConfig] = None) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if "map" not in data:
        raise ScenarioError(f"{path}: missing 'map' entry")
    map_path = Path(data["map"])
    if not map_path.is_absolute():
        map_path = path.parent / map_path
    lane_map = load_map(map_path)
    return scenario_from_dict(data, lane_map, map_path=str(map_path),
                              model_cfg=model_cfg)


def initial_state(scenario: Scenario) -> JointState:
    ego = EgoState(p=scenario.ego.p, d=scenario.ego.d, v=scenario.ego.v,
                   lane=scenario.ego.lane)
    others = tuple(
        t.state_at(0, scenario.lane_map.lanes[t.states[0][2]].length)
        for t in scenario.tracks
    )
    return JointState(ego=ego, others=others)


# -- synthetic templates ------------------------------------------------------------


def build_merge_map(merge_len: float = 200.0, ramp_offset: float = 300.0,
                    highway_len: float = 1500.0, spacing: float = 3.5,
                    half_width: float = 1.75) -> dict:
    """Three straight lanes: on-ramp (1), target lane (2), passing lane (3).

    The ramp runs parallel to the target lane over its whole length, so the
    merge window spans the entire ramp.
    """
    x0, x1 = ramp_offset, ramp_offset + merge_len
    return {
        "desired_lane": 2,
        "lanes": [
            {"id": 1,
             "control_points": [[x0, -spacing], [(x0 + x1) / 2, -spacing],
                                [x1, -spacing]],
             "width": half_width,
             "left": [[0.0, merge_len, 2]],
             "is_merge_lane": True},
            {"id": 2,
             "control_points": [[0.0, 0.0], [highway_len / 2, 0.0],
                                [highway_len, 0.0]],
             "width": half_width,
             "left": [[0.0, highway_len, 3]],
             "right": [[x0, x1, 1]]},
            {"id": 3,
             "control_points": [[0.0, spacing], [highway_len / 2, spacing],
                                [highway_len, spacing]],
             "width": half_width,
             "right": [[0.0, highway_len, 2]]},
        ],
    }


TEMPLATES = ("platoon_merge", "fast_adjacent")


def synth_scenario(template: str, seed: int = 0,
                   model_cfg: Optional[ModelConfig] = None,
                   **params) -> Scenario:
    """Materialize a named template deterministically from a seed."""
    cfg = model_cfg if model_cfg is not None else ModelConfig()
    if template == "platoon_merge":
        v_traffic = params.pop("v_traffic", 25.0)
        gap = params.pop("gap", 60.0)
        n_vehicles = int(params.pop("n_vehicles", 3))
        v_ego0 = params.pop("v_ego0", 18.0)
        merge_len = params.pop("merge_len", 200.0)
        duration = int(params.pop("duration", 25))
        lead_offset = params.pop("lead_offset", 55.0)
        if params:
            raise ScenarioError(f"unknown template parameters {sorted(params)}")
        map_data = build_merge_map(merge_len=merge_len)
        ramp_anchor = 300.0  # ramp start projected onto the target lane
        vehicles = [
            {"dims": [2.0, 5.0], "mode": "synthetic",
             "init": {"p": ramp_anchor + lead_offset - j * gap,
                      "v": v_traffic, "lane": 2}}
            for j in range(n_vehicles)
        ]
        label = f"platoon_merge(v={v_traffic},gap={gap},n={n_vehicles})"
    elif template == "fast_adjacent":
        v_adjacent = params.pop("v_adjacent", 33.0)
        gap_behind = params.pop("gap_behind", 25.0)
        v_ego0 = params.pop("v_ego0", 20.5)
        merge_len = params.pop("merge_len", 200.0)
        duration = int(params.pop("duration", 25))
        if params:
            raise ScenarioError(f"unknown template parameters {sorted(params)}")
        map_data = build_merge_map(merge_len=merge_len)
        # the trait pins the vehicle's free-road equilibrium at v_adjacent
        vehicles = [
            {"dims": [2.0, 5.0], "mode": "synthetic",
             "init": {"p": 300.0 - gap_behind, "v": v_adjacent, "lane": 2,
                      "trait": v_adjacent - cfg.v_des}},
        ]
        label = f"fast_adjacent(v={v_adjacent},behind={gap_behind})"
    else:
        raise ScenarioError(f"unknown template {template!r}; "
                            f"choose from {TEMPLATES}")

    lane_map = map_from_dict(map_data)
    data = {
        "map": "map.json",
        "ego": {"lane": 1, "p": 0.0, "d": 0.0, "v": v_ego0, "W": 2.0, "L": 5.0},
        "vehicles": vehicles,
        "duration": duration,
        "label": label,
    }
    scenario = scenario_from_dict(data, lane_map, model_cfg=cfg,
                                  preroll_seed=seed)
    scenario.map_data = map_data
    return scenario


def write_scenario(scenario: Scenario, out_dir, stem: str = "scenario") -> tuple:
    """Write the scenario and (when synthesized) its map under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    map_name = f"{stem}_map.json"
    data = scenario.to_dict()
    if scenario.map_data is not None:
        map_file = out_dir / map_name
        map_file.write_text(json.dumps(scenario.map_data, sort_keys=True,
                                       indent=1) + "\n")
        data["map"] = map_name
    elif scenario.map_path:
        data["map"] = scenario.map_path
    scen_file = out_dir / f"{stem}.json"
    scen_file.write_text(json.dumps(data, sort_keys=True, indent=1) + "\n")
    return scen_file, (out_dir / map_name if scenario.map_data is not None else None)


# -- closed loop ------------------------------------------------------------------------


def make_initial_root(model: MergeModel, solver: ABTSolver,
                      z: ObservationVector, tracks, rng):
    """Particles conditioned on the first observation.

    Lanes are drawn from the lane posterior, positions and speeds jittered
    with the sensor covariance, and each particle receives a persistent
    driver trait.
    """
    cfg = model.cfg
    posts = model.lane_posteriors(z)
    n = len(tracks)
    lane_ids = sorted(model.map.lanes)
    pos_std = math.sqrt(cfg.r_obs[0])
    vel_std = math.sqrt(cfg.r_obs[1])
    trait_std = math.sqrt(cfg.idm_sigma[0])
    states = []
    for _ in range(solver.config.particles):
        others = []
        for i, track in enumerate(tracks):
            lane = lane_ids[int(rng.choice(len(lane_ids), p=posts[i]))]
            curve = model.map.lanes[lane].curve
            p = curve.project(z.vehicles[i, :2]) + rng.normal(0.0, pos_std)
            v = max(0.0, math.hypot(z.vehicles[i, 2], z.vehicles[i, 3])
                    + rng.normal(0.0, vel_std))
            others.append(NonEgoState(
                p=p, v=v, lane=lane, width=track.width, length=track.length,
                trait=rng.normal(0.0, trait_std),
                departed=p > curve.length))
        states.append(JointState(ego=z.ego, others=tuple(others)))
    return solver.root_from_states(states)


def belief_summary(root, n_vehicles: int) -> list:
    """Per-vehicle lane marginal and first two moments of (p, v)."""
    out = []
    for i in range(n_vehicles):
        lanes = {}
        p_acc, v_acc, p2_acc, v2_acc = 0.0, 0.0, 0.0, 0.0
        for particle in root.particles:
            s = particle.state.others[i]
            w = particle.weight
            lanes[s.lane] = lanes.get(s.lane, 0.0) + w
            p_acc += w * s.p
            v_acc += w * s.v
            p2_acc += w * s.p * s.p
            v2_acc += w * s.v * s.v
        out.append({
            "lanes": lanes,
            "p_mean": p_acc, "p_var": max(0.0, p2_acc - p_acc * p_acc),
            "v_mean": v_acc, "v_var": max(0.0, v2_acc - v_acc * v_acc),
        })
    return out


def run(scenario: Scenario, solver_cfg: SolverConfig,
        model_cfg: Optional[ModelConfig] = None, seed: int = 0,
        log_beliefs: bool = True) -> SimResult:
    """One closed-loop episode: sense, update belief, plan, act, replay."""
    cfg = model_cfg if model_cfg is not None else ModelConfig()
    cfg = replace(cfg, ego_width=scenario.ego.width,
                  ego_length=scenario.ego.length)
    model = MergeModel(scenario.lane_map, cfg)
    rng = np.random.default_rng(seed)
    solver = ABTSolver(model, replace(solver_cfg, seed=seed), rng=rng)
    lane_lengths = {i: ln.length for i, ln in scenario.lane_map.lanes.items()}

    def others_at(k: int):
        return tuple(
            t.state_at(k, lane_lengths[t.states[k][2]])
            for t in scenario.tracks
        )

    state = JointState(ego=EgoState(p=scenario.ego.p, d=scenario.ego.d,
                                    v=scenario.ego.v, lane=scenario.ego.lane),
                       others=others_at(0))
    result = SimResult(outcome="timeout", merge_time=None, min_gap=math.inf,
                       seed=seed, label=scenario.label)
    if model.merged(state.ego):
        result.outcome = "merged"
        result.merge_time = 0
        result.min_gap = _gap_to_traffic(model, state)
        return result

    still = ActionPair(0.0, 0.0)
    root = None
    prev_action = None
    for k in range(scenario.duration):
        z = model.observe(state, rng)
        if root is None:
            root = make_initial_root(model, solver, z, scenario.tracks, rng)
        else:
            try:
                root = solver.update_belief(root, prev_action, z)
            except DegenerateBeliefError:
                # replayed traffic ignores the ego, so predictions can drift
                # arbitrarily far from the recording (the known consequence of
                # driving against pre-recorded data); record the failure and
                # rebuild the belief from the current measurement
                result.belief_resets.append(k)
                result.error = f"belief degenerated and was reset at step {k}"
                root = make_initial_root(model, solver, z, scenario.tracks, rng)
        action = solver.plan(root)
        new_ego, overran = model.step_ego(state.ego, action)
        new_state = JointState(ego=new_ego, others=others_at(k + 1),
                               step_index=k + 1)
        collided = model.collision_check(new_state, action)
        if not collided and cfg.midpoint_collision:
            collided = model._midpoint_collision(state, new_state, action)
        bounds = model.bounds_check(new_ego, action)
        reward = model.reward(new_state, action, collided=collided)
        merged = model.merged(new_ego)
        result.steps.append(StepLog(
            k=k, ego=new_ego, action=action, reward=reward,
            collision=collided, bounds=bounds, overrun=overran, merged=merged,
            others=new_state.others, observation=z,
            belief=belief_summary(root, len(scenario.tracks)) if log_beliefs else None,
        ))
        result.min_gap = min(result.min_gap, _gap_to_traffic(model, new_state))
        state = new_state
        prev_action = action
        if collided:
            result.outcome = "collision"
            return result
        if bounds:
            result.outcome = "bounds"
            return result
        if overran:
            result.outcome = "overrun"
            return result
        if merged:
            result.outcome = "merged"
            result.merge_time = k + 1
            return result
    result.outcome = "timeout"
    return result


def _gap_to_traffic(model: MergeModel, state: JointState) -> float:
    """Smallest rectangle clearance between the ego and any present vehicle."""
    from .geometry import rect_corners, rect_distance

    ex, ey, ehx, ehy = model.ego_pose(state.ego)
    ego_rect = rect_corners(ex, ey, ehx, ehy,
                            model.cfg.ego_width, model.cfg.ego_length)
    best = math.inf
    for s in state.others:
        if s.departed:
            continue
        cx, cy, hx, hy = model.nonego_pose(s)
        other = rect_corners(cx, cy, hx, hy, s.width, s.length)
        best = min(best, rect_distance(ego_rect, other))
    return best


# -- batches --------------------------------------------------------------------------------


def _run_indexed(args):
    scenario, solver_cfg, model_cfg, seed, index = args
    try:
        res = run(scenario, solver_cfg, model_cfg, seed=seed, log_beliefs=False)
        return index, res, None
    except Exception as exc:  # recorded, batch continues
        return index, None, f"{type(exc).__name__}: {exc}"


@dataclass
class BatchReport:
    results: list                       # SimResult or None per run
    errors: dict                        # index -> message
    base_seed: int
    n_runs: int

    def summary(self) -> dict:
        outcomes = {name: 0 for name in OUTCOMES}
        merge_times = []
        min_gaps = []
        for res in self.results:
            if res is None:
                continue
            outcomes[res.outcome] += 1
            if res.merge_time is not None:
                merge_times.append(res.merge_time)
            if math.isfinite(res.min_gap):
                min_gaps.append(res.min_gap)
        done = sum(1 for r in self.results if r is not None)
        summary = {
            "runs": self.n_runs,
            "completed": done,
            "base_seed": self.base_seed,
            "outcomes": outcomes,
            "success_rate": outcomes["merged"] / self.n_runs if self.n_runs else 0.0,
            "collisions": outcomes["collision"],
            "merge_time": _dist_stats(merge_times),
            "min_gap": _dist_stats(min_gaps),
            "traces": self._traces(),
            "run_errors": {str(i): msg for i, msg in sorted(self.errors.items())},
        }
        return summary

    def _traces(self) -> dict:
        horizon = max((len(r.steps) for r in self.results if r is not None),
                      default=0)
        quantiles = (0, 25, 50, 75, 100)
        traces = {"v": [], "accel": [], "dtheta_deg": []}
        for k in range(horizon):
            vs, accs, steers = [], [], []
            for res in self.results:
                if res is None or k >= len(res.steps):
                    continue
                step = res.steps[k]
                vs.append(step.ego.v)
                accs.append(step.action.accel)
                steers.append(step.action.dtheta_deg)
            for name, values in (("v", vs), ("accel", accs),
                                 ("dtheta_deg", steers)):
                traces[name].append(
                    [float(np.percentile(values, q)) for q in quantiles])
        return traces

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=1) + "\n"


def _dist_stats(values) -> Optional[dict]:
    if not values:
        return None
    return {
        "min": float(min(values)),
        "median": float(statistics.median(values)),
        "max": float(max(values)),
        "mean": float(statistics.fmean(values)),
    }


def batch_run(scenario: Scenario, n_runs: int, base_seed: int,
              solver_cfg: SolverConfig,
              model_cfg: Optional[ModelConfig] = None,
              jobs: int = 1) -> BatchReport:
    """n_runs independent closed loops, seeds base_seed..base_seed+n-1."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    tasks = [(scenario, solver_cfg, model_cfg, base_seed + i, i)
             for i in range(n_runs)]
    results = [None] * n_runs
    errors = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for index, res, err in pool.map(_run_indexed, tasks):
                results[index] = res
                if err:
                    errors[index] = err
    else:
        for task in tasks:
            index, res, err = _run_indexed(task)
            results[index] = res
            if err:
                errors[index] = err
    return BatchReport(results=results, errors=errors, base_seed=base_seed,
                       n_runs=n_runs)
