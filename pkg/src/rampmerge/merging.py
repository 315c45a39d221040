"""The on-ramp merging POMDP: dynamics, sensing, reward, and termination.

State factors into the planner-controlled ego vehicle, tracked in
lane-relative coordinates (arc position p, signed lateral offset d, speed v,
lane id), and surrounding traffic, each vehicle reduced to (p, v, lane) on a
fixed lane.  Traffic acceleration is predicted with the intelligent driver
model; the ego moves under a discretized lane-relative point model that
re-expresses its state in the neighbor lane once the offset crosses the lane
width.  Observations map each vehicle back to global position / velocity /
heading through the lane splines, with additive Gaussian noise.

The model implements the generative contract used by the belief-tree solver;
`step` is pure given the rng stream, so episode sampling can treat states as
values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .abt import GenerativeModel
from .geometry import rect_corners, rects_overlap
from .lanes import LaneMap


class LaneSingularityError(ValueError):
    """Ego offset times curvature approached 1; the scenario is ill-posed."""


@dataclass(frozen=True)
class ActionPair:
    """Control input: longitudinal acceleration and heading deviation."""

    accel: float    # m/s^2
    dtheta: float   # radians, constant over the step

    @property
    def dtheta_deg(self) -> float:
        return math.degrees(self.dtheta)


@dataclass(frozen=True)
class EgoState:
    p: float      # arc position on the current lane (m)
    d: float      # signed lateral offset, positive left (m)
    v: float      # longitudinal speed (m/s)
    lane: int


@dataclass(frozen=True)
class NonEgoState:
    p: float
    v: float
    lane: int
    width: float = 2.0
    length: float = 5.0
    trait: float = 0.0       # persistent desired-speed offset (m/s)
    departed: bool = False


@dataclass(frozen=True)
class JointState:
    ego: EgoState
    others: tuple = ()
    step_index: int = 0
    done: bool = False


@dataclass
class ObservationVector:
    """Per-vehicle [px, py, vx, vy, hx, hy] rows plus the exact ego state."""

    ego: EgoState
    vehicles: np.ndarray
    lane_posteriors: Optional[np.ndarray] = field(
        default=None, repr=False, compare=False)  # filled lazily by the model


@dataclass
class ModelConfig:
    """Model constants; defaults reproduce the reference parameter set."""

    dt: float = 1.0
    accels: tuple = (-1.0, -0.5, 0.0, 0.5, 1.0)
    dthetas_deg: tuple = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
    v_des: float = 27.8
    idm_a_max: float = 1.0
    idm_a_min: float = -1.0
    idm_tau: float = 1.5
    idm_delta: float = 4.0
    idm_d_min: float = 1.0
    idm_sigma: tuple = (9.0, 0.04)     # variances of (omega_1, omega_2)
    q_dynamics: tuple = (0.0, 0.0)     # variances of (nu_1, nu_2)
    r_obs: tuple = (0.01, 0.01, 0.0)   # per-block observation variances
    r_center: float = 500.0
    r_vel: float = 100.0
    r_acc: float = 100.0
    r_steer: float = 10.0 * (180.0 / math.pi) ** 2
    r_crash: float = 1.0e6
    r_cst: float = 1.0e3
    r_end: float = 1.0e4
    r_dist: float = 500.0
    r_h: float = 100.0
    ego_width: float = 2.0
    ego_length: float = 5.0
    dtheta_max_deg: float = 2.0
    merge_band: float = 0.3            # |d| threshold for a completed merge
    accel_floor: float = -8.0          # physical brake limit on IDM output
    min_time_left: float = 1e-2        # guards 1/t_left at the lane end
    width_is_full: bool = False        # treat lane width as the full width
    bounds_half_extents: bool = False  # geometrically tight bounds variant
    midpoint_collision: bool = True    # extra mid-step interpolated check
    obs_pos_cell: float = 2.0          # position bin size for tree branching
    obs_speed_cell: float = 1.0        # speed bin size for tree branching

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (self.idm_a_min < 0.0 < self.idm_a_max):
            raise ValueError("need idm_a_min < 0 < idm_a_max")
        for name in ("r_center", "r_vel", "r_acc", "r_steer", "r_crash",
                     "r_cst", "r_end", "r_dist", "r_h"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def actions(self) -> tuple:
        return tuple(
            ActionPair(a, math.radians(th))
            for a in self.accels
            for th in self.dthetas_deg
        )

    @property
    def dtheta_max(self) -> float:
        return math.radians(self.dtheta_max_deg)


def idm_accel(v: float, leader, cfg: ModelConfig,
              omega1: float = 0.0, omega2: float = 0.0) -> float:
    """Car-following acceleration; `leader` is None or (gap_m, v_lead)."""
    v_target = max(cfg.v_des + omega1, 0.1)
    a = 1.0 - (v / v_target) ** cfg.idm_delta
    if leader is not None:
        gap, v_lead = leader
        if gap <= 0.0:
            raise ValueError("leader gap must be positive")
        desired = (cfg.idm_d_min + v * cfg.idm_tau
                   + v * (v - v_lead)
                   / (2.0 * math.sqrt(cfg.idm_a_max * abs(cfg.idm_a_min))))
        a -= (desired / gap) ** 2
    a = cfg.idm_a_max * a + omega2
    return min(max(a, cfg.accel_floor), cfg.idm_a_max)


class MergeModel(GenerativeModel):
    """Generative merging POMDP over a lane map and a parameter set."""

    def __init__(self, lane_map: LaneMap, config: ModelConfig = None):
        self.map = lane_map
        self.cfg = config if config is not None else ModelConfig()
        self._actions = self.cfg.actions()
        self._lane_ids = sorted(lane_map.lanes)
        self._curves = {i: lane_map.lanes[i].curve for i in self._lane_ids}
        self._lane_pos = {i: k for k, i in enumerate(self._lane_ids)}
        self._initial_sampler = None
        cfg = self.cfg
        self._obs_stds = np.sqrt(np.array([cfg.r_obs[0], cfg.r_obs[0],
                                           cfg.r_obs[1], cfg.r_obs[1],
                                           cfg.r_obs[2], cfg.r_obs[2]]))
        # vectorized membership fast path when every lane is a straight
        # segment with constant width
        lanes = [lane_map.lanes[i] for i in self._lane_ids]
        if all(ln.curve.is_straight and len(ln.width_values) == 1
               for ln in lanes):
            scale = 0.5 if cfg.width_is_full else 1.0
            self._geo = [
                (ln.curve._ox, ln.curve._oy, ln.curve._dx, ln.curve._dy,
                 -ln.curve._dy, ln.curve._dx, ln.curve.length,
                 scale * float(ln.width_values[0]))
                for ln in lanes
            ]
        else:
            self._geo = None

    # -- generative contract ------------------------------------------------

    def actions(self):
        return self._actions

    def step(self, state: JointState, action: ActionPair, rng):
        return self.generative_step(state, action, rng)

    def sample_initial_belief(self, rng):
        if self._initial_sampler is None:
            raise RuntimeError(
                "no initial belief context attached; the merging POMDP "
                "conditions its initial belief on the first observation"
            )
        return self._initial_sampler(rng)

    def set_initial_sampler(self, sampler) -> None:
        self._initial_sampler = sampler

    def is_terminal(self, state: JointState) -> bool:
        return state.done or self.merged(state.ego)

    def half_width(self, lane_id: int, p: float) -> float:
        """Centerline-to-boundary distance, honoring the width semantics flag."""
        w = self.map.lanes[lane_id].width_at(p)
        return 0.5 * w if self.cfg.width_is_full else w

    def merged(self, ego: EgoState) -> bool:
        return ego.lane == self.map.desired_lane and abs(ego.d) <= self.cfg.merge_band

    # -- vehicle dynamics ------------------------------------------------------

    def step_nonego(self, s: NonEgoState, accel: float, rng) -> NonEgoState:
        """Single-mass advance along the fixed lane with optional noise."""
        cfg = self.cfg
        dt = cfg.dt
        nu1 = nu2 = 0.0
        q1, q2 = cfg.q_dynamics
        if q1 > 0.0:
            nu1 = rng.normal(0.0, math.sqrt(q1))
        if q2 > 0.0:
            nu2 = rng.normal(0.0, math.sqrt(q2))
        p_new = s.p + s.v * dt + 0.5 * accel * dt * dt + nu1
        v_new = max(0.0, s.v + accel * dt + nu2)
        departed = s.departed or p_new > self._curves[s.lane].length
        return NonEgoState(p=p_new, v=v_new, lane=s.lane, width=s.width,
                           length=s.length, trait=s.trait, departed=departed)

    def leader_query(self, state: JointState, i: int) -> Optional[tuple]:
        """Nearest vehicle ahead on vehicle i's lane as (bumper gap, speed).

        The ego counts as a candidate while its global position lies within
        the lane's width.
        """
        me = state.others[i]
        best_gap = math.inf
        best_v = 0.0
        for j, other in enumerate(state.others):
            if j == i or other.departed or other.lane != me.lane:
                continue
            if other.p > me.p:
                gap = other.p - me.p - 0.5 * (other.length + me.length)
                if gap < best_gap:
                    best_gap, best_v = gap, other.v
        lane = self.map.lanes[me.lane]
        ego = state.ego
        if ego.lane == me.lane:
            d_ego, p_ego = ego.d, ego.p
        else:
            gx, gy = self._curves[ego.lane].offset_xy(ego.p, ego.d)
            p_ego, d_ego = lane.curve.project_with_distance((gx, gy))
        if abs(d_ego) < self.half_width(me.lane, p_ego) and p_ego > me.p:
            gap = p_ego - me.p - 0.5 * (self.cfg.ego_length + me.length)
            if gap < best_gap:
                best_gap, best_v = gap, ego.v
        if best_gap is math.inf:
            return None
        return max(best_gap, 0.1), best_v

    def step_ego(self, s: EgoState, action: ActionPair) -> tuple:
        """Advance the ego one step; returns (new state, ran_off_lane_end)."""
        cfg = self.cfg
        lane = self.map.lanes[s.lane]
        curve = lane.curve
        kappa = curve.curvature(s.p)
        denom = 1.0 - s.d * kappa
        if denom <= 0.05:
            raise LaneSingularityError(
                f"1 - d*kappa = {denom:.3f} at p={s.p:.1f} on lane {s.lane}"
            )
        p_hat = s.p + s.v * math.cos(action.dtheta) * cfg.dt / denom
        d_hat = s.d + s.v * math.sin(action.dtheta) * cfg.dt
        v_new = max(0.0, s.v + action.accel * cfg.dt)

        overran = False
        if p_hat > curve.length:
            succ = lane.desired_successor
            if succ is not None:
                return (
                    EgoState(p=p_hat - curve.length, d=d_hat, v=v_new, lane=succ),
                    False,
                )
            p_hat = curve.length
            overran = True
        elif p_hat < 0.0:
            p_hat = 0.0

        width = self.half_width(s.lane, p_hat)
        side = None
        if d_hat > width:
            side = lane.neighbor_at(p_hat, "left")
        elif -d_hat > width:
            side = lane.neighbor_at(p_hat, "right")
        if side is not None:
            gx, gy = curve.offset_xy(p_hat, d_hat)
            new_curve = self._curves[side]
            p_new, d_new = new_curve.project_with_distance((gx, gy))
            return EgoState(p=p_new, d=d_new, v=v_new, lane=side), False
        return EgoState(p=p_hat, d=d_hat, v=v_new, lane=s.lane), overran

    # -- poses -------------------------------------------------------------------

    def ego_pose(self, ego: EgoState, dtheta: float = 0.0) -> tuple:
        """(cx, cy, hx, hy) of the ego center and heading in global frame."""
        curve = self._curves[ego.lane]
        cx, cy = curve.offset_xy(ego.p, ego.d)
        hx, hy = curve.heading_xy(ego.p)
        if dtheta:
            cos_t, sin_t = math.cos(dtheta), math.sin(dtheta)
            hx, hy = hx * cos_t - hy * sin_t, hx * sin_t + hy * cos_t
        return cx, cy, hx, hy

    def nonego_pose(self, s: NonEgoState) -> tuple:
        curve = self._curves[s.lane]
        cx, cy = curve.position_xy(s.p)
        hx, hy = curve.heading_xy(s.p)
        return cx, cy, hx, hy

    # -- observation ---------------------------------------------------------------

    def observe(self, state: JointState, rng) -> ObservationVector:
        """Noisy global-frame measurement of every traffic vehicle."""
        cfg = self.cfg
        n = len(state.others)
        rows = np.empty((n, 6))
        for i, s in enumerate(state.others):
            cx, cy, hx, hy = self.nonego_pose(s)
            rows[i] = (cx, cy, s.v * hx, s.v * hy, hx, hy)
        if n:
            rows += rng.normal(0.0, 1.0, size=(n, 6)) * self._obs_stds
        return ObservationVector(ego=state.ego, vehicles=rows)

    def lane_likelihood_factors(self, lane_id: int, px: float, py: float,
                                hx: float, hy: float) -> tuple:
        """(distance factor, alignment factor) of one lane for a measurement."""
        lane = self.map.lanes[lane_id]
        p_close = lane.curve.project((px, py))
        cx, cy = lane.curve.position_xy(p_close)
        dist = math.hypot(px - cx, py - cy)
        lx, ly = lane.curve.heading_xy(p_close)
        alpha = hx * lx + hy * ly
        width = self.half_width(lane_id, p_close)
        ratio4 = (dist / width) ** 4
        f1 = math.exp(-ratio4) if ratio4 < 700.0 else 0.0
        return f1, math.exp(3.0 * (alpha - 1.0))

    def lane_posterior(self, z_row) -> np.ndarray:
        """Probability of each lane given one vehicle's measurement row."""
        px, py, hx, hy = float(z_row[0]), float(z_row[1]), float(z_row[4]), float(z_row[5])
        scores = np.empty(len(self._lane_ids))
        for k, lane_id in enumerate(self._lane_ids):
            f1, f2 = self.lane_likelihood_factors(lane_id, px, py, hx, hy)
            scores[k] = f1 * f2
        total = scores.sum()
        if not math.isfinite(total) or total <= 0.0:
            return np.full(len(scores), 1.0 / len(scores))
        return scores / total

    def lane_posteriors(self, z: ObservationVector) -> list:
        if z.lane_posteriors is None:
            if self._geo is not None:
                z.lane_posteriors = self._lane_posteriors_straight(z.vehicles)
            else:
                z.lane_posteriors = [
                    self.lane_posterior(row).tolist() for row in z.vehicles
                ]
        return z.lane_posteriors

    def _lane_posteriors_straight(self, rows: np.ndarray) -> list:
        """Scalar fast path over straight constant-width lanes."""
        geo = self._geo
        out = []
        exp = math.exp
        for row in rows.tolist():
            x, y, hx, hy = row[0], row[1], row[4], row[5]
            scores = []
            total = 0.0
            for ox, oy, dx, dy, qx, qy, length, halfw in geo:
                rx, ry = x - ox, y - oy
                s_raw = rx * dx + ry * dy
                if s_raw < 0.0:
                    excess = s_raw
                elif s_raw > length:
                    excess = s_raw - length
                else:
                    excess = 0.0
                perp = rx * qx + ry * qy
                ratio4 = ((perp * perp + excess * excess) / (halfw * halfw)) ** 2
                f1 = exp(-ratio4) if ratio4 < 700.0 else 0.0
                score = f1 * exp(3.0 * (hx * dx + hy * dy - 1.0))
                scores.append(score)
                total += score
            if not (total > 0.0) or total != total:
                uniform = 1.0 / len(scores)
                out.append([uniform] * len(scores))
            else:
                out.append([sc / total for sc in scores])
        return out

    def obs_key(self, z: ObservationVector) -> tuple:
        """Quantized observation: position/speed cells plus the likeliest lane."""
        pos_cell = self.cfg.obs_pos_cell
        speed_cell = self.cfg.obs_speed_cell
        posts = self.lane_posteriors(z)
        floor = math.floor
        key = []
        for i, row in enumerate(z.vehicles.tolist()):
            post = posts[i]
            best = max(range(len(post)), key=post.__getitem__)
            key.append((
                floor(row[0] / pos_cell),
                floor(row[1] / pos_cell),
                floor(math.hypot(row[2], row[3]) / speed_cell),
                self._lane_ids[best],
            ))
        return tuple(key)

    def reweight(self, state: JointState, z: ObservationVector) -> float:
        """Observation likelihood of a particle (density within the key bins).

        Gaussian position/velocity residual blocks (zero-variance blocks are
        excluded) times the lane-membership probability of the particle's
        lane assignment under the measurement.
        """
        cfg = self.cfg
        posts = self.lane_posteriors(z)
        log_w = 0.0
        lane_factor = 1.0
        for i, s in enumerate(state.others):
            row = z.vehicles[i]
            cx, cy, hx, hy = self.nonego_pose(s)
            if cfg.r_obs[0] > 0.0:
                log_w -= ((row[0] - cx) ** 2 + (row[1] - cy) ** 2) / (2.0 * cfg.r_obs[0])
            if cfg.r_obs[1] > 0.0:
                log_w -= ((row[2] - s.v * hx) ** 2 + (row[3] - s.v * hy) ** 2) / (
                    2.0 * cfg.r_obs[1])
            lane_factor *= posts[i][self._lane_pos[s.lane]]
        if lane_factor == 0.0:
            return 0.0
        return lane_factor * math.exp(log_w)

    # -- reward -----------------------------------------------------------------------

    def reward_change(self, ego: EgoState) -> float:
        """Penalty for not having joined the target lane yet."""
        cfg = self.cfg
        if ego.lane == self.map.desired_lane:
            return 0.0
        length = self._curves[ego.lane].length
        t_left = max((length - ego.p) / max(ego.v, 0.1), cfg.min_time_left)
        d_des = self.distance_to_desired(ego)
        return -(cfg.r_cst
                 + cfg.r_end * (1.0 / t_left + ego.p / length)
                 + cfg.r_dist * d_des * d_des)

    def distance_to_desired(self, ego: EgoState) -> float:
        """Signed offset of the ego's global position from the target lane."""
        if ego.lane == self.map.desired_lane:
            return ego.d
        gx, gy = self._curves[ego.lane].offset_xy(ego.p, ego.d)
        return self._curves[self.map.desired_lane].signed_distance((gx, gy))

    def reward(self, state: JointState, action: ActionPair,
               collided: Optional[bool] = None) -> float:
        """Step reward on the post-transition state with the applied input."""
        cfg = self.cfg
        ego = state.ego
        dv = cfg.v_des - ego.v
        if dv >= 1.0:
            r_vel = -cfg.r_vel * dv
        else:
            r_vel = -cfg.r_vel * dv * dv
        r_input = -cfg.r_acc * action.accel ** 2 - cfg.r_steer * action.dtheta ** 2
        if collided is None:
            collided = self.collision_check(state, action)
        crashed = collided or self.bounds_check(ego, action)
        r_crash = -cfg.r_crash if crashed else 0.0
        return (r_vel + r_input + r_crash + self.reward_change(ego)
                - cfg.r_center * ego.d * ego.d)

    # -- safety checks -----------------------------------------------------------------

    def _ego_corners(self, ego: EgoState, dtheta: float):
        cx, cy, hx, hy = self.ego_pose(ego, dtheta)
        return (cx, cy), rect_corners(cx, cy, hx, hy,
                                      self.cfg.ego_width, self.cfg.ego_length)

    def collision_check(self, state: JointState, action: ActionPair) -> bool:
        """Oriented-rectangle overlap between the ego and any present vehicle."""
        (ex, ey), ego_rect = self._ego_corners(state.ego, action.dtheta)
        ego_radius = 0.5 * math.hypot(self.cfg.ego_width, self.cfg.ego_length)
        for s in state.others:
            if s.departed:
                continue
            cx, cy, hx, hy = self.nonego_pose(s)
            reach = ego_radius + 0.5 * math.hypot(s.width, s.length)
            if (cx - ex) ** 2 + (cy - ey) ** 2 > reach * reach:
                continue
            other = rect_corners(cx, cy, hx, hy, s.width, s.length)
            if rects_overlap(ego_rect, other):
                return True
        return False

    def _midpoint_collision(self, prev: JointState, new: JointState,
                            action: ActionPair) -> bool:
        """Interpolated half-step overlap check against pose tunneling."""
        pex, pey, phx, phy = self.ego_pose(prev.ego, action.dtheta)
        nex, ney, nhx, nhy = self.ego_pose(new.ego, action.dtheta)
        mex, mey = 0.5 * (pex + nex), 0.5 * (pey + ney)
        mhx, mhy = phx + nhx, phy + nhy
        norm = math.hypot(mhx, mhy)
        if norm < 1e-9:
            return False
        mhx, mhy = mhx / norm, mhy / norm
        ego_rect = rect_corners(mex, mey, mhx, mhy,
                                self.cfg.ego_width, self.cfg.ego_length)
        ego_radius = 0.5 * math.hypot(self.cfg.ego_width, self.cfg.ego_length)
        for s_prev, s_new in zip(prev.others, new.others):
            if s_prev.departed or s_new.departed:
                continue
            p1 = self.nonego_pose(s_prev)
            p2 = self.nonego_pose(s_new)
            cx, cy = 0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1])
            hx, hy = p1[2] + p2[2], p1[3] + p2[3]
            norm = math.hypot(hx, hy)
            if norm < 1e-9:
                continue
            reach = ego_radius + 0.5 * math.hypot(s_prev.width, s_prev.length)
            if (cx - mex) ** 2 + (cy - mey) ** 2 > reach * reach:
                continue
            other = rect_corners(cx, cy, hx / norm, hy / norm,
                                 s_prev.width, s_prev.length)
            if rects_overlap(ego_rect, other):
                return True
        return False

    def bounds_check(self, ego: EgoState, action: ActionPair) -> bool:
        """Highway-bounds violation test on a side without a neighbor lane."""
        cfg = self.cfg
        lane = self.map.lanes[ego.lane]
        width = self.half_width(ego.lane, ego.p)
        if cfg.bounds_half_extents:
            extent = (0.5 * cfg.ego_width * abs(math.cos(action.dtheta))
                      + 0.5 * cfg.ego_length * abs(math.sin(action.dtheta)))
            left_reach = ego.d + extent
            right_reach = -(ego.d - extent)
        else:
            # literal formula: full dims, signed sine
            reach = (ego.d + cfg.ego_width * math.cos(action.dtheta)
                     + cfg.ego_length * math.sin(action.dtheta))
            left_reach, right_reach = reach, -reach
        if left_reach > width and lane.neighbor_at(ego.p, "left") is None:
            return True
        if right_reach > width and lane.neighbor_at(ego.p, "right") is None:
            return True
        return False

    # -- heuristic ---------------------------------------------------------------------

    def heuristic(self, state: JointState) -> float:
        """Lane-reaching time estimate plus the crash penalty at the state."""
        cfg = self.cfg
        ego = state.ego
        d_des = self.distance_to_desired(ego)
        steer_rate = max(ego.v, 0.1) * math.sin(cfg.dtheta_max)
        h = -cfg.r_h * abs(d_des / steer_rate)
        still = ActionPair(0.0, 0.0)
        if self.collision_check(state, still) or self.bounds_check(ego, still):
            h -= cfg.r_crash
        return h

    # -- composed transition --------------------------------------------------------------

    def generative_step(self, state: JointState, action: ActionPair, rng):
        """One joint transition: IDM traffic, lane-relative ego, sense, score."""
        cfg = self.cfg
        sigma2 = math.sqrt(cfg.idm_sigma[1]) if cfg.idm_sigma[1] > 0 else 0.0
        n = len(state.others)
        omega2 = rng.normal(0.0, sigma2, size=n) if (n and sigma2 > 0) else np.zeros(n)

        new_others = []
        for i, s in enumerate(state.others):
            if s.departed:
                new_others.append(s)
                continue
            accel = idm_accel(s.v, self.leader_query(state, i), cfg,
                              omega1=s.trait, omega2=float(omega2[i]))
            new_others.append(self.step_nonego(s, accel, rng))

        new_ego, overran = self.step_ego(state.ego, action)
        new_state = JointState(ego=new_ego, others=tuple(new_others),
                               step_index=state.step_index + 1)

        collided = self.collision_check(new_state, action)
        if not collided and cfg.midpoint_collision:
            collided = self._midpoint_collision(state, new_state, action)
        out_of_bounds = self.bounds_check(new_ego, action)
        reward = self.reward(new_state, action, collided=collided)
        terminal = (collided or out_of_bounds or overran
                    or self.merged(new_ego))
        if terminal:
            new_state = replace(new_state, done=True)
        observation = self.observe(new_state, rng)
        return new_state, observation, reward, terminal

    def predict(self, state: JointState, action: ActionPair, rng) -> tuple:
        """Transition plus measurement only, for belief-update sampling.

        Skips the reward terms and the mid-step interpolation check; the
        post-step overlap/bounds/goal tests still mark terminal states so
        replenished particles keep their terminality.
        """
        cfg = self.cfg
        sigma2 = math.sqrt(cfg.idm_sigma[1]) if cfg.idm_sigma[1] > 0 else 0.0
        n = len(state.others)
        omega2 = rng.normal(0.0, sigma2, size=n) if (n and sigma2 > 0) else np.zeros(n)
        new_others = []
        for i, s in enumerate(state.others):
            if s.departed:
                new_others.append(s)
                continue
            accel = idm_accel(s.v, self.leader_query(state, i), cfg,
                              omega1=s.trait, omega2=float(omega2[i]))
            new_others.append(self.step_nonego(s, accel, rng))
        new_ego, overran = self.step_ego(state.ego, action)
        new_state = JointState(ego=new_ego, others=tuple(new_others),
                               step_index=state.step_index + 1)
        terminal = (overran or self.merged(new_ego)
                    or self.collision_check(new_state, action)
                    or self.bounds_check(new_ego, action))
        if terminal:
            new_state = replace(new_state, done=True)
        return new_state, self.observe(new_state, rng)
