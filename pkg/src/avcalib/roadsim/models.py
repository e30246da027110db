"""Car-following and lane-changing behavior models.

Five car-following families are supported (IDM, Gipps, full velocity
difference, Krauss and the Wiedemann-99 psychophysical model), each
exposing exactly the calibratable parameters practitioners tune for it.
The lane-change model is gap acceptance: a change must be safe for the
trailing vehicle in the target lane and for the vehicle itself, and must
promise an acceleration advantage above a configurable threshold.

All models are deterministic here; stochastic driver diversity is injected
at the simulation level through a per-vehicle desired-speed factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

V80 = 80.0 / 3.6  # reference speed for the W99 free-acceleration ramp
HARD_DECEL_LIMIT = -10.0
PCU_LENGTH = 4.5  # nominal passenger-car-unit length, m


class DegenerateGapError(ValueError):
    """Leader present with a non-positive gap; resolve the collision first."""


def _require_positive(obj, names):
    for n in names:
        if getattr(obj, n) <= 0:
            raise ValueError(f"{type(obj).__name__}.{n} must be > 0")


def _require_negative(obj, names):
    for n in names:
        if getattr(obj, n) >= 0:
            raise ValueError(f"{type(obj).__name__}.{n} must be < 0")


@dataclass(frozen=True)
class IdmParams:
    a_max: float = 1.5   # maximum acceleration, m/s^2
    b: float = 2.0       # comfortable deceleration, m/s^2
    T: float = 1.2       # desired time gap, s
    s0: float = 2.0      # jam space gap, m
    delta: float = 4.0   # acceleration exponent
    v0: float = 22.2     # desired speed, m/s

    def __post_init__(self):
        _require_positive(self, ("a_max", "b", "T", "s0", "delta", "v0"))


@dataclass(frozen=True)
class GippsParams:
    accel_max: float = 1.7          # m/s^2
    decel_max: float = -3.0         # own most severe braking, m/s^2 (< 0)
    leader_eff_length: float = 6.5  # m
    leader_decel_est: float = -3.0  # estimate of leader braking, m/s^2 (< 0)
    v_desired: float = 22.2         # m/s
    tau: float = 0.7                # reaction time, s

    def __post_init__(self):
        _require_positive(self, ("accel_max", "leader_eff_length", "v_desired", "tau"))
        _require_negative(self, ("decel_max", "leader_decel_est"))


@dataclass(frozen=True)
class FvdParams:
    alpha: float = 0.4     # relaxation gain on the optimal speed, 1/s
    lambda0: float = 0.5   # gain on the speed difference, 1/s
    v0: float = 22.2       # desired speed, m/s
    b_len: float = 6.0     # interaction length: gap at which motion starts, m
    beta: float = 1.2      # form factor of the optimal-speed ramp
    sc: float = 60.0       # gap at which the optimal speed saturates, m

    def __post_init__(self):
        _require_positive(self, ("alpha", "lambda0", "v0", "b_len", "beta", "sc"))
        if self.sc <= self.b_len:
            raise ValueError("FvdParams.sc must exceed b_len")


@dataclass(frozen=True)
class KraussParams:
    a: float = 1.5       # preferred acceleration, m/s^2
    b: float = 3.0       # maximum deceleration magnitude, m/s^2
    tau: float = 1.0     # reaction time, s
    v_max: float = 22.2  # m/s

    def __post_init__(self):
        _require_positive(self, ("a", "b", "tau", "v_max"))


@dataclass(frozen=True)
class W99Params:
    cc0: float = 1.5        # standstill gap, m
    cc1: float = 0.9        # headway time, s
    cc2: float = 4.0        # following variation, m
    cc3: float = -8.0       # onset of approaching, s
    cc4: float = -0.35      # negative following threshold, m/s
    cc5: float = 0.35       # positive following threshold, m/s
    cc6: float = 1.5e-4     # speed dependency of oscillation, 1/(m*s)
    cc7: float = 0.25       # oscillation acceleration, m/s^2
    cc8: float = 3.5        # standstill acceleration, m/s^2
    cc9: float = 1.5        # acceleration at 80 km/h, m/s^2

    def __post_init__(self):
        _require_positive(self, ("cc0", "cc1", "cc2", "cc6", "cc7", "cc8", "cc9"))


CarFollowingParams = Union[IdmParams, GippsParams, FvdParams, KraussParams, W99Params]

MODEL_CLASSES = {
    "idm": IdmParams,
    "gipps": GippsParams,
    "fvd": FvdParams,
    "krauss": KraussParams,
    "w99": W99Params,
}

MODEL_NAMES = {cls: name for name, cls in MODEL_CLASSES.items()}


def model_desired_speed(model: CarFollowingParams) -> Optional[float]:
    """The model's own desired speed, None for W99 (supplied externally)."""
    if isinstance(model, IdmParams):
        return model.v0
    if isinstance(model, GippsParams):
        return model.v_desired
    if isinstance(model, FvdParams):
        return model.v0
    if isinstance(model, KraussParams):
        return model.v_max
    return None


def min_spawn_gap(model: CarFollowingParams) -> float:
    """Smallest clear gap a newly inserted vehicle needs ahead of it."""
    if isinstance(model, IdmParams):
        return model.s0
    if isinstance(model, W99Params):
        return model.cc0
    if isinstance(model, FvdParams):
        return model.b_len
    return 2.0


def _idm(p: IdmParams, v, gap, v_leader, v_des):
    free = p.a_max * (1.0 - (v / v_des) ** p.delta)
    if gap is None:
        return free
    s_star = p.s0 + max(0.0, v * p.T + v * (v - v_leader) / (2.0 * math.sqrt(p.a_max * p.b)))
    return free - p.a_max * (s_star / gap) ** 2


def _gipps(p: GippsParams, v, gap, v_leader, v_des, dt):
    ratio = min(v / v_des, 1.0)
    v_acc = v + 2.5 * p.accel_max * p.tau * (1.0 - ratio) * math.sqrt(0.025 + ratio)
    if gap is None:
        v_next = min(v_acc, v_des)
    else:
        bn = -p.decel_max           # positive braking magnitude
        bhat = -p.leader_decel_est  # positive estimate for the leader
        # the effective leader length counts its physical length plus the
        # margin the follower will not enter, measured against a nominal pcu
        avail = gap - (p.leader_eff_length - PCU_LENGTH)
        under = bn * bn * p.tau * p.tau + bn * (
            2.0 * avail - v * p.tau + v_leader * v_leader / bhat
        )
        v_safe = -bn * p.tau + math.sqrt(under) if under > 0.0 else 0.0
        v_next = min(v_acc, v_safe, v_des)
    v_next = max(v_next, 0.0)
    return (v_next - v) / p.tau


def _fvd_optimal_speed(p: FvdParams, gap):
    if gap <= p.b_len:
        return 0.0
    if gap >= p.sc:
        return p.v0
    return p.v0 * ((gap - p.b_len) / (p.sc - p.b_len)) ** p.beta


def _fvd(p: FvdParams, v, gap, v_leader, v_des):
    if gap is None:
        return p.alpha * (v_des - v)
    v_opt = min(_fvd_optimal_speed(p, gap), v_des)
    return p.alpha * (v_opt - v) + p.lambda0 * (v_leader - v)


def _krauss(p: KraussParams, v, gap, v_leader, v_des, dt):
    v_cap = min(v_des, p.v_max)
    v_want = min(v + p.a * dt, v_cap)
    if gap is not None:
        v_mean = max((v + v_leader) / 2.0, 0.1)
        v_safe = v_leader + (gap - v_leader * p.tau) / (v_mean / p.b + p.tau)
        v_want = min(v_want, v_safe)
    v_want = max(v_want, 0.0)
    return (v_want - v) / dt


def _w99_free(p: W99Params, v):
    return p.cc8 + (p.cc9 - p.cc8) * min(v, V80) / V80


def _w99(p: W99Params, v, gap, v_leader, v_des, prev_accel, leader_accel):
    if gap is None:
        if v < v_des:
            return _w99_free(p, v)
        return min(0.0, v_des - v)

    dv = v_leader - v  # positive when the gap is opening
    dx = gap
    if v_leader <= 0.01:
        sdxc = p.cc0
    else:
        v_slow = v if dv >= 0.0 else v_leader
        sdxc = p.cc0 + p.cc1 * v_slow
    sdxo = sdxc + p.cc2
    sdxv = sdxo + p.cc3 * (dv - p.cc4)
    sdv = p.cc6 * dx * dx
    sdvc = (p.cc4 - sdv) if v_leader > 0.0 else 0.0
    sdvo = (sdv + p.cc5) if v > p.cc5 else sdv

    if dx <= sdxc and dv <= sdvo:
        # emergency regime: too close, brake
        a = 0.0
        if v > 0.0:
            if dv < 0.0:
                if dx > p.cc0:
                    a = min(leader_accel + dv * dv / (p.cc0 - dx), 0.0)
                else:
                    a = min(leader_accel + 0.5 * (dv - sdvo), 0.0)
            a = min(a, -p.cc7)
            a = max(a, HARD_DECEL_LIMIT)
        return a
    if dv < sdvc and dx < sdxv:
        # approaching regime: brake to reach the leader speed by the time
        # the gap closes to the desired following distance
        if dx > sdxc:
            a = 0.5 * dv * dv / min(sdxc - dx, -0.01)
        else:
            a = -p.cc7
        return max(a, HARD_DECEL_LIMIT)
    if dv < sdvo and dx < sdxo:
        # following regime: oscillate gently around the current state
        a = -p.cc7 if prev_accel <= 0.0 else p.cc7
        if v >= v_des:
            a = min(a, 0.0)
        return a
    # free regime
    if v < v_des:
        a = _w99_free(p, v)
        if dx < sdxo:
            a = min(a, p.cc7)
        return a
    return min(0.0, v_des - v)


def car_following_acceleration(
    model: CarFollowingParams,
    follower,
    leader: Optional[tuple[float, float]] = None,
    dt: float = 0.1,
    desired_speed: Optional[float] = None,
    leader_accel: float = 0.0,
) -> float:
    """Acceleration demanded by `model` for the follower.

    follower is a vehicle state (anything carrying .speed, optionally
    .acceleration) or a bare speed in m/s. leader is (bumper gap m,
    leader speed m/s) or None for free flow. desired_speed overrides the
    model's own target speed and is mandatory for W99, which has none.

    The returned value is finite and never brakes the vehicle below zero
    speed within one step of length dt.
    """
    if hasattr(follower, "speed"):
        v = float(follower.speed)
        prev_accel = float(getattr(follower, "acceleration", 0.0))
    else:
        v = float(follower)
        prev_accel = 0.0
    if leader is not None:
        gap, v_leader = float(leader[0]), float(leader[1])
        if gap <= 0.0:
            raise DegenerateGapError(f"gap {gap} must be positive when a leader is present")
    else:
        gap, v_leader = None, 0.0

    v_des = desired_speed if desired_speed is not None else model_desired_speed(model)
    if v_des is None:
        raise ValueError("this model carries no desired speed; pass desired_speed")

    if isinstance(model, IdmParams):
        a = _idm(model, v, gap, v_leader, v_des)
    elif isinstance(model, GippsParams):
        a = _gipps(model, v, gap, v_leader, v_des, dt)
    elif isinstance(model, FvdParams):
        a = _fvd(model, v, gap, v_leader, v_des)
    elif isinstance(model, KraussParams):
        a = _krauss(model, v, gap, v_leader, v_des, dt)
    elif isinstance(model, W99Params):
        a = _w99(model, v, gap, v_leader, v_des, prev_accel, leader_accel)
    else:
        raise TypeError(f"unknown car-following model {type(model)!r}")

    # never integrate into negative speed
    return max(a, -v / dt)


@dataclass(frozen=True)
class LaneChangeParams:
    safe_dist_reduction: float = 0.6
    min_headway_front: float = 2.0     # m
    min_headway_rear: float = 2.0      # m
    max_decel_trailing: float = -3.0   # m/s^2 (< 0)
    max_decel_own: float = -4.0        # m/s^2 (< 0)
    advantage_threshold: float = 0.2   # m/s^2 gain required to move

    def __post_init__(self):
        if not 0.0 < self.safe_dist_reduction <= 1.0:
            raise ValueError("safe_dist_reduction must lie in (0, 1]")
        _require_positive(self, ("min_headway_front", "min_headway_rear"))
        _require_negative(self, ("max_decel_trailing", "max_decel_own"))


@dataclass(frozen=True)
class NeighborView:
    """Gap and speed of the closest vehicles in one candidate lane; None
    means no vehicle there (infinite gap)."""

    leader: Optional[tuple[float, float]] = None
    follower: Optional[tuple[float, float]] = None


STAY = "stay"
CHANGE_LEFT = "change_left"
CHANGE_RIGHT = "change_right"


def _braking_needed(v_rear: float, v_front: float, clear_gap: float) -> float:
    """Constant deceleration the rear vehicle needs to avoid eating the
    clear gap; 0 when it is not closing."""
    if v_rear <= v_front:
        return 0.0
    return -((v_rear - v_front) ** 2) / (2.0 * max(clear_gap, 0.1))


def _side_evaluation(v, a_current, side: NeighborView, p: LaneChangeParams,
                     cf_model, dt, desired_speed):
    front_min = p.min_headway_front * p.safe_dist_reduction
    rear_min = p.min_headway_rear * p.safe_dist_reduction
    if side.leader is not None:
        gap_f, v_f = side.leader
        if gap_f <= front_min:
            return False, 0.0
        own_required = _braking_needed(v, v_f, gap_f - front_min)
        if own_required < p.max_decel_own:
            return False, 0.0
    if side.follower is not None:
        gap_r, v_r = side.follower
        if gap_r <= rear_min:
            return False, 0.0
        induced = _braking_needed(v_r, v, gap_r - rear_min)
        if induced < p.max_decel_trailing:
            return False, 0.0
    a_target = car_following_acceleration(
        cf_model, v, side.leader, dt, desired_speed=desired_speed
    )
    advantage = a_target - a_current
    return advantage > p.advantage_threshold, advantage


def lane_change_decision(
    vehicle,
    current_leader: Optional[tuple[float, float]],
    left: Optional[NeighborView],
    right: Optional[NeighborView],
    params: LaneChangeParams,
    cf_model: CarFollowingParams,
    dt: float = 0.1,
    desired_speed: Optional[float] = None,
) -> str:
    """Gap-acceptance lane-change decision.

    left/right are None when that side has no lane. A side is taken only if
    it is safe (headway margins hold and neither the target follower nor
    the vehicle itself would need to brake beyond the configured bounds)
    and offers an acceleration advantage above the threshold. With both
    sides eligible the larger advantage wins, right on a tie.
    """
    v = float(vehicle.speed) if hasattr(vehicle, "speed") else float(vehicle)
    a_current = car_following_acceleration(
        cf_model, v, current_leader, dt, desired_speed=desired_speed
    )
    candidates = []
    if right is not None:
        ok, adv = _side_evaluation(v, a_current, right, params, cf_model, dt, desired_speed)
        if ok:
            candidates.append((adv, 1, CHANGE_RIGHT))
    if left is not None:
        ok, adv = _side_evaluation(v, a_current, left, params, cf_model, dt, desired_speed)
        if ok:
            candidates.append((adv, 0, CHANGE_LEFT))
    if not candidates:
        return STAY
    candidates.sort(key=lambda c: (-c[0], -c[1]))
    return candidates[0][2]
