"""Embedded microscopic traffic simulator."""

from .detector import virtual_detector_sample
from .engine import (
    LANE_WIDTH,
    LC_DURATION,
    SUBJECT_VID,
    CollisionEvent,
    Frame,
    MissingSubjectError,
    Simulation,
    TrajectoryLog,
    VehicleState,
    run_scenario,
)
from .models import (
    CHANGE_LEFT,
    CHANGE_RIGHT,
    STAY,
    CarFollowingParams,
    DegenerateGapError,
    FvdParams,
    GippsParams,
    IdmParams,
    KraussParams,
    LaneChangeParams,
    NeighborView,
    W99Params,
    car_following_acceleration,
    lane_change_decision,
    model_desired_speed,
)
from .network import (
    BehaviorSpec,
    Entrance,
    Link,
    RoadNetwork,
    ScenarioConfig,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)

__all__ = [
    "LANE_WIDTH",
    "LC_DURATION",
    "SUBJECT_VID",
    "CollisionEvent",
    "Frame",
    "MissingSubjectError",
    "Simulation",
    "TrajectoryLog",
    "VehicleState",
    "run_scenario",
    "CHANGE_LEFT",
    "CHANGE_RIGHT",
    "STAY",
    "CarFollowingParams",
    "DegenerateGapError",
    "FvdParams",
    "GippsParams",
    "IdmParams",
    "KraussParams",
    "LaneChangeParams",
    "NeighborView",
    "W99Params",
    "car_following_acceleration",
    "lane_change_decision",
    "model_desired_speed",
    "BehaviorSpec",
    "Entrance",
    "Link",
    "RoadNetwork",
    "ScenarioConfig",
    "load_scenario",
    "save_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "virtual_detector_sample",
]
