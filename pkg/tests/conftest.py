"""Shared builders for detection records and tiny scenarios."""

import pytest

from avcalib.detection import DatasetMeta, DetectionRecord, FieldDataset, SurroundingObs
from avcalib.roadsim import (
    BehaviorSpec,
    Entrance,
    IdmParams,
    LaneChangeParams,
    Link,
    RoadNetwork,
    ScenarioConfig,
)

MS = 3.6  # m/s -> km/h


def surr(vid, lane, rel_long, rel_lat=0.0, speed_ms=15.0, heading=0.0):
    return SurroundingObs(
        vehicle_id=str(vid),
        lane_id=lane,
        rel_longitudinal=float(rel_long),
        rel_lateral=float(rel_lat),
        speed_kmh=speed_ms * MS,
        heading_deg=heading,
    )


def rec(t, lane=1, speed_ms=15.0, surroundings=(), road="R1", accel=0.0,
        lane_distance=0.5, limit_kmh=80.0):
    return DetectionRecord(
        timestamp=float(t),
        road_name=road,
        speed_limit_kmh=limit_kmh,
        speed_kmh=speed_ms * MS,
        yaw_rate=0.0,
        longitude=0.0,
        latitude=0.0,
        acceleration=accel,
        lane_id=lane,
        lane_distance=lane_distance,
        surroundings=tuple(surroundings),
    )


def dataset(records, interval=0.1, detection_range=(-150.0, 150.0), source="field"):
    ds = FieldDataset(
        records=tuple(records),
        meta=DatasetMeta(source=source, interval=interval, detection_range=detection_range),
    )
    ds.validate()
    return ds


@pytest.fixture
def micro_scenario():
    """Single-lane link with one entrance; the slow subject collects a
    platoon, so car-following headways are plentiful and cheap to simulate."""
    net = RoadNetwork(
        links=(Link(id="A", length=900.0, lane_count=1, speed_limit=60.0),),
        entrances=(Entrance(id="E1", link="A", entry_speed=45.0),),
        subject_route=("A",),
    )
    behavior = {
        "background": BehaviorSpec(IdmParams(v0=15.0), LaneChangeParams()),
        "subject": BehaviorSpec(IdmParams(), LaneChangeParams()),
    }
    return ScenarioConfig(
        network=net,
        entrance_inputs={"E1": 700.0},
        behavior=behavior,
        subject_desired_speed=30.0,
        total_time=90.0,
        warmup_time=20.0,
        time_step=0.5,
        detection_range=(-120.0, 120.0),
        speed_variation=0.05,
        seed=0,
    )
