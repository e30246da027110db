"""Road network and scenario configuration.

The network is a set of directed links chained through `downstream`
pointers; the subject vehicle follows a fixed route along this chain and
background vehicles enter at entrance links and drive to the end of the
chain. This corridor-with-on-ramps topology covers the expressway-style
routes the calibration targets without a full graph model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .models import (
    MODEL_CLASSES,
    MODEL_NAMES,
    CarFollowingParams,
    IdmParams,
    LaneChangeParams,
)

KMH = 1.0 / 3.6


@dataclass(frozen=True)
class Link:
    id: str
    length: float          # m
    lane_count: int
    speed_limit: float     # km/h
    downstream: str | None = None

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError(f"link {self.id}: length must be > 0")
        if self.lane_count < 1:
            raise ValueError(f"link {self.id}: needs at least one lane")
        if self.speed_limit <= 0:
            raise ValueError(f"link {self.id}: speed limit must be > 0")

    @property
    def speed_limit_ms(self) -> float:
        return self.speed_limit * KMH


@dataclass(frozen=True)
class Entrance:
    id: str
    link: str
    entry_speed: float | None = None  # km/h; defaults to the link's limit


@dataclass(frozen=True)
class RoadNetwork:
    links: tuple[Link, ...]
    entrances: tuple[Entrance, ...]
    subject_route: tuple[str, ...]

    def __post_init__(self):
        ids = [l.id for l in self.links]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate link ids")
        by_id = {l.id: l for l in self.links}
        for e in self.entrances:
            if e.link not in by_id:
                raise ValueError(f"entrance {e.id} references unknown link {e.link}")
        if not self.subject_route:
            raise ValueError("subject route must not be empty")
        for lid in self.subject_route:
            if lid not in by_id:
                raise ValueError(f"route references unknown link {lid}")
        for a, b in zip(self.subject_route[:-1], self.subject_route[1:]):
            if by_id[a].downstream != b:
                raise ValueError(f"route links {a} -> {b} are not connected")

    def link(self, link_id: str) -> Link:
        for l in self.links:
            if l.id == link_id:
                return l
        raise KeyError(link_id)

    def route_links(self) -> tuple[Link, ...]:
        return tuple(self.link(lid) for lid in self.subject_route)

    def route_offsets(self) -> dict[str, float]:
        """Arc-length position of each route link's start along the route."""
        offsets = {}
        pos = 0.0
        for lid in self.subject_route:
            offsets[lid] = pos
            pos += self.link(lid).length
        return offsets

    @property
    def route_length(self) -> float:
        return sum(self.link(lid).length for lid in self.subject_route)


@dataclass(frozen=True)
class BehaviorSpec:
    car_following: CarFollowingParams
    lane_change: LaneChangeParams


@dataclass(frozen=True)
class ScenarioConfig:
    network: RoadNetwork
    entrance_inputs: dict = field(default_factory=dict)   # entrance id -> pcu/h
    behavior: dict = field(default_factory=dict)          # class -> BehaviorSpec
    subject_desired_speed: float = 60.0                   # km/h
    total_time: float = 1750.0
    warmup_time: float = 600.0
    time_step: float = 0.1
    detection_range: tuple[float, float] = (-150.0, 150.0)
    speed_variation: float = 0.1   # +- fraction on each driver's desired speed
    vehicle_length: float = 4.5
    seed: int = 0

    def __post_init__(self):
        if not self.warmup_time < self.total_time:
            raise ValueError("warmup_time must be below total_time")
        if self.time_step <= 0:
            raise ValueError("time_step must be > 0")
        rear, front = self.detection_range
        if not (rear < 0.0 < front):
            raise ValueError("detection_range must straddle zero (rear < 0 < front)")
        if not 0.0 <= self.speed_variation < 1.0:
            raise ValueError("speed_variation must lie in [0, 1)")
        for eid, rate in self.entrance_inputs.items():
            if rate < 0:
                raise ValueError(f"entrance {eid}: input rate must be >= 0")
        known = {e.id for e in self.network.entrances}
        for eid in self.entrance_inputs:
            if eid not in known:
                raise ValueError(f"entrance input for unknown entrance {eid}")
        if "background" not in self.behavior:
            raise ValueError("behavior must define the 'background' class")

    def subject_behavior(self) -> BehaviorSpec:
        """The subject drives an IDM agent at the configured desired speed;
        an explicit 'subject' behavior entry overrides everything but that
        desired speed."""
        spec = self.behavior.get("subject")
        v0 = self.subject_desired_speed * KMH
        if spec is None:
            return BehaviorSpec(car_following=IdmParams(v0=v0), lane_change=LaneChangeParams())
        cf = spec.car_following
        if isinstance(cf, IdmParams):
            cf = replace(cf, v0=v0)
        return BehaviorSpec(car_following=cf, lane_change=spec.lane_change)


# ---------------------------------------------------------------------------
# JSON (de)serialization


def _cf_to_dict(cf: CarFollowingParams) -> dict:
    d = {"model": MODEL_NAMES[type(cf)]}
    d.update(cf.__dict__)
    return d


def _cf_from_dict(d: dict) -> CarFollowingParams:
    d = dict(d)
    name = d.pop("model")
    try:
        cls = MODEL_CLASSES[name]
    except KeyError:
        raise ValueError(f"unknown car-following model {name!r}") from None
    return cls(**d)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "links": [
            {
                "id": l.id,
                "length": l.length,
                "lanes": l.lane_count,
                "speed_limit": l.speed_limit,
                "downstream": l.downstream,
            }
            for l in cfg.network.links
        ],
        "entrances": [
            {"id": e.id, "link": e.link, "entry_speed": e.entry_speed}
            for e in cfg.network.entrances
        ],
        "subject_route": list(cfg.network.subject_route),
        "entrance_inputs": dict(cfg.entrance_inputs),
        "behavior": {
            cls: {
                "car_following": _cf_to_dict(spec.car_following),
                "lane_change": dict(spec.lane_change.__dict__),
            }
            for cls, spec in cfg.behavior.items()
        },
        "subject_desired_speed": cfg.subject_desired_speed,
        "total_time": cfg.total_time,
        "warmup_time": cfg.warmup_time,
        "time_step": cfg.time_step,
        "detection_range": list(cfg.detection_range),
        "speed_variation": cfg.speed_variation,
        "vehicle_length": cfg.vehicle_length,
        "seed": cfg.seed,
    }


def scenario_from_dict(d: dict) -> ScenarioConfig:
    network = RoadNetwork(
        links=tuple(
            Link(
                id=l["id"],
                length=float(l["length"]),
                lane_count=int(l.get("lanes", l.get("lane_count", 1))),
                speed_limit=float(l["speed_limit"]),
                downstream=l.get("downstream"),
            )
            for l in d["links"]
        ),
        entrances=tuple(
            Entrance(id=e["id"], link=e["link"], entry_speed=e.get("entry_speed"))
            for e in d["entrances"]
        ),
        subject_route=tuple(d["subject_route"]),
    )
    behavior = {}
    for cls, spec in d.get("behavior", {}).items():
        behavior[cls] = BehaviorSpec(
            car_following=_cf_from_dict(spec["car_following"]),
            lane_change=LaneChangeParams(**spec.get("lane_change", {})),
        )
    return ScenarioConfig(
        network=network,
        entrance_inputs={k: float(v) for k, v in d.get("entrance_inputs", {}).items()},
        behavior=behavior,
        subject_desired_speed=float(d.get("subject_desired_speed", 60.0)),
        total_time=float(d.get("total_time", 1750.0)),
        warmup_time=float(d.get("warmup_time", 600.0)),
        time_step=float(d.get("time_step", 0.1)),
        detection_range=tuple(d.get("detection_range", (-150.0, 150.0))),
        speed_variation=float(d.get("speed_variation", 0.1)),
        vehicle_length=float(d.get("vehicle_length", 4.5)),
        seed=int(d.get("seed", 0)),
    )


def load_scenario(path) -> ScenarioConfig:
    with open(path) as f:
        return scenario_from_dict(json.load(f))


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(cfg), indent=2, sort_keys=True) + "\n")
