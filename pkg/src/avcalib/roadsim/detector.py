"""Virtual detector: what the subject vehicle's sensors would report.

Walks the post-warm-up frames of a trajectory log and emits one detection
record per timestep. A background vehicle is visible when its position
along the route arc falls inside the detection window around the subject;
positions are reported front-positive / left-positive and speeds in km/h,
matching the field-data schema bit for bit.
"""

from __future__ import annotations

import numpy as np

from ..detection import DatasetMeta, DetectionRecord, FieldDataset, SurroundingObs
from .engine import KIND_SUBJECT, LANE_WIDTH, TrajectoryLog, MissingSubjectError
from .network import ScenarioConfig

MS_TO_KMH = 3.6


def _lane_distance(lat: float) -> float:
    """Signed distance from the vehicle centerline to the nearest lane
    marking: positive when that marking is on the left."""
    d = LANE_WIDTH / 2.0 - abs(lat)
    return d if lat >= 0.0 else -d


def virtual_detector_sample(log: TrajectoryLog, config: ScenarioConfig) -> FieldDataset:
    """Sample the log through the subject's detection window.

    Requires the subject to be present in every post-warm-up frame; raises
    MissingSubjectError otherwise.
    """
    rear, front = config.detection_range
    offsets = np.zeros(len(log.route_lengths))
    acc = 0.0
    for i, length in enumerate(log.route_lengths):
        offsets[i] = acc
        acc += length

    records = []
    prev_lat = None
    dt = log.time_step
    for frame in log.frames:
        if log.is_warmup(frame.time):
            continue
        subj_mask = frame.kinds == KIND_SUBJECT
        if not subj_mask.any():
            raise MissingSubjectError(
                f"no subject vehicle in frame at t={frame.time}; "
                "shorten the horizon or extend the route"
            )
        si = int(np.nonzero(subj_mask)[0][0])
        s_link = int(frame.link_idx[si])
        s_arc = offsets[s_link] + frame.pos[si]
        s_lane = int(frame.lanes[si])
        s_lat = float(frame.lat[si])
        s_speed = float(frame.speed[si])

        arcs = offsets[frame.link_idx] + frame.pos
        rel = arcs - s_arc
        visible = (~subj_mask) & (rel >= rear) & (rel <= front)

        obs = []
        for i in np.nonzero(visible)[0]:
            i = int(i)
            rel_lat = (int(frame.lanes[i]) - s_lane) * LANE_WIDTH + (
                float(frame.lat[i]) - s_lat
            )
            obs.append(
                SurroundingObs(
                    vehicle_id=str(int(frame.ids[i])),
                    lane_id=int(frame.lanes[i]),
                    rel_longitudinal=float(rel[i]),
                    rel_lateral=rel_lat,
                    speed_kmh=float(frame.speed[i]) * MS_TO_KMH,
                    heading_deg=float(frame.heading[i]),
                )
            )
        obs.sort(key=lambda o: int(o.vehicle_id))

        if prev_lat is None:
            yaw = 0.0
        else:
            yaw = (s_lat - prev_lat) / dt / max(s_speed, 0.1)
        prev_lat = s_lat

        link = config.network.link(log.route_link_ids[s_link])
        records.append(
            DetectionRecord(
                timestamp=float(frame.time),
                road_name=link.id,
                speed_limit_kmh=link.speed_limit,
                speed_kmh=s_speed * MS_TO_KMH,
                yaw_rate=yaw,
                longitude=float(s_arc),
                latitude=0.0,
                acceleration=float(frame.accel[si]),
                lane_id=s_lane,
                lane_distance=_lane_distance(s_lat),
                surroundings=tuple(obs),
            )
        )

    dataset = FieldDataset(
        records=tuple(records),
        meta=DatasetMeta(
            source="simulation",
            interval=dt,
            route="->".join(log.route_link_ids),
            detection_range=(float(rear), float(front)),
        ),
    )
    dataset.validate()
    return dataset
