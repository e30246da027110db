"""avcalib: two-stage calibration of an embedded microscopic traffic
simulator against AV detection data.

Stage 1 matches traffic-level measures (subject speed, window density) by
tuning entrance inflows over an orthogonal-array design. Stage 2 first
screens all vehicle-behavior parameters with range analysis, then optimizes
the critical ones with a fitness-adaptive genetic algorithm, targeting
vehicle-level interaction measures (headways, lane-change distances,
cut-in counts).
"""

__version__ = "0.1.0"
