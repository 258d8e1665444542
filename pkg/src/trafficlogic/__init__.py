"""Qualitative reasoning about traffic scenarios on abstract road networks.

The package turns drivable-map descriptions into a discrete relational
model (lanes, connection points, crossing points, overlap zones), checks
scenes and scenario traces against a catalogue of consistency and
transition rules, enumerates every rule-conforming scenario that grows
out of an initial scene, and renders the results as scenario scripts.
"""

from trafficlogic.domain import (
    LonRel,
    PointKind,
    Road,
    RoadNetwork,
    Scene,
    Scenario,
)
from trafficlogic.rules import RuleId, Violation, check_scenario

__all__ = [
    "LonRel",
    "PointKind",
    "Road",
    "RoadNetwork",
    "Scene",
    "Scenario",
    "RuleId",
    "Violation",
    "check_scenario",
]

__version__ = "0.1.0"
