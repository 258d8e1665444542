"""Rendering of qualitative scenarios as OpenSCENARIO-DSL text.

The translation follows a fixed recipe: one top-level ``scenario`` block;
every network point declared as a ``position_3d`` (numeric when map
coordinates are available, symbolic otherwise); one ``serial`` composition
holding one ``parallel`` sub-block per scene; and inside each block one
``drive()`` invocation per vehicle whose ``position`` modifiers carry the
vehicle-vehicle and vehicle-point relations and whose ``lateral`` modifier
carries lane occupancy.  Vehicle-vehicle relations are emitted from both
sides (each vehicle's action states its own longitudinal position), so
every non-None relation atom maps to exactly one modifier.

Qualitative relations have no metric gap, so the relational phrases
(``ahead_of`` / ``behind`` / ``same_as``) are emitted without distances.
Overlap relations (lonro) have no OSC counterpart and are not emitted;
they remain recoverable from the scenario fact file.
"""

from __future__ import annotations

from dataclasses import dataclass

from trafficlogic.domain import LonRel, RoadNetwork, Scenario
from trafficlogic.rules import check_scenario, render_report

__all__ = ["OscDocument", "emit_osc", "parse_coords"]

_INDENT = "    "

_PHRASE = {
    LonRel.AHEAD: "ahead_of",
    LonRel.BEHIND: "behind",
    LonRel.COVER: "same_as",
}


@dataclass(frozen=True)
class OscDocument:
    """A rendered OSC scenario plus its structural skeleton."""

    text: str
    positions: dict[str, str]  # point id -> declared position name
    blocks: tuple[str, ...]  # parallel block labels, in scene order

    def __str__(self) -> str:
        return self.text


def parse_coords(text: str) -> dict[str, tuple[float, float, float]]:
    """Read a coordinate sidecar: one ``point x y z`` line per point."""
    out: dict[str, tuple[float, float, float]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"coords line {lineno}: expected 'point x y z'")
        try:
            out[parts[0]] = (float(parts[1]), float(parts[2]), float(parts[3]))
        except ValueError:
            raise ValueError(f"coords line {lineno}: non-numeric coordinate") from None
    return out


def emit_osc(
    sc: Scenario,
    n: RoadNetwork,
    coords: dict[str, tuple[float, float, float]] | None = None,
) -> OscDocument:
    """Translate a valid scenario into an OSC document (deterministic)."""
    violations = check_scenario(sc)
    if violations:
        raise ValueError("scenario is invalid:\n" + render_report(violations))
    for k, scene in enumerate(sc.scenes, start=1):
        for c in sorted(sc.vehicles):
            if not scene.occ_of(c):
                raise ValueError(
                    f"vehicle {c} occupies no lane at step {k}; "
                    "cannot derive a lateral modifier"
                )

    lines: list[str] = ["scenario traffic_scenario:"]
    positions: dict[str, str] = {}
    points = sorted(n.points)
    if points:
        lines.append(_INDENT + "# road-network anchor points")
    for pid in points:
        positions[pid] = pid
        if coords and pid in coords:
            x, y, z = coords[pid]
            lines.append(
                _INDENT + f"{pid}: position_3d = position_3d(x: {x:.6f}, y: {y:.6f}, z: {z:.6f})"
            )
        else:
            lines.append(_INDENT + f"{pid}: position_3d")
    vehicles = sorted(sc.vehicles)
    for c in vehicles:
        lines.append(_INDENT + f"{c}: vehicle")
    lines.append(_INDENT + "do serial:")
    blocks: list[str] = []
    for k, scene in enumerate(sc.scenes, start=1):
        label = f"step_{k}"
        blocks.append(label)
        lines.append(_INDENT * 2 + f"{label}: parallel:")
        for c in vehicles:
            lines.append(_INDENT * 3 + f"{c}.drive() with:")
            lanes = ", ".join(sorted(scene.occ_of(c)))
            lines.append(_INDENT * 4 + f"lateral(lanes: [{lanes}])")
            for other in vehicles:
                if other == c:
                    continue
                rel = scene.vrel_of(c, other)
                if rel is not LonRel.NONE:
                    lines.append(_INDENT * 4 + f"position({_PHRASE[rel]}: {other})")
            for pid in points:
                rel = scene.prel_of(c, pid)
                if rel is not LonRel.NONE:
                    lines.append(_INDENT * 4 + f"position({_PHRASE[rel]}: {pid})")
    text = "\n".join(lines) + "\n"
    return OscDocument(text=text, positions=positions, blocks=tuple(blocks))
