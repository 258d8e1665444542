"""Consistency rules for scenes and scene transitions.

Two rule families: per-scene rules (relation symmetry/transitivity,
occupancy shape, point-cover exclusivity, overlap-window coherence) and
per-transition rules (qualitative continuity — relations and occupancy
may only evolve gradually, connections must be taken properly).  A
scenario is *realistic* exactly when every scene and every consecutive
scene pair passes.

Scene rules never reason about absent relations beyond the dedicated
support rules (PR10/PR13/WF): value rules skip NONE so that one modelling
mistake yields one violation, not a cascade.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import combinations, permutations
from typing import Iterable, Optional

from trafficlogic.domain import (
    LonRel,
    OverlapZone,
    PointKind,
    RoadNetwork,
    Scenario,
    Scene,
    invert,
)

A, C, B, N = LonRel.AHEAD, LonRel.COVER, LonRel.BEHIND, LonRel.NONE


class RuleId(Enum):
    PR1 = "PR1"
    PR2 = "PR2"
    PR3 = "PR3"
    PR4 = "PR4"
    PR5 = "PR5"
    PR6 = "PR6"
    PR7 = "PR7"
    PR8 = "PR8"
    PR9 = "PR9"
    PR10 = "PR10"
    PR11 = "PR11"
    PR12 = "PR12"
    PR13 = "PR13"
    PR14_SYM = "PR14_SYM"
    PR14_TRANS = "PR14_TRANS"
    PR14_CONT = "PR14_CONT"
    TR1 = "TR1"
    TR2 = "TR2"
    #: Well-formedness: unknown ids, unsupported/missing relations, stutters.
    WF = "WF"


@dataclass(frozen=True)
class Violation:
    """One falsified rule instance.

    ``step`` is 1-based; transition violations also carry ``step2``
    (= step+1).  ``witnesses`` are the ids bound by the falsified rule;
    WF violations prefix them with a breach keyword.
    """

    rule: RuleId
    step: int
    witnesses: tuple[str, ...]
    step2: Optional[int] = None

    def render(self) -> str:
        at = f"@step {self.step}" if self.step2 is None else f"@step {self.step}->{self.step2}"
        return f"{self.rule.value} {at} [{', '.join(self.witnesses)}]"


def render_report(violations: Iterable[Violation]) -> str:
    """One sorted line per violation — stable across runs."""
    return "\n".join(sorted(v.render() for v in violations))


#: Composition of qualitative range relations along one shared axis:
#: rel(x,y) and rel(y,z) constrain rel(x,z) to these values.
COMPOSITION: dict[tuple[LonRel, LonRel], frozenset[LonRel]] = {
    (A, A): frozenset({A}),
    (A, C): frozenset({A, C}),
    (A, B): frozenset({A, C, B}),
    (C, A): frozenset({A, C}),
    (C, C): frozenset({A, C, B}),
    (C, B): frozenset({C, B}),
    (B, A): frozenset({A, C, B}),
    (B, C): frozenset({C, B}),
    (B, B): frozenset({B}),
}

#: Allowed one-step evolutions of a vehicle-vehicle relation (PR4).
VREL_NEXT = {A: frozenset({A, C}), C: frozenset({A, C, B}), B: frozenset({B, C})}

#: Allowed one-step evolutions of a vehicle-point relation (PR9):
#: strictly monotone — a vehicle never re-approaches a point it passed.
PREL_NEXT = {B: frozenset({B, C}), C: frozenset({C, A}), A: frozenset({A})}

#: Pairs (earlier point, later point) of relations that contradict the
#: point order along a lane.
_ORDER_FORBIDDEN = {(B, C), (B, A), (C, A)}


# -- derived auxiliary facts --------------------------------------------------


@dataclass(frozen=True)
class DerivedFacts:
    """Auxiliary predicates computed from a scene over a network."""

    cleft: frozenset[tuple[str, str]]
    cbelong: frozenset[tuple[str, str]]
    fwdover: frozenset[tuple[str, str, str]]
    rvsover: frozenset[tuple[str, str, str]]


def derive(scene: Scene, n: RoadNetwork) -> DerivedFacts:
    """Compute cleft / cbelong / fwdover / rvsover for one scene.

    ``cleft`` is the transitive left-of order between lanes of one road;
    ``cbelong`` ties vehicles to the roads of their occupied lanes;
    ``fwdover(c,p1,p2)`` holds when c occupies a lane carrying the
    overlap window (p1,p2) and sits strictly inside it going forward
    (past p1, before p2); ``rvsover`` is the against-the-window variant.
    """
    cleft = set()
    for r in n.roads:
        for i, a in enumerate(r.lanes):
            for b in r.lanes[i + 1 :]:
                cleft.add((a, b))
    cbelong = set()
    for c, lanes in scene.occ.items():
        for l in lanes:
            rid = n.road_of_lane(l)
            if rid is None:
                raise ValueError(f"unknown lane {l!r} occupied by {c!r}")
            cbelong.add((c, rid))
    fwdover = set()
    rvsover = set()
    for p1, p2 in n.overlaps:
        lanes = n.lanes_of_point(p1) & n.lanes_of_point(p2)
        for c, occ in scene.occ.items():
            if not (occ & lanes):
                continue
            r1, r2 = scene.prel_of(c, p1), scene.prel_of(c, p2)
            if r1 is A and r2 is B:
                fwdover.add((c, p1, p2))
            elif r1 is B and r2 is A:
                rvsover.add((c, p1, p2))
    return DerivedFacts(frozenset(cleft), frozenset(cbelong), frozenset(fwdover), frozenset(rvsover))


# -- scene-level checking ------------------------------------------------------


def _single_road(scene: Scene, n: RoadNetwork, c: str) -> Optional[str]:
    roads = {n.road_of_lane(l) for l in scene.occ_of(c)}
    roads.discard(None)
    if len(roads) == 1:
        return next(iter(roads))
    return None


def _engaged(scene: Scene, n: RoadNetwork, c: str, road: Optional[str], zone: OverlapZone) -> bool:
    """Whether ``c`` (on ``road``) sits inside the overlap window.

    Judged in the vehicle's own travel frame from its relations to the
    window's two boundary points: past the one it meets first, before
    the one it meets second.  This is road-wide — the vehicle need not
    occupy the carrying lane itself to be alongside the window.
    """
    if road is None:
        return False
    ee = zone.entry_exit_for(road)
    if ee is None:
        return False
    first, second = ee
    return scene.prel_of(c, first) is A and scene.prel_of(c, second) is B


def _common_zones(
    scene: Scene, n: RoadNetwork, x: str, y: str, rx: Optional[str], ry: Optional[str]
) -> list[OverlapZone]:
    if rx is None or ry is None:
        return []
    out = []
    for z in n.zones_of_road(rx):
        if ry in z.orientation and _engaged(scene, n, x, rx, z) and _engaged(scene, n, y, ry, z):
            out.append(z)
    return out


def _ref_frame(value: LonRel, orientation: int) -> LonRel:
    return value if orientation > 0 else invert(value)


def check_scene(scene: Scene, n: RoadNetwork, step: int = 1) -> list[Violation]:
    """All per-scene rule violations, deduplicated."""
    found: set[tuple] = set()
    out: list[Violation] = []

    def add(rule: RuleId, *witnesses: str) -> None:
        key = (rule, witnesses)
        if key not in found:
            found.add(key)
            out.append(Violation(rule, step, witnesses))

    vehicles = scene.vehicles
    vset = set(vehicles)
    known_lanes = set(n.lanes)
    road_of: dict[str, Optional[str]] = {}

    for c in vehicles:
        lanes = scene.occ_of(c)
        for l in lanes:
            if l not in known_lanes:
                add(RuleId.WF, "unknown_lane", c, l)
        lanes = lanes & known_lanes
        if not scene.occ_of(c):
            add(RuleId.PR6, c)
        if len(scene.occ_of(c)) > 2:
            add(RuleId.TR1, c)
        roads = {n.road_of_lane(l) for l in lanes} - {None}
        if len(roads) > 1:
            add(RuleId.PR8, c)
        road_of[c] = next(iter(roads)) if len(roads) == 1 else None
        if road_of[c] is not None and len(lanes) > 1:
            idx = sorted(n.lane_index(l) for l in lanes)
            if idx[-1] - idx[0] != len(idx) - 1:
                add(RuleId.PR5, c)

    # vehicle-vehicle relation: symmetry, support, transitivity, cycles
    for x, y in combinations(vehicles, 2):
        vxy, vyx = scene.vrel.get((x, y)), scene.vrel.get((y, x))
        if (vxy is None) != (vyx is None) or (vxy is not None and vyx is not invert(vxy)):
            add(RuleId.PR1, x, y)
        rx, ry = road_of[x], road_of[y]
        if rx is not None and ry is not None:
            if rx == ry and vxy is None and vyx is None:
                add(RuleId.WF, "missing_lonr", x, y)
            if rx != ry and (vxy is not None or vyx is not None):
                add(RuleId.WF, "crossroad_lonr", x, y)
        shared = scene.occ_of(x) & scene.occ_of(y)
        if shared and (vxy is C or vyx is C):
            add(RuleId.TR2, x, y)
    for (x, y), v in scene.vrel.items():
        if x == y:
            add(RuleId.WF, "self_relation", x)
        for z in (x, y):
            if z not in vset:
                add(RuleId.WF, "unknown_vehicle", z)
    for x, y, z in permutations(vehicles, 3):
        vxy, vyz, vxz = scene.vrel_of(x, y), scene.vrel_of(y, z), scene.vrel_of(x, z)
        if vxy is A and vyz is A and vxz is not N and vxz is not A:
            add(RuleId.PR2, x, y, z)
        if vxy is B and vyz is B and vxz is not N and vxz is not B:
            add(RuleId.PR2, x, y, z)
        if vxy is A and vyz is C and scene.vrel_of(z, x) is A:
            add(RuleId.PR3, x, y, z)

    # vehicle-point relations: totality on the own road, no strays
    for c in vehicles:
        rid = road_of[c]
        if rid is None:
            continue
        for p in sorted(n.points_of_road(rid)):
            if scene.prel_of(c, p) is N:
                add(RuleId.PR10, c, p)
    for (c, p), v in scene.prel.items():
        if c not in vset:
            add(RuleId.WF, "unknown_vehicle", c)
            continue
        if p not in n.points:
            add(RuleId.WF, "unknown_point", c, p)
            continue
        rid = road_of[c]
        if rid is not None and p not in n.points_of_road(rid):
            add(RuleId.WF, "unsupported_lonpr", c, p)

    # point-cover exclusivity: two vehicles may not cover the same point
    # while both occupy lanes the point lies on
    for p in sorted(n.points):
        plane = n.lanes_of_point(p)
        coverers = [
            c for c in vehicles if scene.prel_of(c, p) is C and (scene.occ_of(c) & plane)
        ]
        for x, y in combinations(coverers, 2):
            add(RuleId.PR11, x, y, p)

    # per-lane point order vs one vehicle's relations; mixed transitivity
    for c in vehicles:
        rid = road_of[c]
        if rid is None:
            continue
        for l in n.road(rid).lanes:
            for p1, p2 in sorted(n.lane_order_pairs(l)):
                if (scene.prel_of(c, p1), scene.prel_of(c, p2)) in _ORDER_FORBIDDEN:
                    add(RuleId.PR14_TRANS, c, p1, p2)
    for x, y in permutations(vehicles, 2):
        rx, ry = road_of[x], road_of[y]
        if rx is None or rx != ry:
            continue
        vxy = scene.vrel_of(x, y)
        if vxy is N:
            continue
        for p in sorted(n.points_of_road(rx)):
            px, py = scene.prel_of(x, p), scene.prel_of(y, p)
            if px is N or py is N:
                continue
            if vxy is A and py is A and px is not A:
                add(RuleId.PR14_TRANS, x, y, p)
            elif vxy is B and py is B and px is not B:
                add(RuleId.PR14_TRANS, x, y, p)
            elif vxy is C and py is A and px is B:
                add(RuleId.PR14_TRANS, x, y, p)
            elif vxy is C and py is B and px is A:
                add(RuleId.PR14_TRANS, x, y, p)

    # overlap windows: support, copy/symmetry, head-on exclusion,
    # cross-vehicle consistency inside one window
    engaged_of_zone: dict[tuple[str, str], list[str]] = {}
    for z in n.zones:
        members = [c for c in vehicles if _engaged(scene, n, c, road_of[c], z)]
        engaged_of_zone[(z.start, z.end)] = members
        for x, y in combinations(members, 2):
            rx, ry = road_of[x], road_of[y]
            same_dir = z.orientation[rx] == z.orientation[ry]
            oxy, oyx = scene.orel.get((x, y)), scene.orel.get((y, x))
            if oxy is None or oyx is None:
                add(RuleId.PR13, x, y)
                continue
            if same_dir:
                if rx == ry and (oxy is not scene.vrel_of(x, y) or oyx is not scene.vrel_of(y, x)):
                    add(RuleId.PR13, x, y)
            else:
                carrying = n.lanes_of_point(z.start) & n.lanes_of_point(z.end)
                if oxy is C and (scene.occ_of(x) & carrying) and (scene.occ_of(y) & carrying):
                    add(RuleId.PR13, x, y)
        # relation triangle inside the window, judged along the window axis
        for x, y, w in permutations(members, 3):
            r1 = scene.orel.get((x, y))
            r2 = scene.orel.get((y, w))
            r3 = scene.orel.get((x, w))
            if r1 is None or r2 is None or r3 is None:
                continue
            f1 = _ref_frame(r1, z.orientation[road_of[x]])
            f2 = _ref_frame(r2, z.orientation[road_of[y]])
            f3 = _ref_frame(r3, z.orientation[road_of[x]])
            if f3 not in COMPOSITION[(f1, f2)]:
                add(RuleId.PR14_TRANS, x, y, w)

    for (x, y), v in scene.orel.items():
        if x == y:
            add(RuleId.WF, "self_relation", x)
            continue
        if x not in vset or y not in vset:
            add(RuleId.WF, "unknown_vehicle", x if x not in vset else y)
            continue
        zones = _common_zones(scene, n, x, y, road_of.get(x), road_of.get(y))
        if not zones:
            add(RuleId.WF, "unsupported_lonro", x, y)
            continue
        mirror = scene.orel.get((y, x))
        z = zones[0]
        same_dir = z.orientation[road_of[x]] == z.orientation[road_of[y]]
        expected = invert(v) if same_dir else v
        if mirror is not expected:
            add(RuleId.PR14_SYM, *sorted((x, y)))
    return out


# -- transition-level checking -------------------------------------------------


def check_transition(prev: Scene, next_: Scene, n: RoadNetwork, step: int = 1) -> list[Violation]:
    """All violations of the one-step evolution rules between two scenes."""
    found: set[tuple] = set()
    out: list[Violation] = []

    def add(rule: RuleId, *witnesses: str) -> None:
        key = (rule, witnesses)
        if key not in found:
            found.add(key)
            out.append(Violation(rule, step, witnesses, step2=step + 1))

    if prev == next_:
        add(RuleId.WF, "stutter")

    vehicles = sorted(set(prev.occ) | set(next_.occ))

    for x_i in range(len(vehicles)):
        for y_i in range(x_i + 1, len(vehicles)):
            x, y = vehicles[x_i], vehicles[y_i]
            u, v = prev.vrel_of(x, y), next_.vrel_of(x, y)
            if u is not N and v is not N and v not in VREL_NEXT[u]:
                add(RuleId.PR4, x, y)

    for c in vehicles:
        lp, ln = prev.occ_of(c), next_.occ_of(c)
        if not lp or not ln:
            continue
        rp = {n.road_of_lane(l) for l in lp} - {None}
        rn = {n.road_of_lane(l) for l in ln} - {None}
        if len(rp) != 1 or len(rn) != 1:
            continue  # malformed occupancy is a scene-level finding
        if rp == rn:
            if len(lp ^ ln) > 1:
                add(RuleId.PR7, c)
        else:
            # A road change must be an atomic hop through a covered
            # connection point onto one of its successor lanes.
            licensed = False
            if len(lp) == 1 and len(ln) == 1:
                (l1,), (l2,) = lp, ln
                for p in n.connections_on(l1):
                    if prev.prel_of(c, p) is C and (p, l2) in n.succ_c:
                        licensed = True
                        break
            if not licensed:
                add(RuleId.PR7, c)

    seen_pp = set(prev.prel) | set(next_.prel)
    for c, p in sorted(seen_pp):
        u, v = prev.prel_of(c, p), next_.prel_of(c, p)
        if u is not N and v is not N and v not in PREL_NEXT[u]:
            add(RuleId.PR9, c, p)

    for c in vehicles:
        for l1 in sorted(prev.occ_of(c)):
            for p in n.connections_on(l1):
                if prev.prel_of(c, p) is not C:
                    continue
                stays = next_.prel_of(c, p) is C and l1 in next_.occ_of(c)
                crosses = next_.prel_of(c, p) is A and any(
                    l2 in next_.occ_of(c) for l2 in n.successor_lanes(p)
                )
                if not (stays or crosses):
                    add(RuleId.PR12, c, p)

    # window relations evolve monotonically for opposed traffic: once two
    # vehicles heading toward each other have met, they can only separate
    for z in n.zones:
        for x_i in range(len(vehicles)):
            for y_i in range(x_i + 1, len(vehicles)):
                x, y = vehicles[x_i], vehicles[y_i]
                rx_p = _single_road(prev, n, x)
                ry_p = _single_road(prev, n, y)
                rx_n = _single_road(next_, n, x)
                ry_n = _single_road(next_, n, y)
                if None in (rx_p, ry_p, rx_n, ry_n):
                    continue
                if not (
                    _engaged(prev, n, x, rx_p, z)
                    and _engaged(prev, n, y, ry_p, z)
                    and _engaged(next_, n, x, rx_n, z)
                    and _engaged(next_, n, y, ry_n, z)
                ):
                    continue
                ox_p, ox_n = z.orientation.get(rx_p), z.orientation.get(rx_n)
                oy_p = z.orientation.get(ry_p)
                if ox_p is None or oy_p is None or ox_n is None:
                    continue
                if ox_p == oy_p:
                    continue  # same direction: PR4 already governs via the copy rule
                u, v = prev.orel.get((x, y)), next_.orel.get((x, y))
                if u is None or v is None:
                    continue
                fu, fv = _ref_frame(u, ox_p), _ref_frame(v, ox_n)
                if fv not in PREL_NEXT[fu]:
                    add(RuleId.PR14_CONT, x, y)
    return out


def check_scenario(sc: Scenario) -> list[Violation]:
    """Scene checks at every step plus transition checks between steps."""
    out: list[Violation] = []
    n = sc.network
    for k, scene in enumerate(sc.scenes, start=1):
        missing = sc.vehicles - set(scene.occ)
        extra = set(scene.occ) - sc.vehicles
        for c in sorted(missing | extra):
            out.append(Violation(RuleId.WF, k, ("universe", c)))
        out.extend(check_scene(scene, n, step=k))
    for k in range(len(sc.scenes) - 1):
        out.extend(check_transition(sc.scenes[k], sc.scenes[k + 1], n, step=k + 1))
    return out
