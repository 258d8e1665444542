"""From metric maps to the qualitative network, and from trajectories to scenarios.

Two compilers live here:

* :func:`abstract_network` turns a parsed OpenDRIVE :class:`MapModel` into
  the abstract road network: lanes with their left-to-right order, connection
  points with successor lanes, intersection points of unconnected crossing
  lanes, and opposite-direction overlap windows.
* :func:`abstract_trace` turns timed vehicle samples on such a map into a
  qualitative :class:`Scenario` by Frenet projection and range comparison,
  collapsing stutter steps.

Both are deterministic: identical inputs and tolerances give byte-identical
fact output.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from trafficlogic import facts
from trafficlogic.config import Config
from trafficlogic.domain import (
    LonRel,
    RoadNetwork,
    Scenario,
    Scene,
    SRange,
    invert,
    lon_rel_of_ranges,
    validate_network,
)
from trafficlogic.geometry import (
    Polyline,
    angle_difference,
    frenet_project,
    polyline_intersections,
    project_points,
)
from trafficlogic.opendrive import (
    MapModel,
    RoadSpec,
    UnsupportedFeatureError,
    sample_centerline,
)

__all__ = [
    "AbstractionError",
    "TraceError",
    "AbstractLane",
    "NetworkAbstraction",
    "abstract_network",
    "connection_structures",
    "TraceSample",
    "read_trace_csv",
    "abstract_trace",
]


class AbstractionError(Exception):
    """Geometry that cannot be classified (or validated) under the tolerances."""


class TraceError(AbstractionError):
    """A trajectory sample that cannot be abstracted (off-road, bad grid)."""


@dataclass
class AbstractLane:
    """A drivable lane in travel-direction coordinates."""

    id: str
    road: str
    source_road: str
    source_lane: int
    line: Polyline  # vertices ordered along travel
    widths: np.ndarray  # lane width at each vertex

    def width_at(self, s: float) -> float:
        return float(np.interp(s, self.line.arclength, self.widths))

    @property
    def length(self) -> float:
        return self.line.length


def _natural_key(road_id: str):
    return (0, int(road_id), "") if road_id.isdigit() else (1, 0, road_id)


def _direction_groups(model: MapModel) -> list[tuple[RoadSpec, str, list]]:
    """Per xodr road: the driving lanes of each side, left-to-right in travel order.

    Right-side lanes travel with the reference line and are ordered
    -1, -2, ...; left-side lanes travel against it and are ordered 1, 2, ...
    (innermost first is leftmost in the respective travel frame).
    """
    groups = []
    for rid in sorted(model.roads, key=_natural_key):
        road = model.roads[rid]
        if len(road.sections) != 1:
            raise UnsupportedFeatureError(
                f"road {road.id}: multiple lane sections are outside the supported subset",
                road.source_line,
            )
        sec = road.sections[0]
        right = [l for l in sec.right if l.type == "driving"]
        left = [l for l in sec.left if l.type == "driving"]
        if right:
            groups.append((road, "right", right))
        if left:
            groups.append((road, "left", left))
    return groups


def _travel_edges(model: MapModel) -> set[tuple[tuple[str, int], tuple[str, int]]]:
    """Directed lane-to-lane continuations, from junctions and road links."""
    edges: set[tuple[tuple[str, int], tuple[str, int]]] = set()

    def starts_at(lane, face: str) -> bool:
        return (lane.side == "right") == (face == "start")

    def ends_at(lane, face: str) -> bool:
        return (lane.side == "right") == (face == "end")

    for junc in model.junctions.values():
        for conn in junc.connections:
            inc = model.road(conn.incoming_road)
            con = model.road(conn.connecting_road)
            for frm, to in conn.lane_links:
                src = inc.sections[0].lane(frm)
                dst = con.sections[0].lane(to)
                if not starts_at(dst, conn.contact_point):
                    raise AbstractionError(
                        f"junction {junc.id} connection {conn.id}: lane {to} of road "
                        f"{con.id} does not begin at contact point {conn.contact_point!r}"
                    )
                if src.type == "driving" and dst.type == "driving":
                    edges.add(((inc.id, src.id), (con.id, dst.id)))

    for road in model.roads.values():
        for face, link in (("start", road.predecessor), ("end", road.successor)):
            if link is None or link.element_type != "road":
                continue
            other = model.road(link.element_id)
            cp = link.contact_point or "start"
            for lane in road.sections[0].all_lanes():
                if lane.type != "driving":
                    continue
                partner_id = lane.successor if face == "end" else lane.predecessor
                if partner_id is None:
                    continue
                try:
                    partner = other.sections[0].lane(partner_id)
                except KeyError:
                    raise AbstractionError(
                        f"road {road.id} lane {lane.id}: dangling lane link to "
                        f"lane {partner_id} of road {other.id}"
                    ) from None
                if partner.type != "driving":
                    continue
                if ends_at(lane, face) and starts_at(partner, cp):
                    edges.add(((road.id, lane.id), (other.id, partner.id)))
                elif starts_at(lane, face) and ends_at(partner, cp):
                    edges.add(((other.id, partner.id), (road.id, lane.id)))
    return edges


class NetworkAbstraction:
    """The full result of compiling a map: network, geometry, provenance.

    ``network`` is the qualitative nonuple; ``lanes`` retains the metric
    centerlines used to build it (and to abstract traces against it);
    ``point_coords``/``point_s`` anchor every abstract point in map space.
    """

    def __init__(self, model: MapModel, params: Config) -> None:
        self.model = model
        self.params = params
        self.lanes: dict[str, AbstractLane] = {}
        self.point_coords: dict[str, tuple[float, float]] = {}
        self.point_s: dict[str, dict[str, float]] = {}
        self.metadata: dict[str, str] = dict(params.metadata())
        self.network: RoadNetwork = None  # type: ignore[assignment]
        self._build()

    # -- construction -------------------------------------------------------

    def _build(self) -> None:
        model, params = self.model, self.params
        fact_lines: list[str] = []
        by_source: dict[tuple[str, int], str] = {}

        road_seq = 0
        for road, side, specs in _direction_groups(model):
            road_seq += 1
            rid = f"r{road_seq}"
            self.metadata[f"road.{rid}"] = f"{road.id}:{side}"
            ids = []
            for spec in specs:
                lid = f"l{len(self.lanes) + 1}"
                line = sample_centerline(model, (road.id, spec.id), params.sampling_step)
                svals = np.linspace(0.0, road.length, len(line))
                sec_s = road.sections[0].s
                widths = np.array([spec.width_at(float(s) - sec_s) for s in svals])
                if side == "left":
                    line = line.reversed()
                    widths = widths[::-1].copy()
                self.lanes[lid] = AbstractLane(lid, rid, road.id, spec.id, line, widths)
                by_source[(road.id, spec.id)] = lid
                self.metadata[f"lane.{lid}"] = f"{road.id}:{spec.id}"
                ids.append(lid)
                fact_lines.append(f"lane({lid}, {rid}).")
            for a, b in zip(ids, ids[1:]):
                fact_lines.append(f"left({a}, {b}).")

        self._add_connections(fact_lines, by_source)
        crossings = self._detect_crossings()
        windows = self._detect_overlaps(crossings)
        for pid, (a, b, s_a, s_b, xy) in crossings.items():
            fact_lines.append(f"class({pid}, x).")
            fact_lines.append(f"pon({pid}, {a}).")
            fact_lines.append(f"pon({pid}, {b}).")
            self.point_coords[pid] = xy
            self.point_s[pid] = {a: s_a, b: s_b}
        for pos, poe, a, b, wa, wb in windows:
            for pid, kind in ((pos, "os"), (poe, "oe")):
                fact_lines.append(f"class({pid}, {kind}).")
                fact_lines.append(f"pon({pid}, {a}).")
                fact_lines.append(f"pon({pid}, {b}).")
            fact_lines.append(f"overlap({pos}, {poe}).")
            self.point_coords[pos] = self.lanes[a].line.point_at(wa[0])
            self.point_coords[poe] = self.lanes[a].line.point_at(wa[1])
            self.point_s[pos] = {a: wa[0], b: wb[1]}
            self.point_s[poe] = {a: wa[1], b: wb[0]}

        # total travel order of the points carried by each lane
        for lid in self.lanes:
            carried = sorted(
                ((s_map[lid], pid) for pid, s_map in self.point_s.items() if lid in s_map),
            )
            for (_, p1), (_, p2) in zip(carried, carried[1:]):
                fact_lines.append(f"succp({lid}, {p1}, {p2}).")

        net, _ = facts.parse_network("\n".join(fact_lines))
        defects = validate_network(net)
        if defects:
            raise AbstractionError("abstracted network is invalid: " + "; ".join(defects))
        self.network = net

    def _add_connections(self, fact_lines: list[str], by_source: dict[tuple[str, int], str]) -> None:
        edges = _travel_edges(self.model)
        grouped: dict[str, list[str]] = {}
        for src, dst in edges:
            a = by_source.get(src)
            b = by_source.get(dst)
            if a is None or b is None:
                continue
            grouped.setdefault(a, []).append(b)
        seq = 0
        for lid in self.lanes:  # creation order -> deterministic numbering
            targets = grouped.get(lid)
            if not targets:
                continue
            seq += 1
            pid = f"pc{seq}"
            lane = self.lanes[lid]
            fact_lines.append(f"class({pid}, c).")
            fact_lines.append(f"pon({pid}, {lid}).")
            self.point_coords[pid] = tuple(map(float, lane.line.points[-1]))
            self.point_s[pid] = {lid: lane.length}
            for tgt in sorted(targets, key=lambda l: self._lane_seq(l)):
                fact_lines.append(f"pon({pid}, {tgt}).")
                fact_lines.append(f"succl({pid}, {tgt}).")
                self.point_s[pid][tgt] = 0.0

    def _lane_seq(self, lid: str) -> int:
        return int(lid[1:])

    def _connected(self) -> set[frozenset[str]]:
        pairs: set[frozenset[str]] = set()
        for src, dst in _travel_edges(self.model):
            a = None
            b = None
            for lane in self.lanes.values():
                if (lane.source_road, lane.source_lane) == src:
                    a = lane.id
                if (lane.source_road, lane.source_lane) == dst:
                    b = lane.id
            if a and b:
                pairs.add(frozenset((a, b)))
        return pairs

    def _lane_pairs(self):
        """Unordered lane pairs from different xodr roads, creation order."""
        ids = list(self.lanes)
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                if self.lanes[a].source_road != self.lanes[b].source_road:
                    yield a, b

    def _detect_crossings(self) -> dict[str, tuple[str, str, float, float, tuple[float, float]]]:
        """Transversal centerline crossings of unconnected lane pairs."""
        margin = 2.0 * self.params.sampling_step
        connected = self._connected()
        found: list[tuple[str, str, float, float, tuple[float, float]]] = []
        for a, b in self._lane_pairs():
            if frozenset((a, b)) in connected:
                continue
            la, lb = self.lanes[a], self.lanes[b]
            hits = polyline_intersections(la.line, lb.line)
            kept: list[tuple[float, float, tuple[float, float]]] = []
            for s_a, s_b, xy in hits:
                if min(s_a, la.length - s_a) <= margin or min(s_b, lb.length - s_b) <= margin:
                    continue  # endpoint contact is a merge/diverge, not a crossing
                if kept and abs(s_a - kept[-1][0]) <= margin:
                    continue  # same crossing reported by adjacent segments
                kept.append((s_a, s_b, xy))
            for s_a, s_b, xy in kept:
                found.append((a, b, s_a, s_b, xy))
        return {f"px{i + 1}": rec for i, rec in enumerate(found)}

    def _detect_overlaps(self, crossings) -> list[tuple[str, str, str, str, tuple, tuple]]:
        """Opposite-direction shared-pavement windows; same-direction is an error."""
        p = self.params
        tol = math.radians(p.overlap_heading_tolerance_deg)
        out = []
        seq = 0
        for a, b in self._lane_pairs():
            la, lb = self.lanes[a], self.lanes[b]
            s_b, d_b, e_b = project_points(lb.line, la.line.points)
            dist = np.abs(d_b)
            ha = np.array([la.line.heading_at(float(s)) for s in la.line.arclength])
            hb = np.array([lb.line.heading_at(float(s)) for s in s_b])
            diff = np.array([angle_difference(float(x), float(y)) for x, y in zip(ha, hb)])
            wmin = np.minimum(la.widths, np.interp(s_b, lb.line.arclength, lb.widths))
            corridor = dist <= p.overlap_corridor_factor * wmin
            # a projection clamped to an end of b says nothing about lateral
            # closeness: without this, corridors bleed past the shared
            # stretch and continuations read as fake same-direction overlaps
            clamped = (s_b <= 1e-9) | (s_b >= lb.length - 1e-9)
            corridor &= ~clamped | (e_b <= p.intersection_tolerance)
            anti = corridor & (diff >= math.pi - tol)
            same = corridor & (diff <= tol)
            s_a = la.line.arclength
            for i0, i1 in self._runs(same):
                if s_a[i1] - s_a[i0] < p.min_overlap_length:
                    continue
                # diverging/merging siblings hug each other near their shared
                # fork point; only a free-standing coincident stretch is a
                # genuine same-direction overlap
                if self._anchored_at_contact(la, lb, i0, i1):
                    continue
                raise AbstractionError(
                    f"lanes {a} and {b} overlap in the same direction; merging them "
                    "into a single lane is not supported - edit the map"
                )
            for i0, i1 in self._runs(anti):
                if s_a[i1] - s_a[i0] < p.min_overlap_length:
                    continue
                for pid, (ca, cb, cs_a, _cs_b, _xy) in crossings.items():
                    if {ca, cb} == {a, b} and s_a[i0] - 1.0 <= cs_a <= s_a[i1] + 1.0:
                        raise AbstractionError(
                            f"tolerance-ambiguous geometry: lanes {a} and {b} both "
                            f"overlap and cross near s={cs_a:.2f} on {a}"
                        )
                seq += 1
                wa = (float(s_a[i0]), float(s_a[i1]))
                wb = (float(s_b[i1]), float(s_b[i0]))  # anti-parallel: order flips
                out.append((f"pos{seq}", f"poe{seq}", a, b, wa, wb))
        return out

    @staticmethod
    def _anchored_at_contact(la: AbstractLane, lb: AbstractLane, i0: int, i1: int) -> bool:
        """Does the vertex run [i0, i1] on ``la`` start or end where the lanes meet?"""
        ends_b = (lb.line.points[0], lb.line.points[-1])

        def touches(pt) -> bool:
            return any(float(np.hypot(*(pt - e))) <= 0.5 for e in ends_b)

        last = len(la.line.points) - 1
        if i0 <= 1 and touches(la.line.points[0]):
            return True
        if i1 >= last - 1 and touches(la.line.points[last]):
            return True
        return False

    @staticmethod
    def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
        runs = []
        start = None
        for i, v in enumerate(mask):
            if v and start is None:
                start = i
            elif not v and start is not None:
                runs.append((start, i - 1))
                start = None
        if start is not None:
            runs.append((start, len(mask) - 1))
        return runs

    # -- output --------------------------------------------------------------

    def facts_text(self) -> str:
        return facts.render_network(self.network, (), self.metadata)

    def coords_text(self) -> str:
        lines = [
            f"{pid} {x:.6f} {y:.6f} 0.000000"
            for pid, (x, y) in sorted(self.point_coords.items())
        ]
        return "\n".join(lines) + ("\n" if lines else "")


def abstract_network(model: MapModel, params: Config | None = None) -> RoadNetwork:
    """Compile a map into the abstract road network (validated)."""
    return NetworkAbstraction(model, params or Config()).network


def connection_structures(n: RoadNetwork) -> tuple[str, ...]:
    """Roads that are both entered and exited through connection points.

    A road is *entered* when some connection point feeds one of its lanes
    from another road, and *exits* when one of its lanes ends in a
    connection point leading to another road.  Junction connecting roads
    are exactly the roads with both properties.
    """
    entered: set[str] = set()
    exits: set[str] = set()
    for lane in n.lanes:
        road = n.road_of_lane(lane)
        for p in n.connections_on(lane):
            if any(n.precedes(lane, p, q) for q in n.points_of_lane(lane)):
                continue  # p is not the terminal point of this lane
            for tgt in n.successor_lanes(p):
                tgt_road = n.road_of_lane(tgt)
                if tgt_road != road:
                    exits.add(road)
                    entered.add(tgt_road)
    return tuple(sorted(entered & exits))


# --------------------------------------------------------------------------
# trace abstraction


@dataclass(frozen=True)
class TraceSample:
    """One timed pose sample of one vehicle (center point, heading, length)."""

    row: int  # 1-based source line for error reporting
    t: float
    vehicle: str
    x: float
    y: float
    heading: float
    length: float


_TRACE_FIELDS = ("t", "vehicle", "x", "y", "heading", "length")


def read_trace_csv(text: str) -> list[TraceSample]:
    """Parse the trace CSV format ``t,vehicle,x,y,heading,length``."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or sorted(reader.fieldnames) != sorted(_TRACE_FIELDS):
        raise TraceError(
            f"trace header must be exactly {','.join(_TRACE_FIELDS)}; "
            f"got {reader.fieldnames}"
        )
    samples = []
    for i, rec in enumerate(reader, start=2):
        try:
            samples.append(
                TraceSample(
                    row=i,
                    t=float(rec["t"]),
                    vehicle=rec["vehicle"].strip(),
                    x=float(rec["x"]),
                    y=float(rec["y"]),
                    heading=float(rec["heading"]),
                    length=float(rec["length"]),
                )
            )
        except (TypeError, ValueError):
            raise TraceError(f"trace row {i}: malformed numeric field") from None
    if not samples:
        raise TraceError("trace file contains no samples")
    return samples


@dataclass
class _VehicleTrack:
    samples: list[TraceSample]
    centers: np.ndarray
    fronts: np.ndarray
    rears: np.ndarray


def _tracks(samples: list[TraceSample]) -> tuple[list[float], dict[str, _VehicleTrack]]:
    times = sorted({s.t for s in samples})
    vehicles = sorted({s.vehicle for s in samples})
    index: dict[tuple[float, str], TraceSample] = {}
    for s in samples:
        key = (s.t, s.vehicle)
        if key in index:
            raise TraceError(f"trace row {s.row}: duplicate sample for {s.vehicle} at t={s.t}")
        index[key] = s
    tracks = {}
    for v in vehicles:
        ordered = []
        for t in times:
            s = index.get((t, v))
            if s is None:
                raise TraceError(f"vehicle {v} has no sample at t={t}")
            ordered.append(s)
        c = np.array([(s.x, s.y) for s in ordered])
        h = np.array([s.heading for s in ordered])
        half = np.array([s.length for s in ordered]) / 2.0
        nose = np.stack([np.cos(h), np.sin(h)], axis=1) * half[:, None]
        tracks[v] = _VehicleTrack(ordered, c, c + nose, c - nose)
    return times, tracks


def _lane_fit(abst: NetworkAbstraction, track: _VehicleTrack, cfg: Config):
    """Per lane: center projections, occupancy mask, and range projections."""
    fits = {}
    for lid, lane in abst.lanes.items():
        s_c, d_c, e_c = project_points(lane.line, track.centers)
        s_f, _, _ = project_points(lane.line, track.fronts)
        s_r, _, _ = project_points(lane.line, track.rears)
        widths = np.interp(s_c, lane.line.arclength, lane.widths)
        overrun = np.sqrt(np.maximum(e_c * e_c - d_c * d_c, 0.0))
        ok = (np.abs(d_c) <= widths / 2.0 + cfg.occupancy_halfwidth) & (overrun <= 0.5)
        for i, s in enumerate(track.samples):
            if ok[i] and angle_difference(s.heading, lane.line.heading_at(float(s_c[i]))) >= math.pi / 2:
                ok[i] = False
        fits[lid] = (s_c, d_c, s_f, s_r, ok)
    return fits


def abstract_trace(
    samples: list[TraceSample],
    n: RoadNetwork,
    model: MapModel,
    params: Config | None = None,
) -> Scenario:
    """Abstract timed concrete samples into a stutter-free Scenario.

    ``n`` must be the network compiled from ``model`` under the same
    parameters; the correspondence is re-derived and checked, because the
    projection geometry is needed to place every sample.
    """
    cfg = params or Config()
    abst = NetworkAbstraction(model, cfg)
    if facts.render_network(abst.network) != facts.render_network(n):
        raise AbstractionError("network facts do not match the map under these tolerances")
    times, tracks = _tracks(samples)
    fits = {v: _lane_fit(abst, tr, cfg) for v, tr in tracks.items()}
    vehicles = sorted(tracks)

    scenes: list[Scene] = []
    for ti, _t in enumerate(times):
        placement: dict[str, tuple[str, frozenset[str], SRange]] = {}
        for v in vehicles:
            track = tracks[v]
            cands = [
                (abs(float(fit[1][ti])), lid)
                for lid, fit in fits[v].items()
                if fit[4][ti]
            ]
            if not cands:
                raise TraceError(
                    f"trace row {track.samples[ti].row}: vehicle {v} is off-road at "
                    f"t={track.samples[ti].t}"
                )
            _, best = min(cands)
            road = abst.lanes[best].road
            occ = frozenset(lid for _, lid in cands if abst.lanes[lid].road == road)
            s_f = float(fits[v][best][2][ti])
            s_r = float(fits[v][best][3][ti])
            placement[v] = (best, occ, SRange(min(s_r, s_f), max(s_r, s_f)))
        scenes.append(_qualify(abst, n, placement, tracks, ti))
    collapsed = [scenes[0]]
    for sc in scenes[1:]:
        if sc != collapsed[-1]:
            collapsed.append(sc)
    return Scenario(frozenset(vehicles), n, tuple(collapsed))


def _point_s_on(abst: NetworkAbstraction, pid: str, lid: str) -> float:
    cached = abst.point_s[pid]
    if lid in cached:
        return cached[lid]
    pose = frenet_project(abst.lanes[lid].line, abst.point_coords[pid])
    return pose.s


def _qualify(
    abst: NetworkAbstraction,
    n: RoadNetwork,
    placement: dict[str, tuple[str, frozenset[str], SRange]],
    tracks: dict[str, _VehicleTrack],
    ti: int,
) -> Scene:
    """Build one qualitative scene from metric placements."""
    vehicles = sorted(placement)
    occ = {v: placement[v][1] for v in vehicles}
    vrel: dict[tuple[str, str], LonRel] = {}
    prel: dict[tuple[str, str], LonRel] = {}
    orel: dict[tuple[str, str], LonRel] = {}

    road_of = {v: abst.lanes[placement[v][0]].road for v in vehicles}
    for i, a in enumerate(vehicles):
        for b in vehicles[i + 1 :]:
            if road_of[a] == road_of[b]:
                vrel[(a, b)] = lon_rel_of_ranges(placement[a][2], placement[b][2])

    for v in vehicles:
        ref, _, rng = placement[v]
        for pid in sorted(n.points_of_road(road_of[v])):
            s_p = _point_s_on(abst, pid, ref)
            prel[(v, pid)] = lon_rel_of_ranges(rng, SRange(s_p, s_p))

    def engaged(v: str, zone) -> bool:
        window = zone.entry_exit_for(road_of[v])
        if window is None:
            return False
        first, second = window
        return (
            prel.get((v, first)) is LonRel.AHEAD
            and prel.get((v, second)) is LonRel.BEHIND
        )

    for i, a in enumerate(vehicles):
        for b in vehicles[i + 1 :]:
            zones = [
                z
                for z in n.zones
                if road_of[a] in z.orientation and road_of[b] in z.orientation
            ]
            if not any(engaged(a, z) and engaged(b, z) for z in zones):
                continue
            if road_of[a] == road_of[b]:
                val = vrel.get((a, b), LonRel.NONE)
                if val is not LonRel.NONE:
                    orel[(a, b)] = val
                    orel[(b, a)] = invert(val)
            else:
                ref = placement[a][0]
                lane = abst.lanes[ref]
                pts = np.array(
                    [tracks[b].fronts[ti], tracks[b].rears[ti]], dtype=float
                )
                s_b, _, _ = project_points(lane.line, pts)
                rng_b = SRange(float(np.min(s_b)), float(np.max(s_b)))
                val = lon_rel_of_ranges(placement[a][2], rng_b)
                if val is not LonRel.NONE:
                    orel[(a, b)] = val
                    orel[(b, a)] = val  # opposite directions: symmetric as stored
    return Scene.build(occ, vrel, prel, orel)
