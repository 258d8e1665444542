"""A deliberately small OpenDRIVE (.xodr) reader.

Supported subset: ``header``, ``road`` with ``planView`` geometry of kind
``line`` or ``arc``, ``lanes``/``laneSection`` with cubic width records,
road-level ``link`` elements, and ``junction``/``connection`` tables.
Anything geometric outside that subset (spiral, poly3, paramPoly3) raises
:class:`UnsupportedFeatureError`; elevation and superelevation data is
ignored with a logged warning because the abstraction is strictly planar.

The parser mirrors the file into a :class:`MapModel`; all interpretation
(centerline sampling, network abstraction) lives elsewhere.
"""

from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from xml.parsers import expat

import numpy as np

from trafficlogic.geometry import Polyline

__all__ = [
    "MapError",
    "MapParseError",
    "UnsupportedFeatureError",
    "RefLineSegment",
    "WidthRecord",
    "LaneSpec",
    "LaneSectionSpec",
    "RoadLink",
    "RoadSpec",
    "JunctionConnection",
    "JunctionSpec",
    "MapModel",
    "parse_opendrive",
    "sample_centerline",
]

log = logging.getLogger(__name__)

_LINE_KEY = "{trafficlogic}line"

UNSUPPORTED_GEOMETRY = ("spiral", "poly3", "paramPoly3")


class MapError(Exception):
    """Base class for map reading problems; carries a source line number."""

    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class MapParseError(MapError):
    """Malformed XML or a violated structural expectation."""


class UnsupportedFeatureError(MapError):
    """The file uses a documented-out-of-subset OpenDRIVE feature."""


@dataclass(frozen=True)
class RefLineSegment:
    """One piece of a road reference line, evaluated in closed form."""

    kind: str  # "line" | "arc"
    origin: tuple[float, float]
    heading: float
    length: float
    curvature: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("line", "arc"):
            raise ValueError(f"unknown reference-line kind {self.kind!r}")
        if not self.length > 0.0:
            raise ValueError("reference-line segment length must be positive")
        if self.kind == "arc" and self.curvature == 0.0:
            raise ValueError("arc segment needs nonzero curvature")

    def point_at(self, s: float) -> tuple[float, float]:
        """Point at local arclength ``s`` from the segment origin."""
        x0, y0 = self.origin
        h = self.heading
        if self.kind == "line":
            return (x0 + s * math.cos(h), y0 + s * math.sin(h))
        k = self.curvature
        return (
            x0 + (math.sin(h + k * s) - math.sin(h)) / k,
            y0 - (math.cos(h + k * s) - math.cos(h)) / k,
        )

    def heading_at(self, s: float) -> float:
        if self.kind == "line":
            return self.heading
        return self.heading + self.curvature * s


@dataclass(frozen=True)
class WidthRecord:
    """Cubic lane-width polynomial valid from ``s_offset`` onward."""

    s_offset: float
    a: float
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0

    def eval(self, ds: float) -> float:
        return self.a + self.b * ds + self.c * ds * ds + self.d * ds ** 3


@dataclass(frozen=True)
class LaneSpec:
    """One lane of a lane section.

    ``travel`` is derived from the side under right-hand traffic: right
    lanes run with the reference line, left lanes against it.
    """

    id: int
    side: str  # "left" | "right"
    type: str
    widths: tuple[WidthRecord, ...]
    predecessor: int | None = None
    successor: int | None = None

    @property
    def travel(self) -> str:
        return "forward" if self.side == "right" else "backward"

    def width_at(self, section_s: float) -> float:
        rec = None
        for w in self.widths:
            if w.s_offset <= section_s + 1e-9:
                rec = w
        if rec is None:
            return 0.0
        return rec.eval(section_s - rec.s_offset)


@dataclass(frozen=True)
class LaneSectionSpec:
    s: float
    left: tuple[LaneSpec, ...]  # ordered by id ascending (1, 2, ...)
    right: tuple[LaneSpec, ...]  # ordered by id descending (-1, -2, ...)

    def all_lanes(self) -> tuple[LaneSpec, ...]:
        return self.right + self.left

    def lane(self, lane_id: int) -> LaneSpec:
        for l in self.all_lanes():
            if l.id == lane_id:
                return l
        raise KeyError(lane_id)


@dataclass(frozen=True)
class RoadLink:
    element_type: str  # "road" | "junction"
    element_id: str
    contact_point: str | None  # "start" | "end" | None for junctions


@dataclass(frozen=True)
class RoadSpec:
    id: str
    name: str
    length: float
    junction: str  # "-1" for ordinary roads, else owning junction id
    ref_line: tuple[RefLineSegment, ...]
    sections: tuple[LaneSectionSpec, ...]
    predecessor: RoadLink | None = None
    successor: RoadLink | None = None
    source_line: int | None = None

    def point_at(self, s: float) -> tuple[float, float]:
        seg, ds = self._locate(s)
        return seg.point_at(ds)

    def heading_at(self, s: float) -> float:
        seg, ds = self._locate(s)
        return seg.heading_at(ds)

    def _locate(self, s: float) -> tuple[RefLineSegment, float]:
        s = min(max(s, 0.0), self.length)
        acc = 0.0
        for seg in self.ref_line:
            if s <= acc + seg.length + 1e-9:
                return seg, min(max(s - acc, 0.0), seg.length)
            acc += seg.length
        return self.ref_line[-1], self.ref_line[-1].length


@dataclass(frozen=True)
class JunctionConnection:
    id: str
    incoming_road: str
    connecting_road: str
    contact_point: str
    lane_links: tuple[tuple[int, int], ...]  # (from incoming, to connecting)


@dataclass(frozen=True)
class JunctionSpec:
    id: str
    name: str
    connections: tuple[JunctionConnection, ...]


@dataclass
class MapModel:
    """Faithful in-memory mirror of the supported file subset."""

    roads: dict[str, RoadSpec] = field(default_factory=dict)
    junctions: dict[str, JunctionSpec] = field(default_factory=dict)

    def road(self, road_id: str) -> RoadSpec:
        try:
            return self.roads[road_id]
        except KeyError:
            raise MapParseError(f"unknown road {road_id!r}") from None


# --------------------------------------------------------------------------
# parsing


def _parse_with_lines(data: bytes) -> ET.Element:
    """Parse XML via expat, stashing the source line on every element."""
    builder = ET.TreeBuilder()
    parser = expat.ParserCreate()

    def start(tag: str, attrs: dict) -> None:
        elem = builder.start(tag, attrs)
        elem.set(_LINE_KEY, str(parser.CurrentLineNumber))

    parser.StartElementHandler = start
    parser.EndElementHandler = builder.end
    try:
        parser.Parse(data, True)
    except expat.ExpatError as exc:
        raise MapParseError(f"malformed XML: {exc}", exc.lineno) from None
    return builder.close()


def _line_of(elem: ET.Element) -> int | None:
    v = elem.get(_LINE_KEY)
    return int(v) if v is not None else None


def _req(elem: ET.Element, attr: str) -> str:
    v = elem.get(attr)
    if v is None:
        raise MapParseError(f"<{elem.tag}> missing attribute {attr!r}", _line_of(elem))
    return v


def _fattr(elem: ET.Element, attr: str, default: float | None = None) -> float:
    v = elem.get(attr)
    if v is None:
        if default is None:
            raise MapParseError(f"<{elem.tag}> missing attribute {attr!r}", _line_of(elem))
        return default
    try:
        return float(v)
    except ValueError:
        raise MapParseError(f"<{elem.tag}> attribute {attr}={v!r} is not a number", _line_of(elem)) from None


def _parse_geometry(geo: ET.Element) -> RefLineSegment:
    shape = None
    for child in geo:
        tag = child.tag
        if tag in ("line", "arc"):
            shape = child
        elif tag in UNSUPPORTED_GEOMETRY:
            raise UnsupportedFeatureError(f"unsupported geometry kind {tag!r}", _line_of(child))
    if shape is None:
        raise MapParseError("<geometry> without a recognized shape child", _line_of(geo))
    kind = shape.tag
    return RefLineSegment(
        kind=kind,
        origin=(_fattr(geo, "x"), _fattr(geo, "y")),
        heading=_fattr(geo, "hdg"),
        length=_fattr(geo, "length"),
        curvature=_fattr(shape, "curvature") if kind == "arc" else 0.0,
    )


def _parse_lane(lane: ET.Element, side: str) -> LaneSpec:
    try:
        lane_id = int(_req(lane, "id"))
    except ValueError:
        raise MapParseError(f"lane id {lane.get('id')!r} is not an integer", _line_of(lane)) from None
    widths = []
    for w in lane.findall("width"):
        widths.append(
            WidthRecord(
                s_offset=_fattr(w, "sOffset", 0.0),
                a=_fattr(w, "a"),
                b=_fattr(w, "b", 0.0),
                c=_fattr(w, "c", 0.0),
                d=_fattr(w, "d", 0.0),
            )
        )
    widths.sort(key=lambda r: r.s_offset)
    pred = succ = None
    link = lane.find("link")
    if link is not None:
        p = link.find("predecessor")
        s = link.find("successor")
        pred = int(_req(p, "id")) if p is not None else None
        succ = int(_req(s, "id")) if s is not None else None
    return LaneSpec(
        id=lane_id,
        side=side,
        type=lane.get("type", "driving"),
        widths=tuple(widths),
        predecessor=pred,
        successor=succ,
    )


def _parse_section(sec: ET.Element) -> LaneSectionSpec:
    left: list[LaneSpec] = []
    right: list[LaneSpec] = []
    for side, bucket in (("left", left), ("right", right)):
        group = sec.find(side)
        if group is None:
            continue
        for lane in group.findall("lane"):
            spec = _parse_lane(lane, side)
            if spec.id == 0:
                raise MapParseError("center lane listed under a side group", _line_of(lane))
            bucket.append(spec)
    left.sort(key=lambda l: l.id)
    right.sort(key=lambda l: -l.id)
    ids = [l.id for l in left + right]
    if len(ids) != len(set(ids)):
        raise MapParseError("duplicate lane id in lane section", _line_of(sec))
    return LaneSectionSpec(s=_fattr(sec, "s", 0.0), left=tuple(left), right=tuple(right))


def _parse_road_link(elem: ET.Element | None) -> RoadLink | None:
    if elem is None:
        return None
    return RoadLink(
        element_type=_req(elem, "elementType"),
        element_id=_req(elem, "elementId"),
        contact_point=elem.get("contactPoint"),
    )


def _parse_road(road: ET.Element) -> RoadSpec:
    plan = road.find("planView")
    if plan is None:
        raise MapParseError("road without <planView>", _line_of(road))
    segs = tuple(_parse_geometry(g) for g in plan.findall("geometry"))
    if not segs:
        raise MapParseError("planView without <geometry>", _line_of(plan))
    for tag in ("elevationProfile", "lateralProfile"):
        if road.find(tag) is not None:
            log.warning("ignoring <%s> of road %s: abstraction is planar", tag, road.get("id"))
    lanes = road.find("lanes")
    if lanes is None:
        raise MapParseError("road without <lanes>", _line_of(road))
    sections = tuple(_parse_section(sec) for sec in lanes.findall("laneSection"))
    if not sections:
        raise MapParseError("road without <laneSection>", _line_of(lanes))
    link = road.find("link")
    pred = succ = None
    if link is not None:
        pred = _parse_road_link(link.find("predecessor"))
        succ = _parse_road_link(link.find("successor"))
    return RoadSpec(
        id=_req(road, "id"),
        name=road.get("name", ""),
        length=_fattr(road, "length"),
        junction=road.get("junction", "-1"),
        ref_line=segs,
        sections=sections,
        predecessor=pred,
        successor=succ,
        source_line=_line_of(road),
    )


def _parse_junction(junc: ET.Element) -> JunctionSpec:
    conns = []
    for conn in junc.findall("connection"):
        links = tuple(
            (int(_req(ll, "from")), int(_req(ll, "to"))) for ll in conn.findall("laneLink")
        )
        if not links:
            raise MapParseError("junction connection without <laneLink>", _line_of(conn))
        conns.append(
            JunctionConnection(
                id=_req(conn, "id"),
                incoming_road=_req(conn, "incomingRoad"),
                connecting_road=_req(conn, "connectingRoad"),
                contact_point=conn.get("contactPoint", "start"),
                lane_links=links,
            )
        )
    return JunctionSpec(id=_req(junc, "id"), name=junc.get("name", ""), connections=tuple(conns))


def _validate_model(model: MapModel) -> None:
    for road in model.roads.values():
        for link in (road.predecessor, road.successor):
            if link is None:
                continue
            pool = model.roads if link.element_type == "road" else model.junctions
            if link.element_id not in pool:
                raise MapParseError(
                    f"road {road.id}: dangling {link.element_type} link to {link.element_id!r}",
                    road.source_line,
                )
    for junc in model.junctions.values():
        for conn in junc.connections:
            for rid in (conn.incoming_road, conn.connecting_road):
                if rid not in model.roads:
                    raise MapParseError(f"junction {junc.id}: dangling road reference {rid!r}")
            inc = model.roads[conn.incoming_road]
            con = model.roads[conn.connecting_road]
            for frm, to in conn.lane_links:
                for road, lane_id in ((inc, frm), (con, to)):
                    try:
                        road.sections[0].lane(lane_id)
                    except KeyError:
                        raise MapParseError(
                            f"junction {junc.id}: connection {conn.id} references "
                            f"missing lane {lane_id} of road {road.id}"
                        ) from None


def parse_opendrive(text: str | bytes) -> MapModel:
    """Parse an OpenDRIVE document (string or bytes) into a MapModel."""
    if isinstance(text, str):
        data = text.encode("utf-8")
    else:
        data = text
    root = _parse_with_lines(data)
    if root.tag != "OpenDRIVE":
        raise MapParseError(f"root element is <{root.tag}>, expected <OpenDRIVE>")
    model = MapModel()
    for road in root.findall("road"):
        spec = _parse_road(road)
        if spec.id in model.roads:
            raise MapParseError(f"duplicate road id {spec.id!r}", spec.source_line)
        model.roads[spec.id] = spec
    for junc in root.findall("junction"):
        spec_j = _parse_junction(junc)
        if spec_j.id in model.junctions:
            raise MapParseError(f"duplicate junction id {spec_j.id!r}")
        model.junctions[spec_j.id] = spec_j
    _validate_model(model)
    return model


# --------------------------------------------------------------------------
# centerline sampling


def _lane_offset(section: LaneSectionSpec, lane_id: int, section_s: float) -> float:
    """Signed lateral offset of a lane center from the reference line."""
    if lane_id > 0:
        chain = [l for l in section.left if l.id <= lane_id]
        sign = 1.0
    else:
        chain = [l for l in section.right if l.id >= lane_id]
        sign = -1.0
    acc = 0.0
    for lane in chain:
        w = lane.width_at(section_s)
        if lane.id == lane_id:
            return sign * (acc + 0.5 * w)
        acc += w
    raise KeyError(lane_id)


def sample_centerline(model: MapModel, lane: tuple[str, int], step: float) -> Polyline:
    """Sample a lane center at arclength intervals <= ``step``.

    ``lane`` is ``(road_id, lane_id)``.  The returned polyline follows the
    *reference line* direction (not travel direction) and includes both
    endpoints.  Only single-section roads are supported for sampling.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    road_id, lane_id = lane
    road = model.road(road_id)
    if len(road.sections) != 1:
        raise UnsupportedFeatureError(
            f"road {road.id}: multiple lane sections are outside the supported subset",
            road.source_line,
        )
    section = road.sections[0]
    section.lane(lane_id)  # raise early on unknown lane
    n = max(1, int(math.ceil(road.length / step - 1e-9)))
    svals = np.linspace(0.0, road.length, n + 1)
    pts = []
    for s in svals:
        x, y = road.point_at(float(s))
        h = road.heading_at(float(s))
        off = _lane_offset(section, lane_id, float(s) - section.s)
        # left normal of the reference line is (-sin h, cos h)
        pts.append((x - off * math.sin(h), y + off * math.cos(h)))
    return Polyline(pts)
