"""Textual fact format: the package's canonical serialization.

One atom per line, terminated by ``.``; ``%`` starts a comment; ``#``
starts a directive (``#step``, ``#scenario``, and the request directives
handled in `reasoner`).  Network facts::

    lane(l1, ra).        % lane l1 belongs to road ra
    left(l2, l1).        % l2 is the immediate left neighbour of l1
    class(px, x).        % point kind: x | c | os | oe
    pon(px, l1).         % point affiliation
    succp(l1, p1, p2).   % p2 follows p1 along l1
    succl(pc, l2).       % connection pc continues onto lane l2
    overlap(pos, poe).   % shared-pavement window
    vehicle(c1).         % optional universe declaration

Scene atoms: ``on(c,l)``, ``lonr(c1,c2,rel)``, ``lonpr(c,p,rel)``,
``lonro(c1,c2,rel)`` with ``rel`` one of ahead/cover/behind/none.
Rendering is canonical: entries sorted, no whitespace inside atoms, NONE
entries omitted, pair relations present in both orientations.
"""

from __future__ import annotations

import re
from typing import Iterable, Mapping, Optional, Sequence

from trafficlogic.domain import (
    ID_RE,
    LonRel,
    PointKind,
    Road,
    RoadNetwork,
    Scenario,
    Scene,
    invert,
)

_ATOM_RE = re.compile(r"([a-z][a-z0-9_]*)\s*\(\s*([^()]*?)\s*\)\s*\.\s*\Z")

_REL = {r.value: r for r in LonRel}
_KIND = {k.value: k for k in PointKind}

_NETWORK_ARITY = {
    "lane": 2,
    "left": 2,
    "class": 2,
    "pon": 2,
    "succp": 3,
    "succl": 2,
    "overlap": 2,
    "vehicle": 1,
}
_SCENE_ARITY = {"on": 2, "lonr": 3, "lonpr": 3, "lonro": 3}


class ParseError(ValueError):
    """Input text that does not conform to the fact format."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def strip_comment(raw: str) -> str:
    i = raw.find("%")
    return raw[:i] if i >= 0 else raw


def parse_atom(text: str, lineno: Optional[int] = None) -> tuple[str, tuple[str, ...]]:
    """Parse one ``name(arg,...).`` line into its functor and arguments."""
    m = _ATOM_RE.fullmatch(text.strip())
    if not m:
        raise ParseError(f"not a fact: {text.strip()!r}", lineno)
    name = m.group(1)
    body = m.group(2)
    args = tuple(a.strip() for a in body.split(",")) if body.strip() else ()
    for a in args:
        if not ID_RE.match(a):
            raise ParseError(f"bad identifier {a!r} in {name}", lineno)
    return name, args


def _numbered_atoms(text: str) -> list[tuple[int, str]]:
    out = []
    for i, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw).strip()
        if line:
            out.append((i, line))
    return out


def _check_arity(name: str, args: Sequence[str], arity: int, lineno: int) -> None:
    if len(args) != arity:
        raise ParseError(f"{name} expects {arity} arguments, got {len(args)}", lineno)


class NetworkBuilder:
    """Accumulates network facts and assembles a `RoadNetwork`.

    The left-neighbour facts must order every multi-lane road into a
    single left-to-right chain; anything else is a parse error.
    """

    def __init__(self) -> None:
        self.lane_road: dict[str, str] = {}
        self.left_pairs: set[tuple[str, str]] = set()
        self.kinds: dict[str, PointKind] = {}
        self.affiliation: set[tuple[str, str]] = set()
        self.succ_p: set[tuple[str, str, str]] = set()
        self.succ_c: set[tuple[str, str]] = set()
        self.overlaps: set[tuple[str, str]] = set()
        self.vehicles: set[str] = set()

    def add(self, name: str, args: tuple[str, ...], lineno: int) -> None:
        _check_arity(name, args, _NETWORK_ARITY[name], lineno)
        if name == "lane":
            l, r = args
            if self.lane_road.get(l, r) != r:
                raise ParseError(f"lane {l} declared on two roads", lineno)
            self.lane_road[l] = r
        elif name == "left":
            self.left_pairs.add(args)
        elif name == "class":
            p, k = args
            kind = _KIND.get(k)
            if kind is None:
                raise ParseError(f"unknown point kind {k!r}", lineno)
            if self.kinds.get(p, kind) is not kind:
                raise ParseError(f"point {p} declared with two kinds", lineno)
            self.kinds[p] = kind
        elif name == "pon":
            self.affiliation.add(args)
        elif name == "succp":
            self.succ_p.add(args)
        elif name == "succl":
            self.succ_c.add(args)
        elif name == "overlap":
            self.overlaps.add(args)
        elif name == "vehicle":
            self.vehicles.add(args[0])

    def _order_lanes(self, road_id: str, lanes: set[str]) -> tuple[str, ...]:
        if len(lanes) == 1:
            return (next(iter(lanes)),)
        right_of = {}
        left_of = {}
        for a, b in self.left_pairs:
            if a in lanes and b in lanes:
                if a in right_of or b in left_of:
                    raise ParseError(f"left facts for road {road_id} are not a chain")
                right_of[a] = b
                left_of[b] = a
        heads = [l for l in lanes if l not in left_of]
        if len(heads) != 1:
            raise ParseError(
                f"road {road_id} lanes cannot be ordered left-to-right from left() facts"
            )
        chain = [heads[0]]
        while chain[-1] in right_of:
            chain.append(right_of[chain[-1]])
        if len(chain) != len(lanes):
            raise ParseError(
                f"road {road_id} lanes cannot be ordered left-to-right from left() facts"
            )
        return tuple(chain)

    def build(self) -> RoadNetwork:
        by_road: dict[str, set[str]] = {}
        for l, r in self.lane_road.items():
            by_road.setdefault(r, set()).add(l)
        roads = [Road(rid, self._order_lanes(rid, ls)) for rid, ls in sorted(by_road.items())]
        return RoadNetwork(
            roads,
            points=self.kinds,
            succ_p=self.succ_p,
            succ_c=self.succ_c,
            overlaps=self.overlaps,
            affiliation=self.affiliation,
        )


def parse_network(text: str) -> tuple[RoadNetwork, frozenset[str]]:
    """Parse a pure network fact file; returns (network, declared vehicles)."""
    b = NetworkBuilder()
    for lineno, line in _numbered_atoms(text):
        if line.startswith("#"):
            raise ParseError(f"unexpected directive in network file: {line}", lineno)
        name, args = parse_atom(line, lineno)
        if name not in _NETWORK_ARITY:
            raise ParseError(f"unknown network fact {name!r}", lineno)
        b.add(name, args, lineno)
    return b.build(), frozenset(b.vehicles)


# -- scenes -----------------------------------------------------------------


def scene_from_atoms(
    atoms: Iterable[tuple[str, tuple[str, ...]]],
    vehicles: Iterable[str] = (),
    net: Optional[RoadNetwork] = None,
) -> Scene:
    """Assemble a scene from ``on``/``lonr``/``lonpr``/``lonro`` atoms.

    Vehicles listed in ``vehicles`` receive (possibly empty) occupancy
    entries even without ``on`` atoms.  Missing ``lonr`` mirrors are
    filled by inversion; ``lonro`` mirrors are filled from the overlap
    layout when a network is supplied (same-direction windows mirror by
    inversion, opposite-direction ones are symmetric).
    """
    occ: dict[str, set[str]] = {c: set() for c in vehicles}
    vrel: dict[tuple[str, str], LonRel] = {}
    prel: dict[tuple[str, str], LonRel] = {}
    orel: dict[tuple[str, str], LonRel] = {}
    for name, args in atoms:
        if name == "on":
            c, l = args
            occ.setdefault(c, set()).add(l)
        elif name == "lonr":
            x, y, d = args
            vrel[(x, y)] = _REL[d]
        elif name == "lonpr":
            c, p, d = args
            prel[(c, p)] = _REL[d]
        elif name == "lonro":
            x, y, d = args
            orel[(x, y)] = _REL[d]
        else:
            raise ParseError(f"unknown scene atom {name!r}")
    orel = {k: v for k, v in orel.items() if v is not LonRel.NONE}
    if net is not None:
        for (x, y), v in list(orel.items()):
            if (y, x) in orel:
                continue
            mirror = _orel_mirror(net, occ.get(x, ()), occ.get(y, ()), v)
            if mirror is not None:
                orel[(y, x)] = mirror
    return Scene.build(occ, vrel, prel, orel)


def _orel_mirror(
    net: RoadNetwork, occ_x: Iterable[str], occ_y: Iterable[str], v: LonRel
) -> Optional[LonRel]:
    rx = {net.road_of_lane(l) for l in occ_x} - {None}
    ry = {net.road_of_lane(l) for l in occ_y} - {None}
    if len(rx) != 1 or len(ry) != 1:
        return None
    (road_x,), (road_y,) = rx, ry
    for z in net.zones:
        ox, oy = z.orientation.get(road_x), z.orientation.get(road_y)
        if ox is not None and oy is not None:
            return invert(v) if ox == oy else v
    return None


def scene_atom_lines(scene: Scene) -> list[str]:
    """Canonical, sorted atom lines for one scene."""
    out = []
    for c, ls in scene.occ.items():
        for l in ls:
            out.append(f"on({c},{l}).")
    for (x, y), v in scene.vrel.items():
        out.append(f"lonr({x},{y},{v.value}).")
    for (c, p), v in scene.prel.items():
        out.append(f"lonpr({c},{p},{v.value}).")
    for (x, y), v in scene.orel.items():
        out.append(f"lonro({x},{y},{v.value}).")
    return sorted(out)


def render_scenario(sc: Scenario) -> str:
    blocks = []
    for k, scene in enumerate(sc.scenes, start=1):
        blocks.append(f"#step {k}")
        blocks.extend(scene_atom_lines(scene))
    return "\n".join(blocks) + "\n"


def render_result(scenarios: Sequence[Scenario]) -> str:
    """Concatenated scenario renderings with ``#scenario <n>`` separators."""
    parts = []
    for i, sc in enumerate(scenarios, start=1):
        parts.append(f"#scenario {i}")
        parts.append(render_scenario(sc).rstrip("\n"))
    return "\n".join(parts) + "\n" if parts else ""


def parse_scenarios(
    text: str, net: RoadNetwork, declared: frozenset[str] = frozenset()
) -> list[Scenario]:
    """Parse a scenario (or multi-scenario result) file.

    Accepts either bare ``#step`` blocks (one scenario) or ``#scenario``
    sections.  The vehicle universe of each scenario is the union of the
    declared vehicles and every vehicle occurring in its ``on`` atoms.
    """
    groups: list[list[list[tuple[str, tuple[str, ...]]]]] = []  # scenario -> step -> atoms
    current_steps: Optional[list[list[tuple[str, tuple[str, ...]]]]] = None
    current_atoms: Optional[list[tuple[str, tuple[str, ...]]]] = None
    for lineno, line in _numbered_atoms(text):
        if line.startswith("#scenario"):
            current_steps = []
            groups.append(current_steps)
            current_atoms = None
        elif line.startswith("#step"):
            if current_steps is None:
                current_steps = []
                groups.append(current_steps)
            current_atoms = []
            current_steps.append(current_atoms)
        elif line.startswith("#"):
            raise ParseError(f"unexpected directive {line.split()[0]!r}", lineno)
        else:
            name, args = parse_atom(line, lineno)
            if name not in _SCENE_ARITY:
                raise ParseError(f"unknown scene atom {name!r}", lineno)
            _check_arity(name, args, _SCENE_ARITY[name], lineno)
            if current_atoms is None:
                raise ParseError("scene atom before any #step header", lineno)
            current_atoms.append((name, args))
    scenarios = []
    for steps in groups:
        if not steps:
            raise ParseError("scenario with no #step blocks")
        universe = set(declared)
        for atoms in steps:
            universe.update(args[0] for name, args in atoms if name == "on")
        scenes = tuple(scene_from_atoms(atoms, universe, net) for atoms in steps)
        scenarios.append(Scenario(frozenset(universe), net, scenes))
    return scenarios


def render_network(
    net: RoadNetwork,
    vehicles: Iterable[str] = (),
    meta: Optional[Mapping[str, object]] = None,
) -> str:
    """Canonical network fact rendering, with optional metadata comments."""
    lines = []
    if meta:
        for k, v in sorted(meta.items()):
            lines.append(f"% meta {k}={v}")
    for r in net.roads:
        for l in r.lanes:
            lines.append(f"lane({l},{r.id}).")
        for a, b in zip(r.lanes, r.lanes[1:]):
            lines.append(f"left({a},{b}).")
    for p in sorted(net.points):
        lines.append(f"class({p},{net.points[p].value}).")
    for p, l in sorted(net.affiliation):
        lines.append(f"pon({p},{l}).")
    for l, p1, p2 in sorted(net.succ_p):
        lines.append(f"succp({l},{p1},{p2}).")
    for p, l in sorted(net.succ_c):
        lines.append(f"succl({p},{l}).")
    for a, b in sorted(net.overlaps):
        lines.append(f"overlap({a},{b}).")
    for c in sorted(set(vehicles)):
        lines.append(f"vehicle({c}).")
    return "\n".join(lines) + "\n"
