"""Bounded enumeration of every rule-conforming scenario.

Given an initial scene, a road network and a horizon, `expand` finds all
scenarios (scene sequences) that satisfy every scene and transition rule,
optionally filtered by a final-scene goal.  Two modes:

* ``exact``    — all scenarios of exactly ``horizon`` scenes;
* ``shortest`` — all goal-satisfying scenarios of the minimal length
  T* ≤ horizon (iterative deepening).

Successor scenes are generated constructively (per-atom candidate moves,
then cross-filtered by the full rule checker, which stays authoritative)
and never stutter: consecutive scenes always differ, because steps carry
order, not duration.

In shortest mode the final scene is additionally required to be *steady*
(every vehicle on exactly one lane) unless the request says ``#final
any`` — mid-lane-change endings would otherwise multiply every result.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Mapping, Optional

from trafficlogic.domain import (
    LON_RANK,
    LonRel,
    RoadNetwork,
    Scenario,
    Scene,
    invert,
)
from trafficlogic.facts import (
    ParseError,
    NetworkBuilder,
    _NETWORK_ARITY,
    _SCENE_ARITY,
    parse_atom,
    render_scenario,
    scene_from_atoms,
    strip_comment,
)
from trafficlogic.rules import PREL_NEXT, check_scene, check_transition

A, C, B, N = LonRel.AHEAD, LonRel.COVER, LonRel.BEHIND, LonRel.NONE

_INF = 10**9

_VREL_STEPS = {A: (A, C), C: (A, C, B), B: (B, C)}
_PREL_STEPS = {B: (B, C), C: (C, A), A: (A,)}
_ALL3 = (A, C, B)


class RequestError(ValueError):
    """A request that parses but cannot be executed (unknown ids etc.)."""


@dataclass(frozen=True)
class GoalAtom:
    kind: str  # on | lonr | lonpr | lonro
    args: tuple[str, ...]
    rel: Optional[LonRel]  # None for `on`
    negated: bool = False

    def holds(self, scene: Scene) -> bool:
        if self.kind == "on":
            ok = self.args[1] in scene.occ_of(self.args[0])
        elif self.kind == "lonr":
            ok = scene.vrel_of(self.args[0], self.args[1]) is self.rel
        elif self.kind == "lonpr":
            ok = scene.prel_of(self.args[0], self.args[1]) is self.rel
        else:
            ok = scene.orel_of(self.args[0], self.args[1]) is self.rel
        return not ok if self.negated else ok


@dataclass(frozen=True)
class Goal:
    """Conjunction of ground literals over the final scene."""

    atoms: tuple[GoalAtom, ...]

    def holds(self, scene: Scene) -> bool:
        return all(a.holds(scene) for a in self.atoms)


@dataclass
class ExpansionRequest:
    initial: Scene
    network: RoadNetwork
    vehicles: frozenset[str]
    horizon: int
    mode: str = "exact"  # exact | shortest
    goal: Optional[Goal] = None
    frozen: frozenset[str] = frozenset()
    final_stable: Optional[bool] = None  # None = mode default


@dataclass
class Stats:
    nodes: int = 0
    pruned: int = 0
    wall_time_s: float = 0.0


@dataclass
class ExpansionResult:
    scenarios: tuple[Scenario, ...]
    stats: Stats

    @property
    def shortest_length(self) -> Optional[int]:
        return self.scenarios[0].horizon if self.scenarios else None


def canonicalize(sc: Scenario) -> str:
    """Canonical byte-stable rendering used for ordering and dedup."""
    return render_scenario(sc)


# -- successor generation ------------------------------------------------------


def _occ_options(scene: Scene, n: RoadNetwork, c: str, frozen: frozenset[str]):
    cur = scene.occ_of(c)
    opts: list[frozenset[str]] = [cur]
    if c in frozen:
        return opts
    if len(cur) == 1:
        (l,) = cur
        for adj in n.adjacent_lanes(l):
            opts.append(frozenset((l, adj)))
        for p in n.connections_on(l):
            if scene.prel_of(c, p) is C:
                for l2 in n.successor_lanes(p):
                    opts.append(frozenset((l2,)))
    elif len(cur) == 2:
        for l in sorted(cur):
            opts.append(frozenset((l,)))
    return opts


def _gen_successors(
    scene: Scene,
    n: RoadNetwork,
    frozen: frozenset[str],
    prel_pins: Mapping[tuple[str, str], frozenset[LonRel]],
    oref_pins: Mapping[tuple[str, str], frozenset[LonRel]],
) -> tuple[Scene, ...]:
    vehicles = scene.vehicles
    prev_road = {c: _road(scene, n, c) for c in vehicles}
    occ_lists = [_occ_options(scene, n, c, frozen) for c in vehicles]
    results: dict = {}
    order: list[Scene] = []
    for occ_combo in product(*occ_lists):
        occ = dict(zip(vehicles, occ_combo))
        road = {}
        for c, ls in occ.items():
            rs = {n.road_of_lane(l) for l in ls} - {None}
            road[c] = next(iter(rs)) if len(rs) == 1 else None
        # vehicle-vehicle relation slots (same-road pairs only)
        vrel_slots: list[tuple[str, str]] = []
        vrel_cands: list[tuple[LonRel, ...]] = []
        for i, x in enumerate(vehicles):
            for y in vehicles[i + 1 :]:
                if road[x] is None or road[x] != road[y]:
                    continue
                u = scene.vrel_of(x, y)
                vrel_slots.append((x, y))
                vrel_cands.append(_VREL_STEPS[u] if u is not N else _ALL3)
        # vehicle-point slots (points carried by the vehicle's road)
        prel_slots: list[tuple[str, str]] = []
        prel_cands: list[tuple[LonRel, ...]] = []
        dead = False
        for c in vehicles:
            rid = road[c]
            if rid is None:
                continue
            for p in sorted(n.points_of_road(rid)):
                u = scene.prel_of(c, p)
                cands = _PREL_STEPS[u] if u is not N else _ALL3
                pin = prel_pins.get((c, p))
                if pin is not None:
                    cands = tuple(v for v in cands if v in pin)
                if not cands:
                    dead = True
                    break
                prel_slots.append((c, p))
                prel_cands.append(cands)
            if dead:
                break
        if dead:
            continue
        for vrel_combo in product(*vrel_cands):
            vrel: dict[tuple[str, str], LonRel] = {}
            for (x, y), v in zip(vrel_slots, vrel_combo):
                vrel[(x, y)] = v
                vrel[(y, x)] = invert(v)
            for prel_combo in product(*prel_cands):
                prel = dict(zip(prel_slots, prel_combo))
                pscene = _ProtoScene(occ, road, vrel, prel)
                for orel in _orel_assignments(scene, n, pscene, prev_road, oref_pins):
                    cand = Scene(occ, vrel, prel, orel)
                    if cand == scene or cand.key() in results:
                        continue
                    if check_scene(cand, n) or check_transition(scene, cand, n):
                        continue
                    results[cand.key()] = cand
                    order.append(cand)
    return tuple(order)


@dataclass
class _ProtoScene:
    occ: dict
    road: dict
    vrel: dict
    prel: dict

    def prel_of(self, c, p):
        return self.prel.get((c, p), N)


def _road(scene: Scene, n: RoadNetwork, c: str) -> Optional[str]:
    roads = {n.road_of_lane(l) for l in scene.occ_of(c)} - {None}
    return next(iter(roads)) if len(roads) == 1 else None


def _engaged_proto(n, proto, c, z) -> bool:
    rid = proto.road.get(c)
    if rid is None:
        return False
    ee = z.entry_exit_for(rid)
    if ee is None:
        return False
    return proto.prel_of(c, ee[0]) is A and proto.prel_of(c, ee[1]) is B


def _orel_assignments(scene, n, proto, prev_road, oref_pins):
    """Yield every admissible window-relation map for a candidate scene."""
    vehicles = sorted(proto.occ)
    pair_zones: dict[tuple[str, str], list] = {}
    for z in n.zones:
        members = [c for c in vehicles if _engaged_proto(n, proto, c, z)]
        for i, x in enumerate(members):
            for y in members[i + 1 :]:
                pair_zones.setdefault((x, y), []).append(z)
    slots: list[tuple[str, str]] = []
    cand_lists: list[tuple[LonRel, ...]] = []
    mirrors: list[bool] = []  # True = mirror by inversion (same direction)
    forced: dict[tuple[str, str], LonRel] = {}
    for (x, y), zs in sorted(pair_zones.items()):
        z0 = zs[0]
        ox, oy = z0.orientation[proto.road[x]], z0.orientation[proto.road[y]]
        if ox == oy:
            if proto.road[x] == proto.road[y]:
                v = proto.vrel.get((x, y))
                if v is None:
                    return  # same road without a relation never survives checking
                forced[(x, y)] = v
                forced[(y, x)] = invert(v)
                continue
            cands: tuple[LonRel, ...] = _ALL3
            mirror_invert = True
        else:
            # opposed traffic: candidates restricted by monotone continuity
            # in the window frame for every window engaged on both steps
            ref_cands = set(_ALL3)
            for z in zs:
                if _engaged_prev(scene, n, x, prev_road.get(x), z) and _engaged_prev(
                    scene, n, y, prev_road.get(y), z
                ):
                    u = scene.orel.get((x, y))
                    if u is not None:
                        o_prev = z.orientation.get(prev_road.get(x))
                        if o_prev is not None:
                            u_ref = u if o_prev > 0 else invert(u)
                            ref_cands &= PREL_NEXT[u_ref]
            pin = oref_pins.get((x, y))
            if pin is not None:
                ref_cands &= pin
            cands = tuple(v if ox > 0 else invert(v) for v in _ALL3 if v in ref_cands)
            mirror_invert = False
        if not cands:
            return
        slots.append((x, y))
        cand_lists.append(cands)
        mirrors.append(mirror_invert)
    for combo in product(*cand_lists):
        orel = dict(forced)
        for (x, y), v, inv in zip(slots, combo, mirrors):
            orel[(x, y)] = v
            orel[(y, x)] = invert(v) if inv else v
        yield orel


def _engaged_prev(scene, n, c, rid, z) -> bool:
    if rid is None:
        return False
    ee = z.entry_exit_for(rid)
    if ee is None:
        return False
    return scene.prel_of(c, ee[0]) is A and scene.prel_of(c, ee[1]) is B


def successors(scene: Scene, n: RoadNetwork, frozen: frozenset[str] = frozenset()) -> tuple[Scene, ...]:
    """All valid, non-stuttering next scenes, in deterministic order."""
    return _gen_successors(scene, n, frozen, {}, {})


# -- goal-distance lower bounds (sound pruning) --------------------------------


def _atom_bound(atom: GoalAtom, scene: Scene, n: RoadNetwork, roads_fixed: bool) -> int:
    kind = atom.kind
    if kind == "on":
        c, l = atom.args
        present = l in scene.occ_of(c)
        if atom.negated:
            return 1 if present else 0
        if present:
            return 0
        rid = _road(scene, n, c)
        lane_road = n.road_of_lane(l)
        if roads_fixed:
            if rid is None or lane_road != rid:
                return _INF
            return min(abs(n.lane_index(l) - n.lane_index(a)) for a in scene.occ_of(c))
        return 1
    if kind == "lonr":
        u = scene.vrel_of(*atom.args)
        t = atom.rel
        if atom.negated:
            return 1 if u is t else 0
        if u is t:
            return 0
        if t is N:
            return _INF if roads_fixed else 1
        if u is N:
            return _INF if roads_fixed else 1
        return 2 if {u, t} == {A, B} else 1
    if kind == "lonpr":
        c, p = atom.args
        u = scene.prel_of(c, p)
        t = atom.rel
        if atom.negated:
            if u is not t:
                return 0
            if roads_fixed and t is A:
                return _INF  # a passed point stays passed
            return 1
        if u is t:
            return 0
        if t is N or u is N:
            return _INF if roads_fixed else 1
        d = LON_RANK[t] - LON_RANK[u]
        if d > 0:
            return d
        return _INF if roads_fixed else 2
    # lonro
    x, y = atom.args
    u = scene.orel_of(x, y)
    t = atom.rel
    if atom.negated:
        return 1 if u is t else 0
    if u is t:
        return 0
    if t is N:
        return 1
    if roads_fixed:
        rx, ry = _road(scene, n, x), _road(scene, n, y)
        zs = [
            z
            for z in n.zones
            if rx in z.orientation and ry in z.orientation
        ]
        if not zs:
            return _INF
        if u is not N:
            z = zs[0]
            ox = z.orientation[rx]
            u_ref = u if ox > 0 else invert(u)
            t_ref = t if ox > 0 else invert(t)
            engaged = _engaged_prev(scene, n, x, rx, z) and _engaged_prev(scene, n, y, ry, z)
            if engaged:
                d = LON_RANK[t_ref] - LON_RANK[u_ref]
                return d if d > 0 else _INF
    return 1


def _goal_bound(goal: Optional[Goal], scene: Scene, n: RoadNetwork, roads_fixed: bool) -> int:
    if goal is None:
        return 0
    worst = 0
    for atom in goal.atoms:
        b = _atom_bound(atom, scene, n, roads_fixed)
        if b > worst:
            worst = b
            if worst >= _INF:
                break
    return worst


def _monotone_pins(goal: Optional[Goal], net: RoadNetwork, initial: Scene):
    """Candidate-level pins implied by monotone relations and a final goal.

    Only sound when no connection successors exist (vehicles can never
    change roads, so vehicle-point relations never reset through NONE).
    """
    prel_pins: dict[tuple[str, str], frozenset[LonRel]] = {}
    oref_pins: dict[tuple[str, str], frozenset[LonRel]] = {}
    if goal is None or net.succ_c:
        return prel_pins, oref_pins
    for atom in goal.atoms:
        if atom.negated:
            continue
        if atom.kind == "lonpr":
            if atom.rel is B:
                prel_pins[atom.args] = frozenset({B})
            elif atom.rel is C:
                prel_pins[atom.args] = frozenset({B, C})
        elif atom.kind == "lonro" and atom.rel in (B, C):
            # mixed-direction window relations are stored symmetrically, so
            # the goal value applies to the sorted pair as-is; the window
            # frame is taken from the sorted-first vehicle's road
            sx, sy = sorted(atom.args)
            rx = _road(initial, net, sx)
            ry = _road(initial, net, sy)
            if rx is None or ry is None:
                continue
            for z in net.zones:
                ox, oy = z.orientation.get(rx), z.orientation.get(ry)
                if ox is None or oy is None or ox == oy:
                    continue
                t_ref = atom.rel if ox > 0 else invert(atom.rel)
                oref_pins[(sx, sy)] = frozenset({B}) if t_ref is B else frozenset({B, C})
                break
    return prel_pins, oref_pins


# -- search --------------------------------------------------------------------


class _Searcher:
    def __init__(self, net, frozen, goal, prel_pins, oref_pins, roads_fixed):
        self.net = net
        self.frozen = frozen
        self.goal = goal
        self.prel_pins = prel_pins
        self.oref_pins = oref_pins
        self.roads_fixed = roads_fixed
        self.memo: dict = {}
        self.nodes = 0
        self.pruned = 0

    def successors(self, scene: Scene) -> tuple[Scene, ...]:
        cached = self.memo.get(scene.key())
        if cached is None:
            cached = _gen_successors(scene, self.net, self.frozen, self.prel_pins, self.oref_pins)
            self.memo[scene.key()] = cached
        return cached

    def dfs(self, scene: Scene, steps_left: int, require_goal: bool, final_stable: bool):
        """Yield all rule-conforming continuations as scene tuples."""
        self.nodes += 1
        if steps_left == 0:
            if require_goal and self.goal is not None and not self.goal.holds(scene):
                return
            if final_stable and any(len(ls) != 1 for ls in scene.occ.values()):
                return
            yield (scene,)
            return
        if require_goal and _goal_bound(self.goal, scene, self.net, self.roads_fixed) > steps_left:
            self.pruned += 1
            return
        for nxt in self.successors(scene):
            for tail_scenes in self.dfs(nxt, steps_left - 1, require_goal, final_stable):
                yield (scene,) + tail_scenes


def _search_payload(args):
    (net, frozen, goal, prel_pins, oref_pins, roads_fixed, root, steps_left, require_goal, final_stable) = args
    s = _Searcher(net, frozen, goal, prel_pins, oref_pins, roads_fixed)
    paths = list(s.dfs(root, steps_left, require_goal, final_stable))
    return paths, s.nodes, s.pruned


def expand(req: ExpansionRequest, workers: int = 1) -> ExpansionResult:
    """Enumerate all scenarios per the request; deterministic output order."""
    t0 = time.monotonic()
    net = req.network
    if req.horizon < 1:
        raise RequestError("horizon must be >= 1")
    if req.mode not in ("exact", "shortest"):
        raise RequestError(f"unknown mode {req.mode!r}")
    if req.mode == "shortest" and req.goal is None:
        raise RequestError("shortest mode needs a #goal")
    bad = check_scene(req.initial, net)
    if bad:
        raise RequestError(
            "initial scene violates rules: " + "; ".join(v.render() for v in bad)
        )
    final_stable = req.final_stable
    if final_stable is None:
        final_stable = req.mode == "shortest"
    prel_pins, oref_pins = _monotone_pins(req.goal, net, req.initial)
    roads_fixed = not net.succ_c
    stats = Stats()
    require_goal = req.goal is not None

    def run_depth(T: int) -> list[tuple[Scene, ...]]:
        steps = T - 1
        searcher = _Searcher(net, req.frozen, req.goal, prel_pins, oref_pins, roads_fixed)
        if workers <= 1 or steps <= 1:
            paths = list(searcher.dfs(req.initial, steps, require_goal, final_stable))
            stats.nodes += searcher.nodes
            stats.pruned += searcher.pruned
            return paths
        # fan out one level: each first move explored in its own process
        stats.nodes += 1
        roots = searcher.successors(req.initial)
        payloads = [
            (net, req.frozen, req.goal, prel_pins, oref_pins, roads_fixed, r, steps - 1, require_goal, final_stable)
            for r in roots
        ]
        paths = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for sub_paths, nodes, pruned in pool.map(_search_payload, payloads):
                stats.nodes += nodes
                stats.pruned += pruned
                for p in sub_paths:
                    paths.append((req.initial,) + p)
        return paths

    collected: list[tuple[Scene, ...]] = []
    if req.mode == "exact":
        collected = run_depth(req.horizon)
    else:
        for T in range(1, req.horizon + 1):
            collected = run_depth(T)
            if collected:
                break
    scenarios = [Scenario(req.vehicles, net, path) for path in collected]
    scenarios.sort(key=canonicalize)
    stats.wall_time_s = time.monotonic() - t0
    return ExpansionResult(tuple(scenarios), stats)


# -- request files ---------------------------------------------------------------


def _split_goal_atoms(body: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    last = "".join(cur).strip()
    if last:
        parts.append(last)
    return [p for p in parts if p]


_REL_BY_NAME = {r.value: r for r in LonRel}


def _parse_goal_atom(text: str, lineno: int) -> GoalAtom:
    negated = False
    body = text.strip()
    if body.startswith("not "):
        negated = True
        body = body[4:].strip()
    name, args = parse_atom(body + ".", lineno)
    if name not in _SCENE_ARITY:
        raise ParseError(f"goal atom must be a scene atom, got {name!r}", lineno)
    if len(args) != _SCENE_ARITY[name]:
        raise ParseError(f"{name} goal atom has wrong arity", lineno)
    if name == "on":
        return GoalAtom("on", args, None, negated)
    rel = _REL_BY_NAME.get(args[-1])
    if rel is None:
        raise ParseError(f"bad relation value {args[-1]!r} in goal", lineno)
    return GoalAtom(name, args[:-1], rel, negated)


def parse_request(text: str) -> ExpansionRequest:
    """Parse a request file: network facts, `#init` scene, directives."""
    builder = NetworkBuilder()
    init_atoms: list[tuple[str, tuple[str, ...]]] = []
    in_init = False
    horizon: Optional[int] = None
    mode = "exact"
    goal_atoms: list[GoalAtom] = []
    frozen: set[str] = set()
    final_stable: Optional[bool] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line.split(None, 1)
            directive, rest = parts[0], (parts[1].strip() if len(parts) > 1 else "")
            if directive == "#init":
                in_init = True
            elif directive == "#horizon":
                try:
                    horizon = int(rest)
                except ValueError:
                    raise ParseError(f"bad #horizon value {rest!r}", lineno) from None
            elif directive == "#mode":
                if rest not in ("exact", "shortest"):
                    raise ParseError(f"bad #mode value {rest!r}", lineno)
                mode = rest
            elif directive == "#goal":
                goal_atoms.extend(_parse_goal_atom(a, lineno) for a in _split_goal_atoms(rest))
            elif directive == "#freeze":
                frozen.update(v.strip() for v in rest.split(",") if v.strip())
            elif directive == "#final":
                if rest not in ("stable", "any"):
                    raise ParseError(f"bad #final value {rest!r}", lineno)
                final_stable = rest == "stable"
            else:
                raise ParseError(f"unknown directive {directive!r}", lineno)
            continue
        name, args = parse_atom(line, lineno)
        if not in_init:
            if name not in _NETWORK_ARITY:
                raise ParseError(f"unknown network fact {name!r}", lineno)
            builder.add(name, args, lineno)
        else:
            if name not in _SCENE_ARITY:
                raise ParseError(f"unknown scene atom {name!r}", lineno)
            if len(args) != _SCENE_ARITY[name]:
                raise ParseError(f"{name} expects {_SCENE_ARITY[name]} arguments", lineno)
            init_atoms.append((name, args))
    net = builder.build()
    if horizon is None:
        raise ParseError("missing #horizon directive")
    vehicles = set(builder.vehicles)
    vehicles.update(args[0] for name, args in init_atoms if name == "on")
    initial = scene_from_atoms(init_atoms, vehicles, net)
    req = ExpansionRequest(
        initial=initial,
        network=net,
        vehicles=frozenset(vehicles),
        horizon=horizon,
        mode=mode,
        goal=Goal(tuple(goal_atoms)) if goal_atoms else None,
        frozen=frozenset(frozen),
        final_stable=final_stable,
    )
    _validate_request(req)
    return req


def _validate_request(req: ExpansionRequest) -> None:
    net = req.network
    lanes = set(net.lanes)
    for c in req.frozen:
        if c not in req.vehicles:
            raise RequestError(f"#freeze names unknown vehicle {c!r}")
    if req.goal is None:
        return
    for atom in req.goal.atoms:
        if atom.kind == "on":
            c, l = atom.args
            if c not in req.vehicles:
                raise RequestError(f"goal names unknown vehicle {c!r}")
            if l not in lanes:
                raise RequestError(f"goal names unknown lane {l!r}")
        elif atom.kind == "lonpr":
            c, p = atom.args
            if c not in req.vehicles:
                raise RequestError(f"goal names unknown vehicle {c!r}")
            if p not in net.points:
                raise RequestError(f"goal names unknown point {p!r}")
        else:
            for c in atom.args:
                if c not in req.vehicles:
                    raise RequestError(f"goal names unknown vehicle {c!r}")
