"""Aligned building graph: one RDF model carrying both the spatial view
(rooms, doors, adjacency, security zones) and the equipment view (HVAC
equipment, points, control relations), plus the typed queries used by path
planning and sensitivity scoring.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional

from .rdf import (
    BF_NS,
    BOT_NS,
    BRICK_NS,
    RDF_TYPE,
    TripleGraph,
    Triple,
    parse_turtle_file,
    subclass_closure,
    superclass_chain,
)

log = logging.getLogger(__name__)

BOT_ADJACENT_ELEMENT = BOT_NS + "adjacentElement"
BOT_HAS_SPACE = BOT_NS + "hasSpace"
BOT_ZONE = BOT_NS + "Zone"
BOT_SPACE = BOT_NS + "Space"
BOT_ELEMENT = BOT_NS + "Element"
BRICK_ROOM = BRICK_NS + "Room"
BRICK_POINT = BRICK_NS + "Point"
BRICK_EQUIPMENT = BRICK_NS + "Equipment"
BRICK_HVAC = BRICK_NS + "HVAC"
BF_IS_LOCATION_OF = BF_NS + "isLocationOf"
BF_CONTROLS = BF_NS + "controls"
BF_HAS_POINT = BF_NS + "hasPoint"
BF_FEEDS = BF_NS + "feeds"
BF_HAS_PART = BF_NS + "hasPart"


class ModelError(ValueError):
    """Raised for alignment and classification problems in the model."""


class Kind(Enum):
    ROOM = "Room"
    DOOR = "Door"
    POINT = "Point"
    EQUIPMENT = "Equipment"
    HVAC_ZONE = "HvacZone"
    SECURITY_ZONE = "SecurityZoneNode"


@dataclass(frozen=True)
class Resource:
    iri: str
    kind: Kind

    def __str__(self) -> str:
        return self.iri


@dataclass(frozen=True)
class PointInfo:
    """A point located in a room, with its direct class and category."""

    resource: Resource
    leaf_type: str
    category: str  # direct subclass of the point root, e.g. Sensor/Setpoint


def _mentions(graph: TripleGraph, iri: str) -> bool:
    return bool(graph.match(iri)) or bool(graph.match(object=iri))


def _rewritten(graph: TripleGraph, rewrites: Mapping[str, str]) -> TripleGraph:
    if not rewrites:
        return graph

    def rewrite(t: Triple) -> Triple:
        s = rewrites.get(t.subject, t.subject)
        o = rewrites.get(t.object, t.object) if isinstance(t.object, str) else t.object
        return Triple(s, t.predicate, o)

    return TripleGraph([rewrite(t) for t in graph], graph.prefixes)


def _check_correspondence(correspondence: Mapping[str, str]) -> dict[str, str]:
    """Validate one-to-one-ness and return the bot->brick rewrite map."""
    rewrites: dict[str, str] = {}
    seen_targets: dict[str, str] = {}
    for brick_iri, bot_iri in correspondence.items():
        if bot_iri in seen_targets and seen_targets[bot_iri] != brick_iri:
            raise ModelError(
                f"two sources map to one target: {seen_targets[bot_iri]} and "
                f"{brick_iri} -> {bot_iri}"
            )
        seen_targets[bot_iri] = brick_iri
        if bot_iri != brick_iri:
            rewrites[bot_iri] = brick_iri
    return rewrites


def align(
    brick_graph: TripleGraph,
    bot_graph: TripleGraph,
    correspondence: Mapping[str, str],
) -> "AlignedBuilding":
    """Merge the equipment and spatial graphs into one aligned building.

    ``correspondence`` maps a location IRI in the equipment graph to the
    space IRI denoting the same room in the spatial graph; each pair is
    collapsed onto the equipment-side IRI, which then carries the union of
    both nodes' triples and types.  An identity mapping (or two graphs that
    already share names) needs no rewriting.
    """
    for brick_iri, bot_iri in correspondence.items():
        if not _mentions(brick_graph, brick_iri):
            raise ModelError(f"correspondence source not in equipment graph: {brick_iri}")
        if not _mentions(bot_graph, bot_iri):
            raise ModelError(f"correspondence target not in spatial graph: {bot_iri}")
    rewrites = _check_correspondence(correspondence)
    merged = _rewritten(bot_graph, rewrites).merged(brick_graph)
    return AlignedBuilding(merged)


class AlignedBuilding:
    """Immutable classified view over the merged graph.

    Construction is single-threaded; afterwards the object only serves
    reads, so any number of concurrent readers is fine.
    """

    def __init__(self, graph: TripleGraph, zone_levels: Optional[Mapping[str, str]] = None):
        self.graph = graph
        self._point_classes = subclass_closure(graph, BRICK_POINT)
        self._equipment_classes = subclass_closure(graph, BRICK_EQUIPMENT)
        self._kinds: dict[str, Kind] = {}
        for subject in {t.subject for t in graph}:
            kind = self._classify(subject)
            if kind is not None:
                self._kinds[subject] = kind
        for t in graph:
            if isinstance(t.object, str) and t.object not in self._kinds:
                kind = self._classify(t.object)
                if kind is not None:
                    self._kinds[t.object] = kind
        # zone node -> level name (Public/Reception/...), from the zone file
        self.zone_levels: dict[str, str] = dict(zone_levels or {})
        self._validate()

    def _classify(self, iri: str) -> Optional[Kind]:
        types = self.graph.types_of(iri)
        if BRICK_ROOM in types and BOT_SPACE in types:
            return Kind.ROOM
        if BOT_ELEMENT in types:
            return Kind.DOOR
        if BOT_ZONE in types:
            return Kind.SECURITY_ZONE
        if BRICK_HVAC in types:
            return Kind.HVAC_ZONE
        if types & self._point_classes:
            return Kind.POINT
        if types & self._equipment_classes:
            return Kind.EQUIPMENT
        return None

    def _validate(self) -> None:
        for door in self.doors:
            if not any(n.kind is Kind.ROOM for n in self.adjacent_resources(door)):
                raise ModelError(f"door not adjacent to any room: {door.iri}")

    @property
    def rooms(self) -> set[Resource]:
        return {Resource(i, k) for i, k in self._kinds.items() if k is Kind.ROOM}

    @property
    def doors(self) -> set[Resource]:
        return {Resource(i, k) for i, k in self._kinds.items() if k is Kind.DOOR}

    @property
    def points(self) -> set[Resource]:
        return {Resource(i, k) for i, k in self._kinds.items() if k is Kind.POINT}

    def resource(self, iri: str) -> Resource:
        kind = self._kinds.get(iri)
        if kind is None:
            raise ModelError(f"unknown or unclassified resource: {iri}")
        return Resource(iri, kind)

    def kind_of(self, iri: str) -> Optional[Kind]:
        return self._kinds.get(iri)

    def is_door(self, iri: str) -> bool:
        return self._kinds.get(iri) is Kind.DOOR

    def is_room(self, iri: str) -> bool:
        return self._kinds.get(iri) is Kind.ROOM

    def adjacent_resources(self, r: Resource) -> set[Resource]:
        """Neighbours through the adjacency relation, in both directions."""
        found = set()
        for t in self.graph.match(None, BOT_ADJACENT_ELEMENT, r.iri):
            found.add(t.subject)
        for obj in self.graph.objects(r.iri, BOT_ADJACENT_ELEMENT):
            if isinstance(obj, str):
                found.add(obj)
        out = set()
        for iri in found:
            kind = self._kinds.get(iri)
            if kind in (Kind.ROOM, Kind.DOOR):
                out.add(Resource(iri, kind))
        return out

    def security_zone_node(self, room: Resource) -> str:
        """The zone node that lists this room as one of its spaces."""
        if room.kind is not Kind.ROOM:
            raise ModelError(f"not a room: {room.iri}")
        zones = {
            t.subject
            for t in self.graph.match(None, BOT_HAS_SPACE, room.iri)
            if self._kinds.get(t.subject) is Kind.SECURITY_ZONE
        }
        if not zones:
            raise ModelError(f"room has no security zone: {room.iri}")
        if len(zones) > 1:
            raise ModelError(f"room in more than one security zone: {room.iri}")
        return zones.pop()

    def points_in(self, room: Resource) -> set[PointInfo]:
        """Points located in the room, with leaf type and category.

        Located resources whose type does not reach the point root (for
        example equipment parked in a mechanical room) are skipped with a
        diagnostic.
        """
        if room.kind is not Kind.ROOM:
            raise ModelError(f"not a room: {room.iri}")
        out = set()
        for obj in self.graph.objects(room.iri, BF_IS_LOCATION_OF):
            if not isinstance(obj, str):
                continue
            point_types = sorted(self.graph.types_of(obj) & self._point_classes)
            if not point_types:
                log.warning("skipping located non-point resource %s in %s", obj, room.iri)
                continue
            leaf = point_types[0]
            category = leaf
            for ancestor in superclass_chain(self.graph, leaf):
                if ancestor == BRICK_POINT:
                    break
                category = ancestor
            out.add(PointInfo(Resource(obj, Kind.POINT), leaf, category))
        return out

    def control_fanout(self, point: Resource) -> int:
        """Number of distinct locations influenced by the point.

        Follows controls -> hasPoint -> feeds -> hasPart and counts the
        distinct end locations; 0 when the chain is broken anywhere.
        """
        locations: set[str] = set()
        for command in self.graph.objects(point.iri, BF_CONTROLS):
            if not isinstance(command, str):
                continue
            for equipment in self.graph.subjects(BF_HAS_POINT, command):
                for zone in self.graph.objects(equipment, BF_FEEDS):
                    if not isinstance(zone, str):
                        continue
                    for loc in self.graph.objects(zone, BF_HAS_PART):
                        if isinstance(loc, str):
                            locations.add(loc)
        return len(locations)


def load_correspondence(path) -> dict[str, str]:
    """Two-column CSV (equipment-view IRI, spatial-view IRI)."""
    out: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise ModelError(f"correspondence row needs 2 columns: {row!r}")
            out[row[0].strip()] = row[1].strip()
    return out


def load_building(
    building_path,
    taxonomy_path,
    zone_levels: Optional[Mapping[str, str]] = None,
    correspondence: Optional[Mapping[str, str]] = None,
) -> AlignedBuilding:
    """Parse and merge the building and taxonomy files into one model.

    The shipped building file already uses shared names for rooms in both
    views, so the default correspondence is empty; zone level names may be
    given with prefixed IRIs, which are expanded against the merged prefix
    table.
    """
    graph = parse_turtle_file(building_path).merged(parse_turtle_file(taxonomy_path))
    if correspondence:
        expanded = {graph.expand(k): graph.expand(v) for k, v in correspondence.items()}
        for brick_iri, bot_iri in expanded.items():
            for iri in (brick_iri, bot_iri):
                if not _mentions(graph, iri):
                    raise ModelError(f"correspondence IRI not in model: {iri}")
        graph = _rewritten(graph, _check_correspondence(expanded))
    levels = {graph.expand(k): v for k, v in (zone_levels or {}).items()}
    return AlignedBuilding(graph, levels)
