"""Indoor path enumeration and ranking.

Paths alternate room, door, room, ... and never revisit a room.  All simple
paths between two rooms are found by recursive depth-first search over the
adjacency relation, exploring neighbours in ascending IRI order so output
is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .building import AlignedBuilding, Kind, Resource
from .sensitivity import PathCost, WeightTable, path_cost, security_zone_of

DEFAULT_MAX_PATHS = 64
DEFAULT_MAX_DEPTH = 32  # rooms per path


class PlannerError(ValueError):
    pass


@dataclass(frozen=True)
class IndoorPath:
    """Alternating room/door sequence from origin to destination."""

    sequence: tuple[Resource, ...]

    def __post_init__(self):
        if len(self.sequence) < 1 or len(self.sequence) % 2 == 0:
            raise PlannerError("path must alternate room, door, ..., room")
        rooms = self.sequence[::2]
        doors = self.sequence[1::2]
        if any(r.kind is not Kind.ROOM for r in rooms):
            raise PlannerError("even positions must be rooms")
        if any(d.kind is not Kind.DOOR for d in doors):
            raise PlannerError("odd positions must be doors")
        if len({r.iri for r in rooms}) != len(rooms):
            raise PlannerError("path revisits a room")

    @property
    def origin(self) -> Resource:
        return self.sequence[0]

    @property
    def destination(self) -> Resource:
        return self.sequence[-1]

    def rooms(self) -> tuple[Resource, ...]:
        return self.sequence[::2]

    def doors(self) -> tuple[Resource, ...]:
        return self.sequence[1::2]

    def iris(self) -> tuple[str, ...]:
        return tuple(r.iri for r in self.sequence)

    def reversed(self) -> "IndoorPath":
        return IndoorPath(tuple(reversed(self.sequence)))


@dataclass
class PathSearch:
    """Enumeration result plus whether any bound cut the search short."""

    paths: list[IndoorPath]
    truncated: bool = False
    max_paths: int = DEFAULT_MAX_PATHS
    max_depth: int = DEFAULT_MAX_DEPTH


def enumerate_paths(
    building: AlignedBuilding,
    origin: Resource,
    destination: Resource,
    max_paths: int = DEFAULT_MAX_PATHS,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> PathSearch:
    """All acyclic room/door paths from origin to destination.

    The list is complete whenever neither ``max_paths`` nor ``max_depth``
    (counted in rooms) binds; ``truncated`` reports if one did.  An
    unreachable destination yields an empty list.
    """
    if origin.kind is not Kind.ROOM:
        raise PlannerError(f"origin is not a room: {origin.iri}")
    if destination.kind is not Kind.ROOM:
        raise PlannerError(f"destination is not a room: {destination.iri}")
    if origin.iri == destination.iri:
        raise PlannerError("origin and destination must differ")

    result = PathSearch([], max_paths=max_paths, max_depth=max_depth)
    visited_rooms = {origin.iri}
    sequence: list[Resource] = [origin]

    def neighbours(r: Resource) -> list[Resource]:
        return sorted(building.adjacent_resources(r), key=lambda x: x.iri)

    def visit(room: Resource, depth: int) -> None:
        if len(result.paths) >= result.max_paths:
            result.truncated = True
            return
        if room.iri == destination.iri:
            result.paths.append(IndoorPath(tuple(sequence)))
            return
        if depth >= result.max_depth:
            result.truncated = True
            return
        for door in neighbours(room):
            if door.kind is not Kind.DOOR:
                continue
            for nxt in neighbours(door):
                if nxt.kind is not Kind.ROOM or nxt.iri in visited_rooms:
                    continue
                visited_rooms.add(nxt.iri)
                sequence.append(door)
                sequence.append(nxt)
                visit(nxt, depth + 1)
                sequence.pop()
                sequence.pop()
                visited_rooms.discard(nxt.iri)

    visit(origin, 1)
    return result


@dataclass(frozen=True)
class RankedPath:
    path: IndoorPath
    cost: PathCost
    zone_order_warning: bool


def zone_order_violated(building: AlignedBuilding, path: IndoorPath) -> bool:
    """True when a step climbs more than one zone level at once.

    Zone levels are meant to be entered in order (a level-4 area from a
    level-3 area, and so on); descending or staying level is fine.
    """
    ordinals = [security_zone_of(building, r).ordinal for r in path.rooms()]
    return any(b - a > 1 for a, b in zip(ordinals, ordinals[1:]))


def rank_paths(
    paths: list[IndoorPath], weights: WeightTable, building: AlignedBuilding
) -> list[RankedPath]:
    """Sort ascending by total cost; ties go to fewer rooms, then IRIs."""
    if not paths:
        raise PlannerError("no paths to rank")
    ranked = [
        RankedPath(p, path_cost(building, weights, p), zone_order_violated(building, p))
        for p in paths
    ]
    ranked.sort(key=lambda rp: (rp.cost.total, len(rp.path.rooms()), rp.path.iris()))
    return ranked
