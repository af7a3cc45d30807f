"""Sensitivity scoring: priority weights for point types from pairwise
comparisons, security-zone ordinals, and room/path cost evaluation.

The cost of a room is its security-zone ordinal plus, for every point
located in it, the point-type weight scaled by one plus the number of
locations the point influences.  A path costs the sum of its rooms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .building import AlignedBuilding, Resource
from .rdf import BRICK_NS

#: Zone level name -> ordinal.  The scale is fixed: 0 is uncontrolled public
#: space, 4 is a high-security area.
ZONE_ORDINALS = {
    "Public": 0,
    "Reception": 1,
    "Operations": 2,
    "Security": 3,
    "HighSecurity": 4,
}

#: Random-index table for the consistency ratio, n = 1..10.
RANDOM_INDEX = [0.0, 0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49]

CATEGORY_SENSOR = BRICK_NS + "Sensor"
CATEGORY_SETPOINT = BRICK_NS + "Setpoint"


class SensitivityError(ValueError):
    pass


@dataclass(frozen=True)
class SecurityZone:
    name: str
    ordinal: int

    @classmethod
    def from_name(cls, name: str) -> "SecurityZone":
        if name not in ZONE_ORDINALS:
            raise SensitivityError(f"unknown security zone level: {name!r}")
        return cls(name, ZONE_ORDINALS[name])


def security_zone_of(building: AlignedBuilding, room: Resource) -> SecurityZone:
    """Resolve a room's zone node and translate it to its level/ordinal."""
    node = building.security_zone_node(room)
    level = building.zone_levels.get(node)
    if level is None:
        raise SensitivityError(f"zone node has no configured level: {node}")
    return SecurityZone.from_name(level)


@dataclass(frozen=True)
class PairwiseMatrix:
    """Reciprocal pairwise-comparison matrix on the 1-9 rating scale."""

    labels: tuple[str, ...]
    entries: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        n = len(self.labels)
        if not 2 <= n <= 15:
            raise SensitivityError(f"matrix size must be between 2 and 15, got {n}")
        if len(self.entries) != n or any(len(row) != n for row in self.entries):
            raise SensitivityError("matrix shape does not match labels")
        for i in range(n):
            for j in range(n):
                v = self.entries[i][j]
                if v <= 0:
                    raise SensitivityError(f"entries must be positive, got {v} at {i},{j}")
                if abs(v * self.entries[j][i] - 1.0) > 1e-9:
                    raise SensitivityError(f"matrix is not reciprocal at {i},{j}")

    @classmethod
    def from_comparisons(
        cls, labels: Sequence[str], comparisons: Iterable[tuple[str, str, float]]
    ) -> "PairwiseMatrix":
        """Build from (a, b, value) answers meaning a is `value` times b."""
        index = {label: i for i, label in enumerate(labels)}
        m = np.ones((len(labels), len(labels)))
        for a, b, value in comparisons:
            if a not in index or b not in index:
                raise SensitivityError(f"comparison references unknown label: {a!r}/{b!r}")
            if value <= 0:
                raise SensitivityError(f"comparison value must be positive: {value}")
            m[index[a], index[b]] = float(value)
            m[index[b], index[a]] = 1.0 / float(value)
        return cls(tuple(labels), tuple(tuple(row) for row in m))

    def as_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=float)


def ahp_weights(
    matrix: PairwiseMatrix, tolerance: float = 1e-10, max_iterations: int = 10_000
) -> tuple[list[float], float, float]:
    """Principal-eigenvector weights via power iteration.

    Returns (weights, lambda_max, consistency_ratio).  The weights are the
    normalized Perron eigenvector; the consistency ratio divides the
    consistency index (lambda_max - n)/(n - 1) by the random index for n.
    """
    m = matrix.as_array()
    n = m.shape[0]
    w = np.full(n, 1.0 / n)
    for _ in range(max_iterations):
        nxt = m @ w
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - w)) < tolerance:
            w = nxt
            break
        w = nxt
    else:
        raise SensitivityError("power iteration did not converge")
    lambda_max = float((m @ w).sum())
    if n == 1:
        return list(w), lambda_max, 0.0
    ci = (lambda_max - n) / (n - 1)
    ri = RANDOM_INDEX[n] if n < len(RANDOM_INDEX) else RANDOM_INDEX[-1]
    cr = 0.0 if ri == 0 else ci / ri
    return [float(x) for x in w], lambda_max, float(cr)


@dataclass(frozen=True)
class CategoryWeights:
    labels: tuple[str, ...]
    weights: tuple[float, ...]
    lambda_max: Optional[float] = None
    consistency_ratio: Optional[float] = None
    derived: Optional[tuple[float, ...]] = None  # eigenvector, when both given


@dataclass
class WeightTable:
    """Per-category point-type weights, keyed by full type IRI.

    Stored weights are normalized (each category sums to one).  Cost
    evaluation quantizes them to ``precision`` decimals so that costs line
    up with a weights table published at that precision; pass
    ``precision=None`` to use the raw values.
    """

    categories: dict[str, CategoryWeights] = field(default_factory=dict)
    precision: Optional[int] = 3

    def add_category(self, category_iri: str, cw: CategoryWeights) -> None:
        total = sum(cw.weights)
        if abs(total - 1.0) > 1e-9:
            raise SensitivityError(f"weights must sum to 1, got {total}")
        self.categories[category_iri] = cw

    def weight(self, category_iri: str, type_iri: str) -> float:
        cw = self.categories.get(category_iri)
        if cw is None:
            raise SensitivityError(f"no weights configured for category {category_iri}")
        try:
            w = cw.weights[cw.labels.index(type_iri)]
        except ValueError:
            raise SensitivityError(
                f"no weight configured for point type {type_iri}"
            ) from None
        return round(w, self.precision) if self.precision is not None else w


_CATEGORY_KEYS = {"sensors": CATEGORY_SENSOR, "setpoints": CATEGORY_SETPOINT}


def load_weight_table(path, precision: Optional[int] = 3) -> WeightTable:
    """Read the weights configuration file (JSON).

    Each category block gives pairwise comparison answers (labels plus
    (a, b, value) triples), explicit weights (label -> value, normalized on
    load), or both.  With both, the explicit values are operational and the
    answers are cross-checked against them: a gap above 0.005 per weight is
    a configuration error.  Labels are local names under the equipment
    vocabulary.
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    table = WeightTable(precision=precision)
    for key, block in raw.items():
        if key not in _CATEGORY_KEYS:
            if key == "comment":
                continue
            raise SensitivityError(f"unknown weights category {key!r}")
        category = _CATEGORY_KEYS[key]
        derived = lam = cr = None
        labels: Optional[tuple[str, ...]] = None
        if "comparisons" in block:
            labels = tuple(BRICK_NS + name for name in block["labels"])
            comparisons = [
                (BRICK_NS + a, BRICK_NS + b, float(v)) for a, b, v in block["comparisons"]
            ]
            matrix = PairwiseMatrix.from_comparisons(labels, comparisons)
            derived_list, lam, cr = ahp_weights(matrix)
            derived = tuple(derived_list)
        if "weights" in block:
            explicit_labels = tuple(BRICK_NS + name for name in block["weights"])
            values = np.array([float(v) for v in block["weights"].values()])
            if np.any(values <= 0):
                raise SensitivityError("explicit weights must be positive")
            if abs(values.sum() - 1.0) > 0.02:
                raise SensitivityError(
                    f"explicit weights for {key} sum to {values.sum():.4f}, expected ~1"
                )
            values = values / values.sum()
            if derived is not None:
                if explicit_labels != labels:
                    raise SensitivityError(
                        f"weights and comparison labels disagree for {key}"
                    )
                by_label = dict(zip(explicit_labels, np.abs(np.array(derived) - values)))
                worst = max(by_label, key=by_label.get)
                if by_label[worst] > 0.005 + 1e-12:
                    raise SensitivityError(
                        f"derived weight for {worst} deviates from configured value "
                        f"by {by_label[worst]:.4f}"
                    )
            table.add_category(
                category,
                CategoryWeights(explicit_labels, tuple(values), lam, cr, derived),
            )
        elif derived is not None:
            table.add_category(category, CategoryWeights(labels, derived, lam, cr, derived))
        else:
            raise SensitivityError(f"category {key!r} needs 'comparisons' or 'weights'")
    return table


@dataclass(frozen=True)
class RoomCost:
    room: str
    sensitivity: float
    point_cost: float

    @property
    def total(self) -> float:
        return self.sensitivity + self.point_cost


@dataclass(frozen=True)
class PathCost:
    per_room: tuple[RoomCost, ...]
    total: float


def room_cost(building: AlignedBuilding, weights: WeightTable, room: Resource) -> RoomCost:
    """Zone ordinal plus the weighted influence of every point in the room."""
    zone = security_zone_of(building, room)
    point_cost = 0.0
    for info in sorted(building.points_in(room), key=lambda p: p.resource.iri):
        w = weights.weight(info.category, info.leaf_type)
        point_cost += w * (1 + building.control_fanout(info.resource))
    return RoomCost(room.iri, float(zone.ordinal), point_cost)


def path_cost(building: AlignedBuilding, weights: WeightTable, path) -> PathCost:
    """Total cost of a path: the sum over its rooms; doors contribute zero."""
    per_room = tuple(room_cost(building, weights, r) for r in path.rooms())
    return PathCost(per_room, sum(rc.total for rc in per_room))
