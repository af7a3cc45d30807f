"""Configuration loading and fail-fast validation.

The config file is TOML or JSON (picked by extension); every referenced
file must exist and parse before any command runs.  Paths beginning with
``builtin:`` resolve to the data files shipped inside the package.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .building import AlignedBuilding, load_building, load_correspondence
from .sensitivity import WeightTable, load_weight_table

ENV_VAR = "PATHGATE_CONFIG"


class ConfigError(ValueError):
    pass


def _data_path(name: str) -> Path:
    return Path(str(resources.files("pathgate") / "data" / name))


def _resolve(value: str, base: Path) -> Path:
    if value.startswith("builtin:"):
        path = _data_path(value[len("builtin:"):])
    else:
        path = Path(value)
        if not path.is_absolute():
            path = base / path
    if not path.exists():
        raise ConfigError(f"referenced file does not exist: {path}")
    return path


def _deep_update(dst: dict, src: dict) -> dict:
    for key, value in src.items():
        if isinstance(value, dict) and isinstance(dst.get(key), dict):
            _deep_update(dst[key], value)
        else:
            dst[key] = value
    return dst


@dataclass
class SimProfile:
    meeting_gap_hours: float
    participants_min: int
    participants_max: int


@dataclass
class Config:
    building_file: Path
    taxonomy_file: Path
    zones_file: Path
    weights_file: Path
    keyring_file: Path
    correspondence_file: Optional[Path] = None
    weight_precision: Optional[int] = 3
    # ledger
    nodes: int = 2
    block_interval_mean_s: float = 13.0
    per_node_capacity_rps: float = 50.0
    gas_price_ether: float = 2e-8
    usd_per_ether: float = 143.68
    # service
    entrance_room: str = "building1:MainEntrance"
    lead_minutes: float = 30.0
    genesis_roots: tuple[str, ...] = ()
    # sim
    conference_rooms: tuple[str, ...] = ()
    hosts: tuple[str, ...] = ()
    first_meeting_hour: float = 8.0
    last_meeting_hour: float = 18.0
    meeting_minutes_min: float = 60.0
    meeting_minutes_max: float = 150.0
    arrival_window_minutes: float = 30.0
    walk_seconds_min: float = 15.0
    walk_seconds_max: float = 45.0
    entity_ack_min_s: float = 0.6
    entity_ack_max_s: float = 1.4
    setup_lead_hours: float = 2.0
    known_participant_prob: float = 0.75
    profiles: dict[str, SimProfile] = field(default_factory=dict)

    @property
    def lead_seconds(self) -> float:
        return self.lead_minutes * 60.0

    # -- loading of referenced artifacts ------------------------------------

    def load_zone_levels(self) -> dict[str, str]:
        with open(self.zones_file, encoding="utf-8") as fh:
            raw = json.load(fh)
        zones = raw.get("zones")
        if not isinstance(zones, dict):
            raise ConfigError(f"{self.zones_file}: expected a top-level 'zones' object")
        return {str(k): str(v) for k, v in zones.items()}

    def load_keyring(self) -> dict[str, str]:
        with open(self.keyring_file, encoding="utf-8") as fh:
            raw = json.load(fh)
        keys = raw.get("keys")
        if not isinstance(keys, dict):
            raise ConfigError(f"{self.keyring_file}: expected a top-level 'keys' object")
        return {str(k): str(v) for k, v in keys.items()}

    def load_building(self) -> AlignedBuilding:
        correspondence = (
            load_correspondence(self.correspondence_file) if self.correspondence_file else None
        )
        try:
            return load_building(
                self.building_file,
                self.taxonomy_file,
                self.load_zone_levels(),
                correspondence,
            )
        except ValueError as exc:
            raise ConfigError(f"building model failed to load: {exc}") from exc

    def load_weights(self) -> WeightTable:
        try:
            return load_weight_table(self.weights_file, self.weight_precision)
        except ValueError as exc:
            raise ConfigError(f"weights failed to load: {exc}") from exc

    def validate(self) -> None:
        """Parse everything the config references; raise on the first error."""
        building = self.load_building()
        self.load_weights()
        keyring = self.load_keyring()
        for root in self.genesis_roots:
            if root not in keyring:
                raise ConfigError(f"genesis root missing from keyring: {root}")
        entrance = building.graph.expand(self.entrance_room)
        if building.kind_of(entrance) is None:
            raise ConfigError(f"entrance room not in model: {self.entrance_room}")
        for room in self.conference_rooms:
            if building.kind_of(building.graph.expand(room)) is None:
                raise ConfigError(f"conference room not in model: {room}")


def _read_raw(path: Path) -> dict:
    try:
        if path.suffix == ".json":
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def load_config(path: Optional[str] = None) -> Config:
    """Build a Config from the defaults plus an optional override file.

    The override comes from ``path`` or the PATHGATE_CONFIG environment
    variable; values merge section by section over the shipped defaults.
    """
    raw = _read_raw(_data_path("pathgate.toml"))
    base = _data_path("pathgate.toml").parent
    source = path or os.environ.get(ENV_VAR)
    if source:
        override_path = Path(source)
        if not override_path.exists():
            raise ConfigError(f"config file does not exist: {override_path}")
        _deep_update(raw, _read_raw(override_path))
        base = override_path.parent

    model = raw.get("model", {})
    weights = raw.get("weights", {})
    ledger = raw.get("ledger", {})
    service = raw.get("service", {})
    sim = raw.get("sim", {})
    try:
        profiles = {
            name: SimProfile(
                meeting_gap_hours=float(p["meeting_gap_hours"]),
                participants_min=int(p["participants_min"]),
                participants_max=int(p["participants_max"]),
            )
            for name, p in sim.get("profiles", {}).items()
        }
        cfg = Config(
            building_file=_resolve(model["building"], base),
            taxonomy_file=_resolve(model["taxonomy"], base),
            zones_file=_resolve(model["zones"], base),
            weights_file=_resolve(weights["file"], base),
            keyring_file=_resolve(service["keyring"], base),
            correspondence_file=(
                _resolve(model["correspondence"], base) if model.get("correspondence") else None
            ),
            weight_precision=weights.get("precision", 3),
            nodes=int(ledger.get("nodes", 2)),
            block_interval_mean_s=float(ledger.get("block_interval_mean_s", 13.0)),
            per_node_capacity_rps=float(ledger.get("per_node_capacity_rps", 50.0)),
            gas_price_ether=float(ledger.get("gas_price_ether", 2e-8)),
            usd_per_ether=float(ledger.get("usd_per_ether", 143.68)),
            entrance_room=service.get("entrance_room", "building1:MainEntrance"),
            lead_minutes=float(service.get("lead_minutes", 30.0)),
            genesis_roots=tuple(service.get("genesis_roots", ())),
            conference_rooms=tuple(sim.get("conference_rooms", ())),
            hosts=tuple(sim.get("hosts", ())),
            first_meeting_hour=float(sim.get("first_meeting_hour", 8.0)),
            last_meeting_hour=float(sim.get("last_meeting_hour", 18.0)),
            meeting_minutes_min=float(sim.get("meeting_minutes_min", 60.0)),
            meeting_minutes_max=float(sim.get("meeting_minutes_max", 150.0)),
            arrival_window_minutes=float(sim.get("arrival_window_minutes", 30.0)),
            walk_seconds_min=float(sim.get("walk_seconds_min", 15.0)),
            walk_seconds_max=float(sim.get("walk_seconds_max", 45.0)),
            entity_ack_min_s=float(sim.get("entity_ack_min_s", 0.6)),
            entity_ack_max_s=float(sim.get("entity_ack_max_s", 1.4)),
            setup_lead_hours=float(sim.get("setup_lead_hours", 2.0)),
            known_participant_prob=float(sim.get("known_participant_prob", 0.75)),
            profiles=profiles,
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    return cfg
