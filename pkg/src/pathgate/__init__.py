"""Building access control over an aligned spatial/equipment RDF model,
with smart-contract style permissions on a simulated ledger."""

from .building import AlignedBuilding, Kind, ModelError, Resource, align, load_building
from .config import Config, ConfigError, load_config
from .contracts import (
    AccessRule,
    ContractMachine,
    ContractState,
    Decision,
    Entity,
    PointerBook,
    rule_id_for,
    verify_access,
)
from .ledger import Block, LedgerNetwork, Transaction, fee_in_usd, replay
from .planner import IndoorPath, PathSearch, enumerate_paths, rank_paths
from .rdf import Literal, Triple, TripleGraph, parse_turtle, serialize_turtle, subclass_closure
from .sensitivity import (
    PairwiseMatrix,
    PathCost,
    SecurityZone,
    WeightTable,
    ahp_weights,
    load_weight_table,
    path_cost,
    room_cost,
)
from .service import AccessService, SimClock, build_service, make_server
from .sim import generate_schedule, run_workload, scaling_study, simulate_days

__version__ = "0.1.0"
