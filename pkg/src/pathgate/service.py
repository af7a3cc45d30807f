"""The access-control service: JSON endpoints for adding entities, adding
access rules, verifying access, and revocation, plus path planning support.

Every endpoint is callable in-process (``add_entity`` and friends take and
return plain dicts), and the same handlers back the HTTP server started by
``serve``.  State-changing requests are authenticated against the keyring
and serialized into the ledger's single command stream; verify requests are
read-only, unauthenticated (the bearer's address is asserted by whichever
scanner produced the request), and may run concurrently.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

from .building import AlignedBuilding
from .config import Config
from .contracts import ContractMachine, PointerBook, rule_id_for, verify_access
from .ledger import LedgerNetwork, canonical_json
from .planner import IndoorPath, RankedPath, enumerate_paths, rank_paths
from .sensitivity import WeightTable


class SimClock:
    """Settable clock; the simulation and CLI drive time explicitly."""

    def __init__(self, start: float = 0.0):
        self.time = start

    def __call__(self) -> float:
        return self.time

    def set(self, t: float) -> None:
        if t < self.time:
            raise ValueError("clock cannot move backwards")
        self.time = t


class ReadPath:
    """Fixed-rate per-node processing of read requests.

    Requests go to nodes round-robin; each node serves one request at a
    time at the configured rate.  Reads bypass mining entirely, so their
    latency does not depend on the transaction queues.
    """

    def __init__(self, nodes: int, per_node_capacity: float):
        self.nodes = nodes
        self.service_time = 1.0 / per_node_capacity
        self._busy_until = [0.0] * nodes
        self._counter = 0

    def request(self, now: float) -> float:
        """Register one read arriving at ``now``; returns its latency."""
        node = self._counter % self.nodes
        self._counter += 1
        start = max(now, self._busy_until[node])
        done = start + self.service_time
        self._busy_until[node] = done
        return done - now


def _error(code: str, message: str) -> dict:
    return {"status": "error", "error": {"code": code, "message": message}}


class AccessService:
    """Wires the building model, planner, contracts, and ledger together."""

    def __init__(
        self,
        building: AlignedBuilding,
        weights: WeightTable,
        config: Config,
        seed: int = 0,
        clock: Optional[SimClock] = None,
        verify_log_path=None,
    ):
        self.building = building
        self.weights = weights
        self.config = config
        self.clock = clock or SimClock()
        self.keyring = dict(config.load_keyring())
        self.entrance = building.graph.expand(config.entrance_room)
        entrance_doors = {
            d.iri for d in building.adjacent_resources(building.resource(self.entrance))
            if building.is_door(d.iri)
        }
        self.machine = ContractMachine(
            genesis_roots=config.genesis_roots,
            entrance_doors=entrance_doors,
            related=self._related_resources,
        )
        self.net = LedgerNetwork(
            self.machine,
            nodes=config.nodes,
            block_interval_mean=config.block_interval_mean_s,
            per_node_capacity=config.per_node_capacity_rps,
            seed=seed,
        )
        for root in config.genesis_roots:
            self.net.register_account(root)
        self.pointers = PointerBook()
        self.read_path = ReadPath(config.nodes, config.per_node_capacity_rps)
        self.plan_cache: dict[str, RankedPath] = {}
        self.chosen_path: Optional[str] = None
        self.verify_log: list[dict] = []
        self._verify_log_path = verify_log_path
        self._lock = threading.Lock()

    # -- helpers ---------------------------------------------------------------

    def _related_resources(self, destination: str) -> set[str]:
        if not self.building.is_room(destination):
            return set()
        room = self.building.resource(destination)
        return {info.resource.iri for info in self.building.points_in(room)}

    def _authenticate(self, body: dict, field: str) -> Optional[dict]:
        sender = body.get(field)
        secret = body.get("auth")
        if not isinstance(sender, str) or self.keyring.get(sender) is None:
            return _error("auth", f"unknown {field}")
        if self.keyring[sender] != secret:
            return _error("auth", "bad credentials")
        return None

    def register_key(self, address: str, secret: str) -> None:
        """Admit a newly created entity to the signing keyring."""
        self.keyring[address] = secret

    def _submit(self, sender: str, payload: dict) -> dict:
        now = self.clock()
        self.net.advance(now)
        outcome = self.machine.dry_run(payload, now)
        if outcome.status == "reverted":
            return {"status": "denied", "reason": outcome.result.get("error", "rejected")}
        receipt = self.net.submit(sender, payload, now)
        return {"status": "ok", "tx_id": receipt.tx_id, "node": receipt.node}

    # -- endpoints ---------------------------------------------------------------

    def add_entity(self, body: dict) -> dict:
        """Create an identity for a delegate unless one already exists."""
        err = self._authenticate(body, "delegator")
        if err:
            return err
        address = body.get("delegate_address")
        if not isinstance(address, str):
            return _error("request", "delegate_address is required")
        if body.get("expiry") is None:
            return _error("request", "the expiry time must be provided")
        existing = self.net.read_state({"op": "get_entity", "address": address})
        if (
            existing.get("found")
            and existing.get("valid")
            and (existing.get("expiry") is None or self.clock() <= existing["expiry"])
        ):
            return {"status": "ok-existing", "address": address}
        payload = {
            "op": "create_entity",
            "caller": body["delegator"],
            "address": address,
            "start": _lead_adjusted(body.get("start"), self.config.lead_seconds),
            "expiry": body.get("expiry"),
            "permissions": body.get("permissions", ["read"]),
        }
        response = self._submit(body["delegator"], payload)
        if response["status"] == "ok":
            self.net.register_account(address)
            response["address"] = address
        return response

    def plan(self, body: dict) -> dict:
        """Rank the acyclic paths to a destination and cache them for reuse."""
        destination = body.get("destination")
        origin = body.get("origin") or self.config.entrance_room
        try:
            origin_r = self.building.resource(self.building.graph.expand(origin))
            dest_r = self.building.resource(self.building.graph.expand(destination or ""))
            search = enumerate_paths(
                self.building, origin_r, dest_r,
                max_paths=int(body.get("max_paths", 64)),
                max_depth=int(body.get("max_depth", 32)),
            )
        except ValueError as exc:
            return _error("plan", str(exc))
        if not search.paths:
            return {"status": "ok", "paths": [], "truncated": search.truncated}
        ranked = rank_paths(search.paths, self.weights, self.building)
        paths = []
        for rp in ranked:
            path_id = hashlib.sha256("\n".join(rp.path.iris()).encode()).hexdigest()[:16]
            self.plan_cache[path_id] = rp
            paths.append({
                "path_id": path_id,
                "sequence": list(rp.path.iris()),
                "rooms": [r.iri for r in rp.path.rooms()],
                "doors": [d.iri for d in rp.path.doors()],
                "total_cost": rp.cost.total,
                "per_room": [
                    {"room": rc.room, "sensitivity": rc.sensitivity, "points": rc.point_cost}
                    for rc in rp.cost.per_room
                ],
                "zone_order_warning": rp.zone_order_warning,
            })
        return {"status": "ok", "paths": paths, "truncated": search.truncated}

    def add_rule(self, body: dict) -> dict:
        """Turn a planned path into an access rule for a delegate."""
        err = self._authenticate(body, "delegator")
        if err:
            return err
        ranked = self.plan_cache.get(body.get("path_id", ""))
        if ranked is None:
            return _error("request", "unknown path_id; plan a path first")
        target = body.get("delegate")
        if not isinstance(target, str):
            return _error("request", "delegate is required")
        start = _lead_adjusted(body.get("start"), self.config.lead_seconds)
        expiry = body.get("expiry")
        implications = list(ranked.path.iris()[1:])
        destination = ranked.path.destination.iri
        payload = {
            "op": "create_rule",
            "caller": body["delegator"],
            "target": target,
            "destination": destination,
            "implications": implications,
            "exclusions": [self.building.graph.expand(x) for x in body.get("exclusions", [])],
            "start": start,
            "expiry": expiry,
            "order_enforced": bool(body.get("order_enforced", True)),
        }
        response = self._submit(body["delegator"], payload)
        if response["status"] == "ok":
            response["rule_id"] = rule_id_for(
                body["delegator"], target, destination, start, expiry, implications
            )
        return response

    def verify(self, body: dict) -> dict:
        """Decide an access request against the current mined state.

        Allowed in-order ``open`` decisions advance the rule's pointer;
        every request is appended to the verify log.
        """
        now = self.clock()
        self.net.advance(now)
        target = str(body.get("delegate", ""))
        rule_id = str(body.get("rule_id", ""))
        resource = self.building.graph.expand(str(body.get("resource", "")))
        action = str(body.get("action", ""))
        latency = self.read_path.request(now)
        decision = verify_access(
            self.machine.state,
            target=target,
            rule_id=rule_id,
            resource=resource,
            action=action,
            now=now,
            pointer=self.pointers.get(rule_id),
            related=self._related_resources,
        )
        if decision.allowed and decision.reason == "in-order":
            rule = self.machine.state.rules[rule_id]
            self.pointers.advance(rule, resource, self.building.is_door)
        record = {
            "time": now,
            "delegate": target,
            "rule_id": rule_id,
            "resource": resource,
            "action": action,
            "decision": decision.verdict,
            "reason": decision.reason,
        }
        self.verify_log.append(record)
        if self._verify_log_path is not None:
            with open(self._verify_log_path, "a", encoding="utf-8") as fh:
                fh.write(canonical_json(record) + "\n")
        return {
            "status": "ok",
            "decision": decision.verdict,
            "reason": decision.reason,
            "latency_s": latency,
        }

    def revoke(self, body: dict) -> dict:
        """Invalidate a rule (by its source) or an entity (by a root)."""
        err = self._authenticate(body, "caller")
        if err:
            return err
        if body.get("rule_id"):
            payload = {"op": "revoke_rule", "caller": body["caller"],
                       "rule_id": body["rule_id"]}
        elif body.get("address"):
            payload = {"op": "revoke_entity", "caller": body["caller"],
                       "address": body["address"]}
        else:
            return _error("request", "provide rule_id or address")
        return self._submit(body["caller"], payload)

    # -- persistence -----------------------------------------------------------

    def snapshot(self) -> dict:
        file_keys = self.config.load_keyring()
        return {
            "version": 1,
            "ledger": self.net.to_snapshot(),
            "pointers": self.pointers.snapshot(),
            "plan_cache": {pid: list(rp.path.iris()) for pid, rp in self.plan_cache.items()},
            "extra_keys": {a: s for a, s in self.keyring.items() if a not in file_keys},
            "chosen_path": self.chosen_path,
            "clock": self.clock(),
        }

    def restore(self, data: dict) -> None:
        """Rebuild ledger, pointers, plan cache, and keyring additions.

        The ledger restore replays the recorded chain, so a snapshot whose
        state roots do not recompute is rejected.
        """
        def machine_factory():
            return ContractMachine(
                genesis_roots=self.config.genesis_roots,
                entrance_doors=self.machine.state.entrance_doors,
                related=self._related_resources,
            )

        self.net = LedgerNetwork.from_snapshot(data["ledger"], machine_factory)
        self.machine = self.net.machine
        self.pointers.restore(data.get("pointers", {}))
        self.keyring.update(data.get("extra_keys", {}))
        self.plan_cache = {}
        for pid, iris in data.get("plan_cache", {}).items():
            path = IndoorPath(tuple(self.building.resource(iri) for iri in iris))
            self.plan_cache[pid] = rank_paths([path], self.weights, self.building)[0]
        self.chosen_path = data.get("chosen_path")
        self.clock.set(max(self.clock(), data.get("clock", 0.0)))

    # -- http ----------------------------------------------------------------

    ROUTES = {
        "/entities": "add_entity",
        "/rules": "add_rule",
        "/verify": "verify",
        "/revoke": "revoke",
        "/plan": "plan",
    }

    def handle(self, route: str, body: dict) -> dict:
        method = self.ROUTES.get(route)
        if method is None:
            return _error("route", f"unknown endpoint {route}")
        if route == "/verify":
            return getattr(self, method)(body)
        with self._lock:
            return getattr(self, method)(body)


def _lead_adjusted(start, lead_seconds: float):
    if isinstance(start, (int, float)) and not isinstance(start, bool):
        return float(start) - lead_seconds
    return start


def build_service(config: Config, seed: int = 0, clock: Optional[SimClock] = None,
                  verify_log_path=None) -> AccessService:
    return AccessService(
        config.load_building(), config.load_weights(), config,
        seed=seed, clock=clock, verify_log_path=verify_log_path,
    )


class _Handler(BaseHTTPRequestHandler):
    service: AccessService = None  # set by make_server

    def do_POST(self):  # noqa: N802  (stdlib naming)
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
            if not isinstance(body, dict):
                raise ValueError("body must be a JSON object")
        except ValueError as exc:
            self._reply(400, _error("request", f"bad JSON body: {exc}"))
            return
        response = self.service.handle(self.path, body)
        code = 200
        if response.get("status") == "error":
            code = {"route": 404, "auth": 403}.get(response["error"]["code"], 400)
        self._reply(code, response)

    def _reply(self, code: int, payload: dict) -> None:
        raw = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, fmt, *args):  # quiet by default
        pass


def make_server(service: AccessService, host: str = "127.0.0.1", port: int = 0):
    """HTTP server over the service; the caller controls its lifecycle.

    In server mode the clock follows wall time: a ticker advances the
    ledger so mining happens while the server is up.
    """
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    t0 = time.monotonic()
    origin = service.clock()

    stop = threading.Event()

    def tick():
        while not stop.wait(0.25):
            now = origin + (time.monotonic() - t0)
            with service._lock:
                if now > service.clock():
                    service.clock.set(now)
                    service.net.advance(now)

    ticker = threading.Thread(target=tick, daemon=True)
    server.pathgate_ticker = ticker  # type: ignore[attr-defined]
    server.pathgate_stop = stop  # type: ignore[attr-defined]
    ticker.start()
    return server
