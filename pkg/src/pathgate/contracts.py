"""Deterministic state machines for the access-control contracts.

Three logical contracts share one state object:

* archives   - entities (delegation identities) and access rules
* implications - per rule, the ordered door/room list a delegate must follow
* exclusions - per rule, resources denied even when otherwise reachable

State changes go through :meth:`ContractMachine.apply` (called by the ledger
when mining); every operation validates all preconditions before touching
state, so a failed call reverts cleanly.  Run-time verification is a pure
read: it never mutates state and never costs gas.

The per-rule position pointer used for in-order door checks is deliberately
not part of the hashed contract state: it advances on successful ``open``
decisions, which are reads, so keeping it on-chain would either make reads
cost gas or break replay determinism.  The access service owns it (see
:class:`PointerBook`).
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .ledger import TxOutcome, canonical_json, _lp

ENTITY_CREATE_GAS = 6612
RULE_CREATE_GAS = 1531
REVOKE_GAS = 800
BASE_CALL_GAS = 100  # charged when an unknown or malformed call reverts

PERMISSIONS = frozenset({"read", "write", "delegate"})
ACTIONS = frozenset({"open", "read", "write"})

_ADDRESS_RE = re.compile(r"[0-9a-f]{64}")

#: Resolves a destination room to the point resources related to it.
RelatedResources = Callable[[str], set[str]]


def is_address(value) -> bool:
    return isinstance(value, str) and bool(_ADDRESS_RE.fullmatch(value))


@dataclass
class Entity:
    address: str
    created_by: str
    valid: bool
    start: float
    expiry: Optional[float]  # None = open-ended
    permissions: frozenset[str]

    def active_at(self, now: float) -> bool:
        if not self.valid or now < self.start:
            return False
        return self.expiry is None or now <= self.expiry


@dataclass
class AccessRule:
    rule_id: str
    source: str
    target: str
    start: float
    expiry: float
    destination: str
    implications: tuple[str, ...]
    exclusions: frozenset[str]
    order_enforced: bool
    valid: bool

    def active_at(self, now: float) -> bool:
        return self.valid and self.start <= now <= self.expiry


def rule_id_for(
    source: str,
    target: str,
    destination: str,
    start: float,
    expiry: float,
    implications: Iterable[str],
) -> str:
    """Hash identifying a rule: delegator, delegate, destination, window,
    and the ordered resource list, length-prefixed in that order."""
    items = list(implications)
    parts = [
        _lp(source),
        _lp(target),
        _lp(destination),
        _lp(repr(float(start))),
        _lp("" if expiry is None else repr(float(expiry))),
        len(items).to_bytes(4, "big"),
        *(_lp(i) for i in items),
    ]
    return hashlib.sha256(b"".join(parts)).hexdigest()


class ContractState:
    """Entities, rules, and permanent invalidation lists."""

    def __init__(self, genesis_roots: Iterable[str] = (), entrance_doors: Iterable[str] = ()):
        self.entities: dict[str, Entity] = {}
        self.rules: dict[str, AccessRule] = {}
        self.revoked_addresses: set[str] = set()
        self.revoked_rules: set[str] = set()
        self.genesis_roots = frozenset(genesis_roots)
        self.entrance_doors = frozenset(entrance_doors)
        for root in sorted(self.genesis_roots):
            if not is_address(root):
                raise ValueError(f"genesis root is not a valid address: {root!r}")
            self.entities[root] = Entity(
                address=root,
                created_by="genesis",
                valid=True,
                start=0.0,
                expiry=None,
                permissions=PERMISSIONS,
            )

    def canonical(self) -> dict:
        archives = {
            "entities": {
                addr: {
                    "created_by": e.created_by,
                    "valid": e.valid,
                    "start": e.start,
                    "expiry": e.expiry,
                    "permissions": sorted(e.permissions),
                }
                for addr, e in sorted(self.entities.items())
            },
            "rules": {
                rid: {
                    "source": r.source,
                    "target": r.target,
                    "start": r.start,
                    "expiry": r.expiry,
                    "destination": r.destination,
                    "order_enforced": r.order_enforced,
                    "valid": r.valid,
                }
                for rid, r in sorted(self.rules.items())
            },
            "revoked_addresses": sorted(self.revoked_addresses),
            "revoked_rules": sorted(self.revoked_rules),
            "roots": sorted(self.genesis_roots),
        }
        return {
            "archives": archives,
            "implications": {rid: list(r.implications) for rid, r in sorted(self.rules.items())},
            "exclusions": {rid: sorted(r.exclusions) for rid, r in sorted(self.rules.items())},
        }

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.canonical()).encode()).hexdigest()

    def authority_of(self, address: str, now: float, related: RelatedResources) -> Optional[set[str]]:
        """Resources the address may reach; None means unrestricted (root).

        Grounded in the address's valid, not-yet-expired inbound rules:
        their path resources plus the points in every room on those paths
        (physical access to a room implies access to the points in it).
        """
        if address in self.genesis_roots:
            return None
        out: set[str] = set()
        for rule in self.rules.values():
            if rule.target != address or not rule.valid or now > rule.expiry:
                continue
            out.update(rule.implications)
            for iri in rule.implications:
                out.update(related(iri))
        return out


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str
    rule_id: Optional[str] = None

    @property
    def verdict(self) -> str:
        return "allow" if self.allowed else "deny"


def verify_access(
    state: ContractState,
    target: str,
    rule_id: str,
    resource: str,
    action: str,
    now: float,
    pointer: int = 0,
    related: Optional[RelatedResources] = None,
) -> Decision:
    """Decide an access request; total, read-only, and gas-free.

    Checks run in order: entity validity and window, rule validity and
    window, exclusions, path membership (in pointer order when the rule
    enforces one), and finally the points related to the rule's destination
    gated by the entity's read/write permissions.
    """
    if action not in ACTIONS:
        return Decision(False, "unknown-action", rule_id)
    entity = state.entities.get(target)
    if entity is None:
        return Decision(False, "unknown-entity", rule_id)
    if not entity.valid:
        return Decision(False, "entity-revoked", rule_id)
    if now < entity.start:
        return Decision(False, "entity-not-yet-valid", rule_id)
    if entity.expiry is not None and now > entity.expiry:
        return Decision(False, "entity-expired", rule_id)
    rule = state.rules.get(rule_id)
    if rule is None:
        return Decision(False, "unknown-rule", rule_id)
    if rule.target != target:
        return Decision(False, "rule-target-mismatch", rule_id)
    if not rule.valid:
        return Decision(False, "rule-revoked", rule_id)
    if now < rule.start:
        return Decision(False, "rule-not-yet-valid", rule_id)
    if now > rule.expiry:
        return Decision(False, "rule-expired", rule_id)
    if resource in rule.exclusions:
        return Decision(False, "excluded", rule_id)
    if resource in rule.implications:
        if not rule.order_enforced:
            return Decision(True, "path-member", rule_id)
        if action == "open" and 0 <= pointer < len(rule.implications) \
                and rule.implications[pointer] == resource:
            return Decision(True, "in-order", rule_id)
        return Decision(False, "out-of-order", rule_id)
    related_set = related(rule.destination) if related is not None else set()
    if resource in related_set:
        if action in ("read", "write") and action in entity.permissions:
            return Decision(True, "permitted", rule_id)
        return Decision(False, "permission", rule_id)
    return Decision(False, "out-of-scope", rule_id)


class PointerBook:
    """Service-local per-rule walk positions.

    ``advance`` moves past the just-opened element and any following
    non-door entries, so rooms are entered implicitly with the door that
    leads into them; after the last door the pointer rests at the list
    length.  Pointers never move backwards.
    """

    def __init__(self):
        self._pointers: dict[str, int] = {}

    def get(self, rule_id: str) -> int:
        return self._pointers.get(rule_id, 0)

    def advance(self, rule: AccessRule, resource: str, is_door: Callable[[str], bool]) -> int:
        current = self.get(rule.rule_id)
        if current >= len(rule.implications) or rule.implications[current] != resource:
            raise ValueError("pointer advance without a matching in-order decision")
        nxt = current + 1
        while nxt < len(rule.implications) and not is_door(rule.implications[nxt]):
            nxt += 1
        self._pointers[rule.rule_id] = nxt
        return nxt

    def snapshot(self) -> dict[str, int]:
        return dict(self._pointers)

    def restore(self, data: dict[str, int]) -> None:
        self._pointers = {str(k): int(v) for k, v in data.items()}


class ContractMachine:
    """Applies contract calls for the ledger and serves read queries."""

    def __init__(
        self,
        genesis_roots: Iterable[str] = (),
        entrance_doors: Iterable[str] = (),
        related: Optional[RelatedResources] = None,
    ):
        self.state = ContractState(genesis_roots, entrance_doors)
        self.related: RelatedResources = related or (lambda destination: set())
        self._digest_cache: Optional[str] = None

    # -- ledger protocol -----------------------------------------------------

    def state_digest(self) -> str:
        # the state only changes inside apply(), which clears the cache
        if self._digest_cache is None:
            self._digest_cache = self.state.digest()
        return self._digest_cache

    def apply(self, payload: dict, now: float) -> TxOutcome:
        op = payload.get("op")
        handler = {
            "create_entity": self._create_entity,
            "create_rule": self._create_rule,
            "revoke_rule": self._revoke_rule,
            "revoke_entity": self._revoke_entity,
        }.get(op)
        if handler is None:
            return TxOutcome(BASE_CALL_GAS, "reverted", {"error": f"unknown op {op!r}"})
        try:
            outcome = handler(payload, now)
            self._digest_cache = None
            return outcome
        except _Reject as rej:
            return TxOutcome(rej.gas, "reverted", {"error": rej.reason})

    def dry_run(self, payload: dict, now: float) -> TxOutcome:
        """Apply against a throwaway copy of the state; self is untouched."""
        import copy

        saved_state, saved_cache = self.state, self._digest_cache
        self.state = copy.deepcopy(saved_state)
        try:
            return self.apply(payload, now)
        finally:
            self.state, self._digest_cache = saved_state, saved_cache

    def read(self, query: dict, now: float) -> dict:
        op = query.get("op")
        if op == "get_entity":
            e = self.state.entities.get(query.get("address", ""))
            if e is None:
                return {"found": False}
            return {
                "found": True,
                "address": e.address,
                "created_by": e.created_by,
                "valid": e.valid,
                "start": e.start,
                "expiry": e.expiry,
                "permissions": sorted(e.permissions),
            }
        if op == "get_rule":
            r = self.state.rules.get(query.get("rule_id", ""))
            if r is None:
                return {"found": False}
            return {
                "found": True,
                "rule_id": r.rule_id,
                "source": r.source,
                "target": r.target,
                "start": r.start,
                "expiry": r.expiry,
                "destination": r.destination,
                "implications": list(r.implications),
                "exclusions": sorted(r.exclusions),
                "order_enforced": r.order_enforced,
                "valid": r.valid,
            }
        if op == "verify":
            decision = verify_access(
                self.state,
                target=query.get("target", ""),
                rule_id=query.get("rule_id", ""),
                resource=query.get("resource", ""),
                action=query.get("action", ""),
                now=now,
                pointer=int(query.get("pointer", 0)),
                related=self.related,
            )
            return {"decision": decision.verdict, "reason": decision.reason}
        raise ValueError(f"malformed read query: unknown op {op!r}")

    # -- operations -----------------------------------------------------------

    def _caller(self, payload: dict, now: float, gas: int) -> Entity:
        caller = payload.get("caller")
        entity = self.state.entities.get(caller) if is_address(caller) else None
        if entity is None:
            raise _Reject(gas, "unknown caller entity")
        if not entity.valid:
            raise _Reject(gas, "caller entity revoked")
        if not entity.active_at(now):
            raise _Reject(gas, "caller entity outside its validity window")
        if "delegate" not in entity.permissions:
            raise _Reject(gas, "caller lacks delegate permission")
        return entity

    def _create_entity(self, payload: dict, now: float) -> TxOutcome:
        gas = ENTITY_CREATE_GAS
        caller = self._caller(payload, now, gas)
        address = payload.get("address")
        if not is_address(address):
            raise _Reject(gas, "malformed address")
        start, expiry = _window(payload, gas, expiry_required=False)
        permissions = payload.get("permissions")
        if not isinstance(permissions, list) or not set(permissions) <= PERMISSIONS:
            raise _Reject(gas, "malformed permission set")
        granted = frozenset(permissions)
        if not granted <= caller.permissions:
            raise _Reject(gas, "cannot grant permissions the caller does not hold")
        if address in self.state.revoked_addresses:
            raise _Reject(gas, "address was revoked and cannot be reused")
        existing = self.state.entities.get(address)
        if existing is not None and existing.valid and (
            existing.expiry is None or now <= existing.expiry
        ):
            # an expired record no longer blocks the address; revoked ones do
            raise _Reject(gas, "address already has an entity")
        self.state.entities[address] = Entity(
            address=address,
            created_by=caller.address,
            valid=True,
            start=start,
            expiry=expiry,
            permissions=granted,
        )
        return TxOutcome(gas, "applied", {"address": address})

    def _create_rule(self, payload: dict, now: float) -> TxOutcome:
        gas = RULE_CREATE_GAS
        caller = self._caller(payload, now, gas)
        target = payload.get("target")
        if not is_address(target):
            raise _Reject(gas, "malformed target address")
        target_entity = self.state.entities.get(target)
        if target_entity is None or not target_entity.valid:
            raise _Reject(gas, "unknown or revoked target entity")
        if not target_entity.permissions <= caller.permissions:
            raise _Reject(gas, "target permissions exceed the caller's")
        start, expiry = _window(payload, gas, expiry_required=True)
        destination = payload.get("destination")
        implications = payload.get("implications")
        exclusions = payload.get("exclusions", [])
        if not isinstance(destination, str) or not destination:
            raise _Reject(gas, "malformed destination")
        if (
            not isinstance(implications, list)
            or not implications
            or not all(isinstance(i, str) and i for i in implications)
        ):
            raise _Reject(gas, "malformed implications list")
        if implications[-1] != destination:
            raise _Reject(gas, "implications must conclude with the destination")
        if self.state.entrance_doors and implications[0] not in self.state.entrance_doors:
            raise _Reject(gas, "implications must begin at the building entrance")
        if not isinstance(exclusions, list) or not all(isinstance(x, str) for x in exclusions):
            raise _Reject(gas, "malformed exclusions list")
        if set(exclusions) & set(implications):
            raise _Reject(gas, "exclusions overlap the implications list")
        order_enforced = payload.get("order_enforced", True)
        if not isinstance(order_enforced, bool):
            raise _Reject(gas, "malformed order_enforced flag")
        rid = rule_id_for(caller.address, target, destination, start, expiry, implications)
        if rid in self.state.revoked_rules:
            raise _Reject(gas, "rule was revoked and cannot be recreated")
        if rid in self.state.rules:
            raise _Reject(gas, "duplicate access rule")
        authority = self.state.authority_of(caller.address, now, self.related)
        if authority is not None:
            missing = [i for i in implications if i not in authority]
            if missing:
                raise _Reject(gas, f"caller has no authority over {missing[0]}")
        self.state.rules[rid] = AccessRule(
            rule_id=rid,
            source=caller.address,
            target=target,
            start=start,
            expiry=expiry,
            destination=destination,
            implications=tuple(implications),
            exclusions=frozenset(exclusions),
            order_enforced=order_enforced,
            valid=True,
        )
        return TxOutcome(gas, "applied", {"rule_id": rid})

    def _revoke_rule(self, payload: dict, now: float) -> TxOutcome:
        gas = REVOKE_GAS
        caller = payload.get("caller")
        rule = self.state.rules.get(payload.get("rule_id", ""))
        if rule is None:
            raise _Reject(gas, "unknown rule")
        if rule.source != caller:
            raise _Reject(gas, "only the rule's source may revoke it")
        if not rule.valid:
            raise _Reject(gas, "rule already invalid")
        rule.valid = False
        self.state.revoked_rules.add(rule.rule_id)
        return TxOutcome(gas, "applied", {"rule_id": rule.rule_id})

    def _revoke_entity(self, payload: dict, now: float) -> TxOutcome:
        gas = REVOKE_GAS
        caller = payload.get("caller")
        if caller not in self.state.genesis_roots:
            raise _Reject(gas, "only a genesis root may revoke entities")
        entity = self.state.entities.get(payload.get("address", ""))
        if entity is None:
            raise _Reject(gas, "unknown entity")
        if not entity.valid:
            raise _Reject(gas, "entity already invalid")
        entity.valid = False
        self.state.revoked_addresses.add(entity.address)
        return TxOutcome(gas, "applied", {"address": entity.address})


class _Reject(Exception):
    def __init__(self, gas: int, reason: str):
        super().__init__(reason)
        self.gas = gas
        self.reason = reason


def _window(payload: dict, gas: int, expiry_required: bool) -> tuple[float, Optional[float]]:
    start = payload.get("start")
    expiry = payload.get("expiry")
    if not isinstance(start, (int, float)) or isinstance(start, bool):
        raise _Reject(gas, "malformed start time")
    if expiry is None:
        if expiry_required:
            raise _Reject(gas, "expiry time is required")
        return float(start), None
    if not isinstance(expiry, (int, float)) or isinstance(expiry, bool):
        raise _Reject(gas, "malformed expiry time")
    if float(start) >= float(expiry):
        raise _Reject(gas, "start must precede expiry")
    return float(start), float(expiry)
