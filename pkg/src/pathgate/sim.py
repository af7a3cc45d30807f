"""Workload simulation: meeting schedules, the per-participant access flow,
and the node-scaling study.

Meetings in each conference room follow a renewal process with exponential
gaps; durations are uniform.  Participants arrive in the half hour before a
meeting and leave in the half hour after it; each one is provisioned ahead
of time (entity if new, rule always) and then opens every door along the
lowest-cost path in order.

The simulation is a single-threaded discrete-event loop, deterministic for
a given seed; the generator family is PCG64 throughout.
"""

from __future__ import annotations

import hashlib
import heapq
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .config import Config, SimProfile
from .ledger import fee_in_usd
from .service import AccessService, ReadPath, SimClock, build_service


class SimError(ValueError):
    pass


@dataclass(frozen=True)
class Meeting:
    room: str  # expanded IRI
    start: float  # sim-time seconds
    duration: float
    participants: int
    host: str


def generate_schedule(config: Config, profile: str, seed: int) -> list[Meeting]:
    """Draw one day of meetings for every conference room."""
    if profile not in config.profiles:
        raise SimError(f"unknown day profile {profile!r}")
    p: SimProfile = config.profiles[profile]
    if not config.hosts:
        raise SimError("no meeting hosts configured")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 101])))
    day_start = config.first_meeting_hour * 3600.0
    day_end = config.last_meeting_hour * 3600.0
    gap_mean = p.meeting_gap_hours * 3600.0
    meetings: list[Meeting] = []
    for room in config.conference_rooms:
        cursor = day_start
        while True:
            start = cursor + (rng.exponential(gap_mean) if gap_mean > 0 else 0.0)
            if gap_mean <= 0 or start > day_end:
                break
            duration = rng.uniform(
                config.meeting_minutes_min * 60.0, config.meeting_minutes_max * 60.0
            )
            meetings.append(
                Meeting(
                    room=room,
                    start=start,
                    duration=duration,
                    participants=int(rng.integers(p.participants_min, p.participants_max + 1)),
                    host=config.hosts[int(rng.integers(0, len(config.hosts)))],
                )
            )
            cursor = start + duration
    meetings.sort(key=lambda m: (m.start, m.room))
    return meetings


@dataclass
class WorkloadResult:
    profile: str
    seed: int
    meetings: int
    participants: int
    requests: int
    new_entities: int
    rules_created: int
    verifies: int
    denials: int
    entity_delays: list[float]
    rule_delays: list[float]
    verify_latencies: list[float]
    entity_fees: list[float]
    rule_fees: list[float]
    occupancy: list[tuple[float, int]]  # step curve: (time, count after change)
    peak_occupancy: int

    @property
    def requests_per_participant(self) -> float:
        return self.requests / self.participants if self.participants else 0.0

    def occupancy_integral(self) -> float:
        """Area under the occupancy step curve (person-seconds)."""
        total = 0.0
        for (t0, c0), (t1, _) in zip(self.occupancy, self.occupancy[1:]):
            total += c0 * (t1 - t0)
        return total


def _visitor_address(seed: int, n: int) -> str:
    return hashlib.sha256(f"visitor-{seed}-{n}".encode()).hexdigest()


def run_workload(
    config: Config,
    profile: str,
    seed: int,
    service: Optional[AccessService] = None,
    schedule: Optional[list[Meeting]] = None,
) -> WorkloadResult:
    """Drive the access service through one simulated day."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 202])))
    clock = SimClock()
    if service is None:
        service = build_service(config, seed=seed, clock=clock)
    else:
        clock = service.clock
    if schedule is None:
        schedule = generate_schedule(config, profile, seed)

    result = WorkloadResult(
        profile=profile, seed=seed, meetings=len(schedule), participants=0,
        requests=0, new_entities=0, rules_created=0, verifies=0, denials=0,
        entity_delays=[], rule_delays=[], verify_latencies=[],
        entity_fees=[], rule_fees=[], occupancy=[(0.0, 0)], peak_occupancy=0,
    )

    known_pool: list[str] = []
    rule_txs: list[str] = []
    entity_txs: list[str] = []
    events: list[tuple[float, int, str, dict]] = []
    counter = 0

    def push(at: float, kind: str, data: dict) -> None:
        nonlocal counter
        heapq.heappush(events, (at, counter, kind, data))
        counter += 1

    arrival_w = config.arrival_window_minutes * 60.0
    day_end_guard = 0.0
    grants: dict[int, dict] = {}  # meeting index -> doors + rule per attendee
    for idx, meeting in enumerate(schedule):
        result.participants += meeting.participants
        end = meeting.start + meeting.duration
        setup = max(0.0, meeting.start - config.setup_lead_hours * 3600.0)
        attendees: list[str] = []
        for _ in range(meeting.participants):
            address = None
            if known_pool and rng.random() < config.known_participant_prob:
                candidates = [a for a in known_pool if a not in attendees]
                if candidates:
                    address = candidates[int(rng.integers(0, len(candidates)))]
            if address is None:
                address = _visitor_address(seed, len(known_pool))
                known_pool.append(address)
            attendees.append(address)
        push(setup, "setup", {"meeting": meeting, "attendees": attendees, "idx": idx})
        for address in attendees:
            arrive = rng.uniform(meeting.start - arrival_w, meeting.start)
            depart = rng.uniform(end, end + arrival_w)
            day_end_guard = max(day_end_guard, depart)
            push(arrive, "arrive", {"address": address, "idx": idx, "depart": depart})

    inside = 0

    def occupancy_change(at: float, delta: int) -> None:
        nonlocal inside
        inside += delta
        result.occupancy.append((at, inside))
        result.peak_occupancy = max(result.peak_occupancy, inside)

    while events:
        at, _, kind, data = heapq.heappop(events)
        clock.set(max(clock(), at))
        if kind == "setup":
            meeting: Meeting = data["meeting"]
            plan = service.plan({"destination": meeting.room})
            if plan["status"] != "ok" or not plan["paths"]:
                raise SimError(f"no path to {meeting.room}")
            best = plan["paths"][0]
            grants[data["idx"]] = {"doors": best["doors"], "rules": {},
                                   "path_id": best["path_id"]}
            # the calendar application provisions invitees one at a time
            t = at
            for address in data["attendees"]:
                t += rng.uniform(5.0, 45.0)
                push(t, "provision", {"meeting": meeting, "idx": data["idx"],
                                      "address": address})
        elif kind == "provision":
            meeting = data["meeting"]
            grant = grants[data["idx"]]
            end = meeting.start + meeting.duration
            response = service.add_entity({
                "delegator": meeting.host,
                "auth": service.keyring[meeting.host],
                "delegate_address": data["address"],
                "start": meeting.start,
                "expiry": day_end_guard + 3600.0,
                "permissions": ["read"],
            })
            if response["status"] == "ok":
                result.requests += 1
                result.new_entities += 1
                result.entity_delays.append(rng.uniform(
                    config.entity_ack_min_s, config.entity_ack_max_s))
                entity_txs.append(response["tx_id"])
                # the rule references the new entity, so wait out its mining
                deadline = clock() + 30 * config.block_interval_mean_s
                while clock() < deadline:
                    if service.net.transactions[response["tx_id"]].mined_at is not None:
                        break
                    step = max(clock() + 1e-6, service.net.next_block_time)
                    clock.set(min(step, deadline))
                    service.net.advance(clock())
            elif response["status"] != "ok-existing":
                result.denials += 1
            rule = service.add_rule({
                "delegator": meeting.host,
                "auth": service.keyring[meeting.host],
                "delegate": data["address"],
                "path_id": grant["path_id"],
                "start": meeting.start,
                "expiry": end + arrival_w + 600.0,
                "order_enforced": True,
            })
            result.requests += 1
            if rule["status"] == "ok":
                result.rules_created += 1
                rule_txs.append(rule["tx_id"])
                grant["rules"][data["address"]] = rule["rule_id"]
            else:
                result.denials += 1
        elif kind == "arrive":
            occupancy_change(at, +1)
            push(data["depart"], "depart", {})
            grant = grants.get(data["idx"], {"doors": [], "rules": {}})
            t = at
            for door in grant["doors"]:
                t += rng.uniform(config.walk_seconds_min, config.walk_seconds_max)
                push(t, "verify", {
                    "address": data["address"],
                    "rule_id": grant["rules"].get(data["address"]),
                    "door": door,
                })
        elif kind == "verify":
            response = service.verify({
                "delegate": data["address"],
                "rule_id": data.get("rule_id") or "",
                "resource": data["door"],
                "action": "open",
            })
            result.requests += 1
            result.verifies += 1
            result.verify_latencies.append(response["latency_s"])
            if response["decision"] != "allow":
                result.denials += 1
        elif kind == "depart":
            occupancy_change(at, -1)

    # settle all pending transactions, then collect mining delays and fees
    service.net.advance(clock() + 20 * config.block_interval_mean_s)
    for tx_id in rule_txs:
        tx = service.net.transactions[tx_id]
        if tx.mined_at is not None:
            result.rule_delays.append(tx.mined_at - tx.submitted_at)
            if tx.status == "applied":
                result.rule_fees.append(fee_in_usd(
                    tx.gas_used, config.gas_price_ether, config.usd_per_ether))
    for tx_id in entity_txs:
        tx = service.net.transactions[tx_id]
        if tx.mined_at is not None and tx.status == "applied":
            result.entity_fees.append(fee_in_usd(
                tx.gas_used, config.gas_price_ether, config.usd_per_ether))
    return result


# --- reporting ----------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(round(float(x), 9))


def summarize(results: list[WorkloadResult]) -> dict:
    def mean(values: Iterable[float]) -> float:
        values = list(values)
        return statistics.fmean(values) if values else 0.0

    return {
        "runs": len(results),
        "requests_per_participant": mean(r.requests_per_participant for r in results),
        "peak_occupancy": mean(r.peak_occupancy for r in results),
        "entity_delay_s": mean(d for r in results for d in r.entity_delays),
        "rule_delay_s": mean(d for r in results for d in r.rule_delays),
        "entity_fee_usd": mean(f for r in results for f in r.entity_fees),
        "rule_fee_usd": mean(f for r in results for f in r.rule_fees),
        "verify_latency_ms": 1000.0 * mean(x for r in results for x in r.verify_latencies),
        "denials": mean(r.denials for r in results),
    }


def write_reports(results: list[WorkloadResult], out_dir) -> None:
    """CSV metrics plus one occupancy curve per seed; bytes are
    deterministic for a given seed list."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    columns = [
        "profile", "seed", "meetings", "participants", "requests",
        "requests_per_participant", "new_entities", "rules", "verifies", "denials",
        "peak_occupancy", "entity_delay_mean_s", "rule_delay_mean_s",
        "entity_fee_usd", "rule_fee_usd", "verify_latency_mean_ms",
    ]
    lines = [",".join(columns)]
    for r in results:
        lines.append(",".join([
            r.profile, str(r.seed), str(r.meetings), str(r.participants),
            str(r.requests), _fmt(r.requests_per_participant), str(r.new_entities),
            str(r.rules_created), str(r.verifies), str(r.denials),
            str(r.peak_occupancy),
            _fmt(statistics.fmean(r.entity_delays) if r.entity_delays else 0.0),
            _fmt(statistics.fmean(r.rule_delays) if r.rule_delays else 0.0),
            _fmt(statistics.fmean(r.entity_fees) if r.entity_fees else 0.0),
            _fmt(statistics.fmean(r.rule_fees) if r.rule_fees else 0.0),
            _fmt(1000.0 * statistics.fmean(r.verify_latencies) if r.verify_latencies else 0.0),
        ]))
    summary = summarize(results)
    lines.append("")
    lines.append("# aggregate")
    for key in sorted(summary):
        lines.append(f"{key},{_fmt(summary[key]) if isinstance(summary[key], float) else summary[key]}")
    (out / "metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for r in results:
        rows = ["time_s,occupancy"]
        rows += [f"{_fmt(t)},{c}" for t, c in r.occupancy]
        (out / f"occupancy_seed{r.seed}.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")


def simulate_days(config: Config, profile: str, seeds: Iterable[int],
                  out_dir=None, event_logs: bool = False) -> list[WorkloadResult]:
    results = []
    for seed in seeds:
        service = build_service(config, seed=seed, clock=SimClock())
        result = run_workload(config, profile, seed, service=service)
        results.append(result)
        if out_dir is not None and event_logs:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            with open(out / f"events_seed{seed}.jsonl", "w", encoding="utf-8") as fh:
                service.net.export_events(fh)
    if out_dir is not None:
        write_reports(results, out_dir)
    return results


# --- scaling study --------------------------------------------------------------


@dataclass(frozen=True)
class ScalingPoint:
    nodes: int
    offered_per_min: float
    throughput_per_min: float
    mean_latency_ms: float


def _serve_fifo(arrivals: np.ndarray, service_time: float) -> np.ndarray:
    """Completion times for a FIFO single server; vectorized recurrence."""
    if arrivals.size == 0:
        return arrivals
    k = np.arange(arrivals.size)
    return np.maximum.accumulate(arrivals - service_time * k) + service_time * (k + 1)


def scaling_study(
    config: Config,
    loads_per_min: Iterable[float],
    node_counts: Iterable[int] = (1, 2, 3, 4),
    seeds: Iterable[int] = (0, 1, 2, 3, 4),
    duration_s: float = 120.0,
) -> list[ScalingPoint]:
    """Throughput and latency of verify-class reads vs offered load.

    Requests arrive Poisson at the offered rate and are spread round-robin
    over the nodes, each serving at the configured per-node rate.
    Throughput counts requests completed inside the window, so it saturates
    at nodes x capacity.
    """
    service_time = 1.0 / config.per_node_capacity_rps
    points = []
    for nodes in node_counts:
        for load in loads_per_min:
            throughputs, latencies = [], []
            for seed in seeds:
                rng = np.random.Generator(np.random.PCG64(
                    np.random.SeedSequence([seed, nodes, int(load * 1000)])))
                rate = load / 60.0
                if rate <= 0:
                    throughputs.append(0.0)
                    continue
                n_est = int(rate * duration_s * 1.35) + 20
                arrivals = np.cumsum(rng.exponential(1.0 / rate, size=n_est))
                arrivals = arrivals[arrivals <= duration_s]
                done = np.empty_like(arrivals)
                all_latencies = []
                for node in range(nodes):
                    node_arrivals = arrivals[node::nodes]
                    node_done = _serve_fifo(node_arrivals, service_time)
                    done[node::nodes] = node_done
                completed = done <= duration_s
                throughputs.append(60.0 * completed.sum() / duration_s)
                if completed.any():
                    all_latencies = (done[completed] - arrivals[completed])
                    latencies.extend(all_latencies.tolist())
            points.append(ScalingPoint(
                nodes=nodes,
                offered_per_min=float(load),
                throughput_per_min=float(statistics.fmean(throughputs)),
                mean_latency_ms=float(1000.0 * statistics.fmean(latencies)) if latencies else 0.0,
            ))
    return points


def write_scaling_csv(points: list[ScalingPoint], out_path) -> None:
    lines = ["nodes,offered_per_min,throughput_per_min,mean_latency_ms"]
    for p in points:
        lines.append(
            f"{p.nodes},{_fmt(p.offered_per_min)},{_fmt(p.throughput_per_min)},"
            f"{_fmt(p.mean_latency_ms)}"
        )
    Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
