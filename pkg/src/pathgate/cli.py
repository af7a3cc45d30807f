"""Command-line entry point.

Commands map onto the service endpoints plus model/weights inspection and
the simulators.  State-changing commands persist the ledger and service
state to a JSON file between invocations and block until their transaction
mines, mirroring the interactive flow.

Exit codes: 0 success (including a deny decision), 1 usage error,
2 configuration or parse error, 3 contract rejection.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import Config, ConfigError, load_config
from .sensitivity import ZONE_ORDINALS
from .service import AccessService, SimClock, build_service, make_server
from .sim import (
    generate_schedule,
    run_workload,
    scaling_study,
    simulate_days,
    write_scaling_csv,
)

EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_CONTRACT = 3


class ContractRejected(Exception):
    pass


def _echo_json(obj) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


def _fail(code: int, kind: str, message: str) -> None:
    print(json.dumps({"error": {"code": kind, "message": message}}), file=sys.stderr)
    sys.exit(code)


class State:
    def __init__(self, config_path, state_path, as_json):
        self.config_path = config_path
        self.state_path = Path(state_path)
        self.as_json = as_json
        self._config = None
        self._service = None

    @property
    def config(self) -> Config:
        if self._config is None:
            self._config = load_config(self.config_path)
        return self._config

    @property
    def service(self) -> AccessService:
        if self._service is None:
            svc = build_service(self.config, clock=SimClock())
            if self.state_path.exists():
                with open(self.state_path, encoding="utf-8") as fh:
                    svc.restore(json.load(fh))
            self._service = svc
        return self._service

    def save(self) -> None:
        if self._service is None:
            return
        with open(self.state_path, "w", encoding="utf-8") as fh:
            json.dump(self._service.snapshot(), fh)

    def at(self, when) -> float:
        now = self.service.clock() + 1.0 if when is None else float(when)
        self.service.clock.set(max(self.service.clock(), now))
        return self.service.clock()

    def settle(self, tx_id: str) -> dict:
        """Advance time until the transaction mines; returns its terminal state."""
        svc = self.service
        deadline = svc.clock() + 60 * svc.config.block_interval_mean_s
        while svc.net.transactions[tx_id].pending and svc.clock() < deadline:
            step = min(max(svc.clock() + 1e-6, svc.net.next_block_time), deadline)
            svc.clock.set(step)
            svc.net.advance(step)
        tx = svc.net.transactions[tx_id]
        return {
            "tx_id": tx_id,
            "status": tx.status,
            "mined_at": tx.mined_at,
            "delay_s": None if tx.mined_at is None else tx.mined_at - tx.submitted_at,
            "gas_used": tx.gas_used,
            "result": tx.result,
        }


def _finish_state_change(state: State, response: dict, label: str) -> None:
    if response["status"] == "denied":
        state.save()
        raise ContractRejected(response.get("reason", "rejected"))
    if response["status"] != "ok":
        raise ContractRejected(response.get("error", {}).get("message", "error"))
    settled = state.settle(response["tx_id"])
    response = {**response, "settled": settled}
    state.save()
    if settled["status"] == "reverted":
        if state.as_json:
            _echo_json(response)
        raise ContractRejected(settled["result"].get("error", "reverted"))
    if state.as_json:
        _echo_json(response)
    else:
        click.echo(f"{label}: ok (tx {response['tx_id'][:12]}..., "
                   f"mined after {settled['delay_s']:.2f}s)")
        for key in ("address", "rule_id"):
            if key in response:
                click.echo(f"{key}: {response[key]}")


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Config file (TOML or JSON); defaults to PATHGATE_CONFIG or built-ins.")
@click.option("--state", "state_path", type=click.Path(), default="pathgate-state.json",
              show_default=True, help="Where ledger and service state persist.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def cli(ctx, config_path, state_path, as_json):
    """Plan building access paths and manage access on the simulated ledger."""
    ctx.obj = State(config_path, state_path, as_json)


@cli.group()
def model():
    """Building-model commands."""


@model.command("check")
@click.pass_obj
def model_check(state: State):
    """Validate the configuration and summarize the loaded model."""
    cfg = state.config
    cfg.validate()
    building = cfg.load_building()
    weights = cfg.load_weights()
    zones = cfg.load_zone_levels()
    info = {
        "rooms": len(building.rooms),
        "doors": len(building.doors),
        "points": len(building.points),
        "zones": {name: ZONE_ORDINALS[level] for name, level in sorted(
            (building.graph.compact(node), level) for node, level in
            ((building.graph.expand(k), v) for k, v in zones.items()))},
        "weight_categories": {
            building.graph.compact(cat): len(cw.labels)
            for cat, cw in weights.categories.items()
        },
    }
    if state.as_json:
        _echo_json(info)
    else:
        click.echo(f"rooms: {info['rooms']}  doors: {info['doors']}  points: {info['points']}")
        for zone, ordinal in info["zones"].items():
            click.echo(f"zone {zone}: level {ordinal}")
        click.echo("model ok")


@cli.command()
@click.pass_obj
def weights(state: State):
    """Show point-type weights, the dominant eigenvalue, and consistency."""
    table = state.config.load_weights()
    out = {}
    for category, cw in table.categories.items():
        short = category.rsplit("#", 1)[-1]
        out[short] = {
            "weights": {
                label.rsplit("#", 1)[-1]: round(w, 4)
                for label, w in zip(cw.labels, cw.weights)
            },
            "derived": None if cw.derived is None else {
                label.rsplit("#", 1)[-1]: round(w, 4)
                for label, w in zip(cw.labels, cw.derived)
            },
            "lambda_max": None if cw.lambda_max is None else round(cw.lambda_max, 4),
            "consistency_ratio": (
                None if cw.consistency_ratio is None else round(cw.consistency_ratio, 4)
            ),
        }
    if state.as_json:
        _echo_json(out)
        return
    for short, block in out.items():
        click.echo(f"{short}:")
        for name, w in block["weights"].items():
            derived = ""
            if block["derived"]:
                derived = f"  (derived {block['derived'][name]:.4f})"
            click.echo(f"  {name:28s} {w:.4f}{derived}")
        click.echo(f"  lambda_max {block['lambda_max']}  CR {block['consistency_ratio']}")


@cli.command()
@click.option("--from", "origin", default=None, help="Origin room IRI (default: entrance).")
@click.option("--to", "destination", required=True, help="Destination room IRI.")
@click.option("--choose", type=int, default=None,
              help="Cache ranked path N (1-based) for `rule add`.")
@click.option("--max-paths", type=int, default=64, show_default=True)
@click.option("--max-depth", type=int, default=32, show_default=True)
@click.pass_obj
def plan(state: State, origin, destination, choose, max_paths, max_depth):
    """Enumerate and rank indoor paths by sensitivity cost."""
    svc = state.service
    response = svc.plan({
        "origin": origin, "destination": destination,
        "max_paths": max_paths, "max_depth": max_depth,
    })
    if response["status"] != "ok":
        _fail(EXIT_CONFIG, "plan", response["error"]["message"])
    if choose is not None:
        if not 1 <= choose <= len(response["paths"]):
            _fail(EXIT_USAGE, "usage", f"--choose must be in 1..{len(response['paths'])}")
        response["chosen"] = response["paths"][choose - 1]["path_id"]
        svc.chosen_path = response["chosen"]
    state.save()
    if state.as_json:
        _echo_json(response)
        return
    for i, p in enumerate(response["paths"], start=1):
        warn = "  [zone-order warning]" if p["zone_order_warning"] else ""
        click.echo(f"#{i}  cost {p['total_cost']:.2f}  rooms {len(p['rooms'])}  "
                   f"path {p['path_id']}{warn}")
        click.echo("    " + " -> ".join(
            svc.building.graph.compact(x) for x in p["sequence"]))
    if choose is not None:
        click.echo(f"chosen: {response['chosen']}")
    if response["truncated"]:
        click.echo("note: enumeration truncated by bounds")


@cli.group()
def entity():
    """Entity management."""


@entity.command("add")
@click.option("--delegator", required=True)
@click.option("--auth", required=True, help="Delegator's keyring secret.")
@click.option("--address", required=True, help="Delegate address (64 hex chars).")
@click.option("--start", type=float, required=True)
@click.option("--expiry", type=float, required=True)
@click.option("--permissions", default="read", show_default=True,
              help="Comma-separated subset of read,write,delegate.")
@click.option("--at", "when", type=float, default=None, help="Submission sim-time.")
@click.pass_obj
def entity_add(state: State, delegator, auth, address, start, expiry, permissions, when):
    """Create an entity for a delegate."""
    state.at(when)
    response = state.service.add_entity({
        "delegator": delegator, "auth": auth, "delegate_address": address,
        "start": start, "expiry": expiry,
        "permissions": [p.strip() for p in permissions.split(",") if p.strip()],
    })
    if response["status"] == "ok-existing":
        state.save()
        if state.as_json:
            _echo_json(response)
        else:
            click.echo("entity exists already; nothing to do")
        return
    if response["status"] == "error":
        _fail(EXIT_USAGE, response["error"]["code"], response["error"]["message"])
    _finish_state_change(state, response, "entity add")


@cli.group()
def rule():
    """Access-rule management."""


@rule.command("add")
@click.option("--delegator", required=True)
@click.option("--auth", required=True)
@click.option("--delegate", required=True)
@click.option("--path", "path_id", default=None,
              help="Planned path id (default: last `plan --choose`).")
@click.option("--start", type=float, required=True)
@click.option("--expiry", type=float, required=True)
@click.option("--exclude", "exclusions", multiple=True,
              help="Resource IRI to deny; repeatable.")
@click.option("--no-order", is_flag=True, help="Do not enforce in-order door access.")
@click.option("--at", "when", type=float, default=None)
@click.pass_obj
def rule_add(state: State, delegator, auth, delegate, path_id, start, expiry,
             exclusions, no_order, when):
    """Grant a delegate a planned path."""
    state.at(when)
    path_id = path_id or state.service.chosen_path
    if path_id is None:
        _fail(EXIT_USAGE, "usage", "--path is required (or run `plan --choose` first)")
    response = state.service.add_rule({
        "delegator": delegator, "auth": auth, "delegate": delegate,
        "path_id": path_id, "exclusions": list(exclusions),
        "start": start, "expiry": expiry, "order_enforced": not no_order,
    })
    if response["status"] == "error":
        _fail(EXIT_USAGE, response["error"]["code"], response["error"]["message"])
    _finish_state_change(state, response, "rule add")


@cli.command()
@click.option("--delegate", required=True)
@click.option("--rule", "rule_id", required=True)
@click.option("--resource", required=True)
@click.option("--action", type=click.Choice(["open", "read", "write"]), default="open",
              show_default=True)
@click.option("--at", "when", type=float, default=None)
@click.pass_obj
def verify(state: State, delegate, rule_id, resource, action, when):
    """Check an access request; denial is a result, not a failure."""
    state.at(when)
    response = state.service.verify({
        "delegate": delegate, "rule_id": rule_id,
        "resource": resource, "action": action,
    })
    state.save()
    if state.as_json:
        _echo_json(response)
    else:
        click.echo(f"decision: {response['decision']} ({response['reason']})")


@cli.command()
@click.option("--caller", required=True)
@click.option("--auth", required=True)
@click.option("--rule", "rule_id", default=None)
@click.option("--address", default=None)
@click.option("--at", "when", type=float, default=None)
@click.pass_obj
def revoke(state: State, caller, auth, rule_id, address, when):
    """Invalidate an access rule or an entity."""
    state.at(when)
    if not rule_id and not address:
        _fail(EXIT_USAGE, "usage", "provide --rule or --address")
    response = state.service.revoke({
        "caller": caller, "auth": auth, "rule_id": rule_id, "address": address,
    })
    if response["status"] == "error":
        _fail(EXIT_USAGE, response["error"]["code"], response["error"]["message"])
    _finish_state_change(state, response, "revoke")


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8420, show_default=True)
@click.pass_obj
def serve(state: State, host, port):
    """Run the HTTP service (endpoints /entities /rules /verify /revoke /plan)."""
    server = make_server(state.service, host, port)
    click.echo(f"serving on http://{host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.pathgate_stop.set()
        server.shutdown()


@cli.command()
@click.option("--profile", type=click.Choice(["busy", "average", "quiet"]), default="average",
              show_default=True)
@click.option("--nodes", type=int, default=None, help="Override ledger node count.")
@click.option("--seeds", type=int, default=5, show_default=True,
              help="Number of independent seeded runs.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--events", is_flag=True, help="Also write per-seed ledger event logs.")
@click.option("--scaling", is_flag=True, help="Also run the node-scaling study.")
@click.pass_obj
def simulate(state: State, profile, nodes, seeds, out_dir, events, scaling):
    """Simulate meeting-day workloads and write CSV metrics."""
    cfg = state.config
    if nodes is not None:
        cfg.nodes = nodes
    results = simulate_days(cfg, profile, range(seeds), out_dir=out_dir, event_logs=events)
    summary = {
        "profile": profile,
        "runs": len(results),
        "requests_per_participant": sum(r.requests_per_participant for r in results) / len(results),
        "peak_occupancy_mean": sum(r.peak_occupancy for r in results) / len(results),
        "out": str(out_dir),
    }
    if scaling:
        points = scaling_study(
            cfg,
            loads_per_min=[600, 1200, 2400, 3600, 4800, 9600, 19200],
            node_counts=(1, 2, 3, 4),
            seeds=range(seeds),
        )
        write_scaling_csv(points, Path(out_dir) / "scaling.csv")
        summary["scaling_csv"] = str(Path(out_dir) / "scaling.csv")
    if state.as_json:
        _echo_json(summary)
    else:
        for key, value in summary.items():
            click.echo(f"{key}: {value}")


def main(argv=None):
    try:
        return cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        _fail(EXIT_USAGE, "usage", exc.format_message())
    except click.ClickException as exc:
        _fail(EXIT_USAGE, "cli", exc.format_message())
    except click.exceptions.Abort:
        _fail(EXIT_USAGE, "aborted", "aborted")
    except ContractRejected as exc:
        _fail(EXIT_CONTRACT, "contract", str(exc))
    except ConfigError as exc:
        _fail(EXIT_CONFIG, "config", str(exc))
    except ValueError as exc:
        _fail(EXIT_CONFIG, "invalid", str(exc))


if __name__ == "__main__":
    sys.exit(main())
