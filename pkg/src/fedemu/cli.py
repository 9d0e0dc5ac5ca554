"""Command front end: a small REPL and script runner over one emulator.

Verbs:
    up <file|canonical>            load a scenario and build the federation
    status                         topology, containers, and workflow phases
    ship <image:tag> <from> <to>   schedule an image transfer
    run <host> <image:tag> [-p c:h]...   start a container now
    pvget <instrument> <pv> [--from <host>]
    pvput <instrument> <pv> <value> [--from <host>]
    pvmon <instrument> <pv> [--from <host>]
    pvstop <instrument> <pv> [--from <host>]
    scan <instrument> <n_angles>   queue a rotate-and-acquire scan
    submit <workflow-id>           submit a declared workflow
    fetch <host> <url> [--token <t>]
    until <t>                      advance the clock to t seconds
    drain                          run the queue dry
    log                            print every event record
    digest                         16-hex digest of the event log

Scripted runs stop at the first error with a nonzero exit; an interactive
REPL prints the error and keeps going.
"""

from __future__ import annotations

import argparse
import shlex
import sys

from .containers import fnv1a64, hex16, run_container, ship_image
from .emulator import Emulator
from .errors import CommandError, EmulationError
from .netsim import PortMap, SimEngine
from .orchestrator import submit_by_id
from .protocols import render_epics_response
from .scenario import canonical_text, parse_scenario


def event_log_digest(engine: SimEngine) -> str:
    """FNV-1a 64 over the rendered event log, one line per record."""
    text = "".join(record.render() + "\n" for record in engine.log)
    return hex16(fnv1a64(text.encode("ascii")))


class Session:
    """One CLI session: at most one loaded emulator at a time."""

    def __init__(self):
        self.emulator: Emulator | None = None

    def require(self) -> Emulator:
        if self.emulator is None:
            raise CommandError("no scenario loaded (use: up <file>)")
        return self.emulator


def exec_command(session: Session, line: str) -> str:
    """Execute one command line; returns the text to print (may be empty)."""
    tokens = shlex.split(line, comments=True)
    if not tokens:
        return ""
    verb, args = tokens[0], tokens[1:]
    handler = _VERBS.get(verb)
    if handler is None:
        raise CommandError(f"unknown verb {verb!r}")
    return handler(session, args)


def _usage(text: str):
    raise CommandError(f"usage: {text}")


def _cmd_up(session: Session, args: list[str]) -> str:
    if len(args) != 1:
        _usage("up <file|canonical>")
    name = args[0]
    if name == "canonical":
        text = canonical_text()
    else:
        try:
            with open(name, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise CommandError(f"cannot read {name!r}: {exc}") from None
    spec = parse_scenario(text)
    session.emulator = Emulator(spec)
    return (
        f"loaded {name}: sites={len(spec.sites)} hosts={len(spec.hosts)}"
        f" images={len(spec.images)} instruments={len(spec.instruments)}"
        f" workflows={len(spec.workflows)} seed={spec.seed}"
    )


def _cmd_status(session: Session, args: list[str]) -> str:
    if args:
        _usage("status")
    emulator = session.require()
    engine = emulator.engine
    topology = emulator.topology
    lines = [f"t={engine.now:.9f} pending={engine.pending()}"]
    for name, site in topology.sites.items():
        members = sum(1 for n in topology.nodes if topology.site_of[n] == name)
        lines.append(
            f"site {name} subnet={site.subnet} gateway={site.gateway} nodes={members}"
        )
    for cid, inst in emulator.runtime.instances.items():
        lines.append(
            f"container {cid} {inst.image.ref} host={inst.host}"
            f" addr={inst.bridged.address} state={inst.state}"
        )
    for wf_id, run in emulator.workflows.items():
        phases = " ".join(
            f"{t.name}={run.states[t.name].phase}" for t in run.spec.tasks
        )
        lines.append(f"workflow {wf_id}: {phases}")
        for record in run.endpoints:
            lines.append(
                f"endpoint {record.task} {record.endpoint} token={record.token}"
            )
    return "\n".join(lines)


def _cmd_ship(session: Session, args: list[str]) -> str:
    if len(args) != 3:
        _usage("ship <image:tag> <from> <to>")
    emulator = session.require()
    ref, src, dst = args
    arrival = ship_image(emulator.runtime, ref, src, dst)
    return f"ship {ref} {src}->{dst} arrival t={arrival:.9f}"


def _cmd_run(session: Session, args: list[str]) -> str:
    positional: list[str] = []
    port_maps: list[PortMap] = []
    i = 0
    while i < len(args):
        if args[i] == "-p":
            if i + 1 >= len(args):
                _usage("run <host> <image:tag> [-p container:host]...")
            try:
                port_maps.append(PortMap.parse(args[i + 1]))
            except ValueError as exc:
                raise CommandError(str(exc)) from None
            i += 2
        else:
            positional.append(args[i])
            i += 1
    if len(positional) != 2:
        _usage("run <host> <image:tag> [-p container:host]...")
    emulator = session.require()
    host, ref = positional
    try:
        instance = run_container(emulator.runtime, host, ref, tuple(port_maps))
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    return (
        f"run {instance.id} {ref} {host}"
        f" addr={instance.bridged.address} token={instance.token}"
    )


def _pv_args(args: list[str], usage: str, want_value: bool):
    """Positional pv arguments plus an optional --from <host> flag."""
    positional: list[str] = []
    from_host = None
    i = 0
    while i < len(args):
        if args[i] == "--from":
            if i + 1 >= len(args):
                _usage(usage)
            from_host = args[i + 1]
            i += 2
        else:
            positional.append(args[i])
            i += 1
    expected = 3 if want_value else 2
    if len(positional) != expected:
        _usage(usage)
    value = positional[2] if want_value else None
    return positional[0], positional[1], value, from_host


def _pv_command(verb: str, usage: str, want_value: bool = False):
    def handler(session: Session, args: list[str]) -> str:
        instrument, pv, value, from_host = _pv_args(args, usage, want_value)
        emulator = session.require()
        response = emulator.pv_request(instrument, verb, pv, value, from_host)
        return render_epics_response(response).rstrip("\n")

    return handler


def _cmd_scan(session: Session, args: list[str]) -> str:
    if len(args) != 2:
        _usage("scan <instrument> <n_angles>")
    emulator = session.require()
    try:
        n_angles = int(args[1], 10)
    except ValueError:
        raise CommandError(f"bad angle count {args[1]!r}") from None
    emulator.scan(args[0], n_angles)
    return f"scan {args[0]} n={n_angles} scheduled"


def _cmd_submit(session: Session, args: list[str]) -> str:
    if len(args) != 1:
        _usage("submit <workflow-id>")
    emulator = session.require()
    run = submit_by_id(emulator, args[0])
    return f"submitted {args[0]} tasks={len(run.spec.tasks)}"


def _cmd_fetch(session: Session, args: list[str]) -> str:
    positional: list[str] = []
    token = None
    i = 0
    while i < len(args):
        if args[i] == "--token":
            if i + 1 >= len(args):
                _usage("fetch <host> <url> [--token <t>]")
            token = args[i + 1]
            i += 2
        else:
            positional.append(args[i])
            i += 1
    if len(positional) != 2:
        _usage("fetch <host> <url> [--token <t>]")
    emulator = session.require()
    response = emulator.fetch(positional[0], positional[1], token)
    out = f"{response.status_code} {response.reason}"
    if response.body:
        out += "\n" + response.body.decode("utf-8", errors="replace").rstrip("\n")
    return out


def _cmd_until(session: Session, args: list[str]) -> str:
    if len(args) != 1:
        _usage("until <t>")
    emulator = session.require()
    try:
        t = float(args[0])
    except ValueError:
        raise CommandError(f"bad time {args[0]!r}") from None
    try:
        records = emulator.engine.advance_until(t)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    return f"t={emulator.engine.now:.9f} events={len(records)}"


def _cmd_drain(session: Session, args: list[str]) -> str:
    if args:
        _usage("drain")
    emulator = session.require()
    records = emulator.engine.drain()
    return f"t={emulator.engine.now:.9f} events={len(records)}"


def _cmd_log(session: Session, args: list[str]) -> str:
    if args:
        _usage("log")
    engine = session.require().engine
    if not engine.log:
        return "(empty log)"
    return "\n".join(record.render() for record in engine.log)


def _cmd_digest(session: Session, args: list[str]) -> str:
    if args:
        _usage("digest")
    return event_log_digest(session.require().engine)


_VERBS = {
    "up": _cmd_up,
    "status": _cmd_status,
    "ship": _cmd_ship,
    "run": _cmd_run,
    "pvget": _pv_command("GET", "pvget <instrument> <pv> [--from <host>]"),
    "pvput": _pv_command(
        "PUT", "pvput <instrument> <pv> <value> [--from <host>]", want_value=True
    ),
    "pvmon": _pv_command("MON", "pvmon <instrument> <pv> [--from <host>]"),
    "pvstop": _pv_command("STOP", "pvstop <instrument> <pv> [--from <host>]"),
    "scan": _cmd_scan,
    "submit": _cmd_submit,
    "fetch": _cmd_fetch,
    "until": _cmd_until,
    "drain": _cmd_drain,
    "log": _cmd_log,
    "digest": _cmd_digest,
}


def run_script(session: Session, lines, out=None, err=None) -> int:
    """Execute lines in order; stop at the first error with exit code 1."""
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    for line in lines:
        try:
            result = exec_command(session, line)
        except (EmulationError, ValueError) as exc:
            print(_format_error(line, exc), file=err)
            return 1
        if result:
            print(result, file=out)
    return 0


def _format_error(line: str, exc: Exception) -> str:
    """Errors always carry the failing command verbatim."""
    return f"error: {line.strip()!r}: {exc}"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedemu",
        description="Deterministic emulator for a federated instrument network.",
    )
    parser.add_argument(
        "script",
        nargs="?",
        help="command script to run (omit to read commands from stdin)",
    )
    args = parser.parse_args(argv)
    session = Session()

    if args.script is not None:
        try:
            with open(args.script, "r", encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        return run_script(session, lines)

    interactive = sys.stdin.isatty()
    status = 0
    while True:
        try:
            line = input("fedemu> " if interactive else "")
        except EOFError:
            break
        if line.strip() in ("quit", "exit"):
            break
        try:
            result = exec_command(session, line)
        except (EmulationError, ValueError) as exc:
            print(_format_error(line, exc), file=sys.stderr)
            if not interactive:
                return 1
            continue
        if result:
            print(result)
    return status


if __name__ == "__main__":
    sys.exit(main())
