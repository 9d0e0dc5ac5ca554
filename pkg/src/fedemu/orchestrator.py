"""Workflow orchestration over one emulator.

A workflow is a DAG of typed tasks (acquire, ship, run, reconstruct, fetch).
Submission validates the graph and its references; execution is event-driven
and eager: a task starts the moment all of its dependencies are satisfied,
and every phase change is logged as `kind=task detail=<name> <From>-><To>`.

Phase order is Pending < Staging < Loading < Running < Exposed < Completed;
any strictly forward jump is legal, plus any non-terminal phase -> Failed.
A dependency is satisfied once its task reaches Exposed or Completed. When a
task fails, every transitive dependent fails with reason "dependency failed".
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tomo
from .containers import ContainerInstance, run_container, ship_image
from .errors import EmulationError, ProtocolError, WorkflowError
from .instrument import run_scan
from .netsim import DELIVERED, REFUSED, Endpoint, PortMap, transfer_time
from .protocols import (
    HttpRequest,
    HttpResponse,
    parse_http_response,
    render_http_request,
)
from .scenario import WorkflowDecl
from .topology import route_lookup

PHASES = ("Pending", "Staging", "Loading", "Running", "Exposed", "Completed", "Failed")

_ORDER = {name: i for i, name in enumerate(PHASES[:-1])}
_TERMINAL = ("Completed", "Failed")


def is_legal_transition(frm: str, to: str) -> bool:
    if frm in _ORDER and to == "Failed":
        return frm != "Completed"
    return frm in _ORDER and to in _ORDER and _ORDER[to] > _ORDER[frm]


@dataclass(frozen=True)
class WorkflowTask:
    name: str
    kind: str  # acquire | ship | run | reconstruct | fetch
    depends_on: tuple[str, ...] = ()
    instrument: str | None = None
    angles: int | None = None
    image: str | None = None
    src_host: str | None = None  # ship: from / fetch: from
    dst_host: str | None = None  # ship: to
    host: str | None = None  # run
    port_maps: tuple[PortMap, ...] = ()
    source: str | None = None  # reconstruct: an acquire task
    service: str | None = None  # reconstruct/fetch: a run task
    grid_n: int | None = None  # reconstruct output side
    filter: str = "ramlak"
    path: str | None = None  # fetch


@dataclass(frozen=True)
class WorkflowSpec:
    id: str
    tasks: tuple[WorkflowTask, ...]

    def task(self, name: str) -> WorkflowTask:
        for task in self.tasks:
            if task.name == name:
                return task
        raise KeyError(name)


def spec_from_decl(decl: WorkflowDecl) -> WorkflowSpec:
    """Type the string options of a parsed workflow declaration."""
    tasks = []
    for t in decl.tasks:
        kw: dict = {"name": t.name, "kind": t.kind, "depends_on": t.depends}
        if t.kind == "acquire":
            kw.update(instrument=t.get("instrument"), angles=int(t.get("angles")))
        elif t.kind == "ship":
            kw.update(image=t.get("image"), src_host=t.get("from"), dst_host=t.get("to"))
        elif t.kind == "run":
            maps = tuple(PortMap.parse(p) for p in t.get("ports").split(","))
            kw.update(image=t.get("image"), host=t.get("host"), port_maps=maps)
        elif t.kind == "reconstruct":
            kw.update(
                source=t.get("source"),
                service=t.get("service"),
                grid_n=int(t.get("n")),
                filter=t.get("filter"),
            )
        elif t.kind == "fetch":
            kw.update(
                src_host=t.get("from"), service=t.get("service"), path=t.get("path")
            )
        else:
            raise WorkflowError(f"unknown task kind {t.kind!r}")
        tasks.append(WorkflowTask(**kw))
    return WorkflowSpec(decl.id, tuple(tasks))


@dataclass
class TaskState:
    name: str
    phase: str = "Pending"
    reason: str | None = None
    started_at: float | None = None
    finished_at: float | None = None


@dataclass(frozen=True)
class EndpointRecord:
    task: str
    endpoint: Endpoint
    token: str


class WorkflowRun:
    """Live state of one submitted workflow."""

    def __init__(self, emulator, spec: WorkflowSpec):
        self.emulator = emulator
        self.spec = spec
        self.states = {t.name: TaskState(t.name) for t in spec.tasks}
        self.endpoints: list[EndpointRecord] = []
        self.artifacts: dict[str, object] = {}
        self.artifact_hosts: dict[str, str] = {}
        self.instances: dict[str, ContainerInstance] = {}

    def state(self, name: str) -> TaskState:
        return self.states[name]

    def done(self) -> bool:
        return all(s.phase in _TERMINAL for s in self.states.values())

    # -- state machine -----------------------------------------------------

    def _transition(self, name: str, to: str, reason: str | None = None):
        state = self.states[name]
        frm = state.phase
        if not is_legal_transition(frm, to):
            raise WorkflowError(f"illegal transition {frm}->{to} for task {name!r}")
        now = self.emulator.engine.now
        if frm == "Pending":
            state.started_at = now
        if to in _TERMINAL:
            state.finished_at = now
        state.phase = to
        state.reason = reason
        self.emulator.engine.log_now("task", f"{name} {frm}->{to}")

    def _fail(self, name: str, reason: str):
        self._transition(name, "Failed", reason)
        self._fail_dependents(name)

    def _fail_dependents(self, failed: str):
        blocked = {failed}
        changed = True
        while changed:
            changed = False
            for task in self.spec.tasks:
                if task.name in blocked:
                    continue
                if any(dep in blocked for dep in task.depends_on):
                    blocked.add(task.name)
                    changed = True
        for task in self.spec.tasks:
            if task.name == failed or task.name not in blocked:
                continue
            if self.states[task.name].phase not in _TERMINAL:
                self._transition(task.name, "Failed", "dependency failed")

    def _satisfied(self, dep: str) -> bool:
        return self.states[dep].phase in ("Exposed", "Completed")

    def _schedule_ready(self):
        for task in self.spec.tasks:
            if self.states[task.name].phase != "Pending":
                continue
            if all(self._satisfied(dep) for dep in task.depends_on):
                self._start_task(task)

    # -- task execution ------------------------------------------------------

    def _start_task(self, task: WorkflowTask):
        start = getattr(self, f"_run_{task.kind}")
        try:
            start(task)
        except EmulationError as exc:
            if self.states[task.name].phase not in _TERMINAL:
                self._fail(task.name, str(exc))
        except ValueError as exc:
            if self.states[task.name].phase not in _TERMINAL:
                self._fail(task.name, str(exc))

    def _run_acquire(self, task: WorkflowTask):
        instr = self.emulator.instruments[task.instrument]
        self._transition(task.name, "Running")
        self.emulator.engine.log_now("scan", f"{task.instrument} n={task.angles}")
        sinogram = run_scan(instr, task.angles, self.emulator.engine.now)
        self.artifacts[task.name] = sinogram
        self.artifact_hosts[task.name] = self.emulator.instrument_host(task.instrument)
        self._transition(task.name, "Completed")
        self._schedule_ready()

    def _run_ship(self, task: WorkflowTask):
        self._transition(task.name, "Staging")

        def on_complete():
            self._transition(task.name, "Loading")
            self._transition(task.name, "Completed")
            self._schedule_ready()

        ship_image(
            self.emulator.runtime, task.image, task.src_host, task.dst_host,
            on_complete=on_complete,
        )

    def _run_run(self, task: WorkflowTask):
        self._transition(task.name, "Running")
        instance = run_container(
            self.emulator.runtime, task.host, task.image, task.port_maps
        )
        self.instances[task.name] = instance
        endpoint = Endpoint(instance.bridged.address, instance.image.service_port)
        self._transition(task.name, "Exposed")
        self.endpoints.append(EndpointRecord(task.name, endpoint, instance.token))
        self._transition(task.name, "Completed")
        self._schedule_ready()

    def _run_reconstruct(self, task: WorkflowTask):
        sinogram = self.artifacts.get(task.source)
        if sinogram is None:
            self._fail(task.name, f"source {task.source!r} has no sinogram")
            return
        instance = self.instances.get(task.service)
        if instance is None:
            self._fail(task.name, f"service {task.service!r} is not exposed")
            return
        emulator = self.emulator
        engine = emulator.engine
        src_host = self.artifact_hosts[task.source]
        dst_host = instance.host
        size = len(tomo.export_text(sinogram.data).encode("ascii"))

        self._transition(task.name, "Staging")
        engine.log_now(
            "xfer", f"sinogram {task.source} {src_host}->{dst_host} size={size}"
        )
        topology = emulator.topology
        path = route_lookup(
            topology,
            topology.interface_of(src_host).address,
            topology.interface_of(dst_host).address,
        )
        duration = transfer_time(path, size, topology)

        def compute():
            self._transition(task.name, "Running")
            params = tomo.ReconParams(
                sinogram.n_angles, sinogram.n_s, task.grid_n, task.filter
            )
            image = tomo.fbp(sinogram, params)
            engine.log_now(
                "recon", f"{task.name} n={task.grid_n} filter={task.filter}"
            )
            self.artifacts[task.name] = image
            self.artifact_hosts[task.name] = dst_host
            instance.results.append(
                f"result {task.name}\n" + tomo.export_text(image.values)
            )
            self._transition(task.name, "Completed")
            self._schedule_ready()
            return ("xfer", f"sinogram {task.source} arrived {dst_host}")

        engine.schedule(duration + emulator.recon_compute_delay, compute)

    def _run_fetch(self, task: WorkflowTask):
        instance = self.instances.get(task.service)
        if instance is None:
            self._fail(task.name, f"service {task.service!r} is not exposed")
            return
        self._transition(task.name, "Running")
        endpoint = Endpoint(instance.bridged.address, instance.image.service_port)
        request = HttpRequest(task.path, (("token", instance.token),))

        def on_response(delivery):
            if delivery.status == DELIVERED:
                try:
                    response = parse_http_response(delivery.payload)
                except ProtocolError as exc:
                    self._fail(task.name, f"bad response: {exc}")
                    return
                self.artifacts[task.name] = response
                self._transition(task.name, "Completed")
                self._schedule_ready()
            elif delivery.status == REFUSED:
                self._fail(task.name, "connection refused")
            else:
                self._fail(task.name, "destination unreachable")

        self.emulator.engine.request_response(
            task.src_host, endpoint, render_http_request(request),
            on_response=on_response,
        )


def submit_workflow(emulator, spec: WorkflowSpec) -> WorkflowRun:
    """Validate a workflow and start every dependency-free task."""
    if spec.id in emulator.workflows:
        raise WorkflowError(f"workflow {spec.id!r} already submitted")
    _validate_spec(emulator, spec)
    run = WorkflowRun(emulator, spec)
    emulator.workflows[spec.id] = run
    run._schedule_ready()
    return run


def submit_by_id(emulator, workflow_id: str) -> WorkflowRun:
    decl = emulator.workflow_decls.get(workflow_id)
    if decl is None:
        raise WorkflowError(f"unknown workflow {workflow_id!r}")
    return submit_workflow(emulator, spec_from_decl(decl))


def workflow_status(run: WorkflowRun):
    """Snapshot: per-task states (declaration order) and endpoint records."""
    states = tuple(
        TaskState(s.name, s.phase, s.reason, s.started_at, s.finished_at)
        for s in (run.states[t.name] for t in run.spec.tasks)
    )
    return states, tuple(run.endpoints)


_REQUIRED = {
    "acquire": ("instrument", "angles"),
    "ship": ("image", "src_host", "dst_host"),
    "run": ("image", "host"),
    "reconstruct": ("source", "service", "grid_n"),
    "fetch": ("src_host", "service", "path"),
}


def _validate_spec(emulator, spec: WorkflowSpec):
    def bad(msg: str):
        raise WorkflowError(f"workflow {spec.id!r}: {msg}")

    names = [t.name for t in spec.tasks]
    if len(set(names)) != len(names):
        dupe = next(n for n in names if names.count(n) > 1)
        bad(f"duplicate task name {dupe!r}")
    by_name = {t.name: t for t in spec.tasks}

    for task in spec.tasks:
        required = _REQUIRED.get(task.kind)
        if required is None:
            bad(f"task {task.name!r}: unknown kind {task.kind!r}")
        for attr in required:
            if getattr(task, attr) is None:
                bad(f"task {task.name!r}: missing {attr}")
        for dep in task.depends_on:
            if dep not in by_name:
                bad(f"task {task.name!r}: unknown dependency {dep!r}")
            if dep == task.name:
                bad(f"task {task.name!r} depends on itself")

    _check_acyclic(spec, bad)

    nodes = emulator.topology.nodes
    for task in spec.tasks:
        if task.kind == "acquire":
            if task.instrument not in emulator.instruments:
                bad(f"task {task.name!r}: unknown instrument {task.instrument!r}")
            if task.angles < 1:
                bad(f"task {task.name!r}: angles must be >= 1")
        elif task.kind == "ship":
            for host in (task.src_host, task.dst_host):
                if host not in nodes:
                    bad(f"task {task.name!r}: unknown host {host!r}")
            if task.image not in emulator.runtime.registry(task.src_host):
                bad(
                    f"task {task.name!r}: image {task.image!r} not in the "
                    f"{task.src_host} registry"
                )
        elif task.kind == "run":
            if task.host not in nodes:
                bad(f"task {task.name!r}: unknown host {task.host!r}")
            if task.image not in emulator.runtime.registry(task.host) and not any(
                t.kind == "ship" and t.image == task.image and t.dst_host == task.host
                for t in spec.tasks
            ):
                bad(
                    f"task {task.name!r}: image {task.image!r} neither present on "
                    f"{task.host} nor shipped there by this workflow"
                )
        elif task.kind == "reconstruct":
            source = by_name.get(task.source)
            if source is None or source.kind != "acquire":
                bad(f"task {task.name!r}: source must name an acquire task")
            if task.grid_n < 2:
                bad(f"task {task.name!r}: n must be >= 2")
            _check_service_ref(task, by_name, bad)
        elif task.kind == "fetch":
            if task.src_host not in nodes:
                bad(f"task {task.name!r}: unknown host {task.src_host!r}")
            if not task.path.startswith("/"):
                bad(f"task {task.name!r}: path must start with '/'")
            _check_service_ref(task, by_name, bad)


def _check_service_ref(task: WorkflowTask, by_name, bad):
    service = by_name.get(task.service)
    if service is None or service.kind != "run":
        bad(f"task {task.name!r}: service must name a run task")


def _check_acyclic(spec: WorkflowSpec, bad):
    remaining = {t.name: set(t.depends_on) for t in spec.tasks}
    while remaining:
        ready = [name for name, deps in remaining.items() if not deps]
        if not ready:
            cycle = ", ".join(sorted(remaining))
            bad(f"dependency cycle among: {cycle}")
        for name in ready:
            del remaining[name]
            for deps in remaining.values():
                deps.discard(name)
