"""Composition root: one live federation built from a parsed scenario.

Owns the topology, the event engine, the container runtime, and the
instruments. Instruments run as static containers on their host with the PV
server bound on the conventional port; scenario images are pre-registered in
their host registries. Workflow declarations are kept for submission by the
orchestrator.

Synchronous operations (PV access, HTTP fetch) advance virtual time to their
own completion; everything else is scheduled and driven by until/drain.
"""

from __future__ import annotations

from urllib.parse import urlsplit

from . import tomo
from .containers import ContainerImage, ContainerRuntime, run_container
from .errors import CommandError, ProtocolError, RefusedError, UnreachableError
from .instrument import EPICS_PORT, Instrument, handle_pv_request, run_scan
from .netsim import DELIVERED, REFUSED, Delivery, Endpoint, SimEngine
from .protocols import (
    EpicsRequest,
    EpicsResponse,
    HttpRequest,
    HttpResponse,
    epics_err,
    parse_epics_request,
    parse_epics_response,
    parse_http_response,
    render_epics_request,
    render_epics_response,
    render_http_request,
)
from .scenario import ScenarioSpec
from .topology import Ipv4Address, build_topology

# Hosts receive monitor pushes on collector ports allocated from here.
COLLECTOR_PORT_BASE = 5100


class Emulator:
    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.topology = build_topology(spec)
        self.engine = SimEngine(self.topology, seed=spec.seed)
        self.runtime = ContainerRuntime(self.engine)
        self.instruments: dict[str, Instrument] = {}
        self.instrument_containers: dict[str, str] = {}
        self.workflow_decls = {wf.id: wf for wf in spec.workflows}
        self.workflows: dict[str, object] = {}  # id -> orchestrator WorkflowRun
        self.monitor_feed: list[tuple[float, str, str]] = []  # (time, host, line)
        self._collectors: dict[str, int] = {}  # host -> bound collector port
        self._next_collector = COLLECTOR_PORT_BASE
        self.recon_compute_delay = 0.0

        for decl in spec.images:
            image = ContainerImage(
                decl.name, decl.tag, decl.size, decl.service_kind, decl.service_port
            )
            self.runtime.registry(decl.host).put(image)
        for decl in spec.instruments:
            self._start_instrument(decl)

    # -- construction --------------------------------------------------------

    def _start_instrument(self, decl):
        phantom = tomo.make_disk_phantom(
            decl.phantom.n, decl.phantom.radius, decl.phantom.intensity
        )
        instr = Instrument(decl.name, phantom, decl.bins)
        image = ContainerImage(
            f"{decl.name}-epics", "static", 0, "epics", EPICS_PORT
        )
        self.runtime.registry(decl.host).put(image)
        instance = run_container(
            self.runtime, decl.host, image.ref, handler=self._epics_handler(instr)
        )

        def notify(endpoint: Endpoint, resp: EpicsResponse):
            self.engine.send_oneway(
                instance.id,
                endpoint,
                render_epics_response(resp).encode("ascii"),
                src_port=EPICS_PORT,
            )

        instr.notify = notify
        self.instruments[decl.name] = instr
        self.instrument_containers[decl.name] = instance.id

    def _epics_handler(self, instr: Instrument):
        def handler(payload: bytes, src: Endpoint) -> bytes:
            try:
                req = parse_epics_request(payload)
            except ProtocolError:
                resp = epics_err(400, "malformed request")
            else:
                resp = handle_pv_request(instr, req, self.engine.now, subscriber=src)
            return render_epics_response(resp).encode("ascii")

        return handler

    # -- lookups --------------------------------------------------------------

    def instrument_endpoint(self, name: str) -> Endpoint:
        cid = self.instrument_containers.get(name)
        if cid is None:
            raise CommandError(f"unknown instrument {name!r}")
        instance = self.runtime.instances[cid]
        return Endpoint(instance.bridged.address, EPICS_PORT)

    def instrument_host(self, name: str) -> str:
        cid = self.instrument_containers[name]
        return self.runtime.instances[cid].host

    # -- scheduled operations ---------------------------------------------------

    def scan(self, instrument: str, n_angles: int) -> None:
        """Queue a rotate-and-acquire scan; it runs on the next until/drain."""
        instr = self.instruments.get(instrument)
        if instr is None:
            raise CommandError(f"unknown instrument {instrument!r}")
        if n_angles < 1:
            raise CommandError(f"n_angles must be >= 1, got {n_angles}")

        def action():
            run_scan(instr, n_angles, self.engine.now)
            return ("scan", f"{instrument} n={n_angles}")

        self.engine.schedule(0.0, action)

    # -- synchronous client operations ----------------------------------------

    def pv_request(
        self,
        instrument: str,
        verb: str,
        pv: str,
        value: str | None = None,
        from_host: str | None = None,
    ) -> EpicsResponse:
        """Issue one EPICS-lite request and run the clock to its completion.

        MON/STOP requests originate from the host's collector port so that
        subsequent EVT pushes have somewhere to land.
        """
        endpoint = self.instrument_endpoint(instrument)
        origin = from_host or self.instrument_host(instrument)
        src_port = None
        if verb in ("MON", "STOP"):
            src_port = self._ensure_collector(origin)
        req = EpicsRequest(verb, pv, value)
        delivery = self._exchange(
            origin, endpoint, render_epics_request(req).encode("ascii"), src_port
        )
        return parse_epics_response(delivery.payload)

    def fetch(self, from_host: str, url: str, token: str | None = None) -> HttpResponse:
        """HTTP-lite GET from a host, waiting (in virtual time) for the reply."""
        address, port, path, query = _split_url(url)
        if token is not None:
            query = tuple(q for q in query if q[0] != "token") + (("token", token),)
        req = HttpRequest(path, query)
        delivery = self._exchange(
            from_host, Endpoint(address, port), render_http_request(req), None
        )
        return parse_http_response(delivery.payload)

    def _exchange(self, origin, endpoint, payload, src_port) -> Delivery:
        outcome: list[Delivery] = []
        self.engine.request_response(
            origin, endpoint, payload,
            on_response=outcome.append, src_port=src_port,
        )
        self.engine.run_until(lambda: bool(outcome))
        if not outcome:
            raise CommandError(f"no response from {endpoint}")
        delivery = outcome[0]
        if delivery.status == REFUSED:
            raise RefusedError(f"connection refused by {endpoint}")
        if delivery.status != DELIVERED:
            raise UnreachableError(f"{endpoint} unreachable from {origin!r}")
        return delivery

    def _ensure_collector(self, host: str) -> int:
        port = self._collectors.get(host)
        if port is not None:
            return port
        port = self._next_collector
        self._next_collector += 1

        def collect(payload: bytes, src: Endpoint):
            line = payload.decode("ascii", errors="replace").rstrip("\n")
            self.monitor_feed.append((self.engine.now, host, line))
            return None

        self.engine.bind_service(host, port, collect)
        self._collectors[host] = port
        return port


def _split_url(url: str):
    """Split http://a.b.c.d:port/path?query into emulator-level pieces."""
    parts = urlsplit(url)
    if parts.scheme != "http" or not parts.hostname:
        raise CommandError(f"malformed url {url!r} (want http://ip:port/path)")
    try:
        address = Ipv4Address.parse(parts.hostname)
        port = parts.port
    except ValueError as exc:
        raise CommandError(f"malformed url {url!r}: {exc}") from None
    if port is None:
        raise CommandError(f"malformed url {url!r}: missing port")
    path = parts.path or "/"
    query = []
    seen = set()
    for chunk in parts.query.split("&"):
        if not chunk:
            continue
        key, _, value = chunk.partition("=")
        if key and key not in seen:
            query.append((key, value))
            seen.add(key)
    return address, port, path, tuple(query)
