"""Deterministic virtual-time engine over the federation topology.

A single event loop owns all state. Events are totally ordered by
(time, seq) with seq assigned at scheduling, so identical inputs replay to
byte-identical event logs. Message timing follows a store-and-forward model:
each hop costs latency + size/bandwidth, serialized in full at every hop.

Every processed event appends one canonical log line:

    t=<seconds, 9 decimals> seq=<n> kind=<kind> detail=<text>
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable

from .errors import PortInUseError, RouteError
from .topology import FederationTopology, Ipv4Address, route_lookup

EPHEMERAL_PORT_BASE = 49152

# Terminal outcomes of a sent message.
DELIVERED = "delivered"
REFUSED = "refused"
UNREACHABLE = "unreachable"

# handler(request payload, requester endpoint) -> response payload
Handler = Callable[[bytes, "Endpoint"], bytes]


@dataclass(frozen=True)
class Endpoint:
    address: Ipv4Address
    port: int

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port out of range: {self.port}")

    def __str__(self) -> str:
        return f"{self.address}:{self.port}"


@dataclass(frozen=True)
class PortMap:
    container_port: int
    host_port: int

    def __post_init__(self):
        for port in (self.container_port, self.host_port):
            if not 1 <= port <= 65535:
                raise ValueError(f"port out of range: {port}")

    @classmethod
    def parse(cls, text: str) -> "PortMap":
        container, sep, host = text.partition(":")
        if not sep:
            raise ValueError(f"bad port map {text!r} (want container:host)")
        return cls(int(container, 10), int(host, 10))

    def __str__(self) -> str:
        return f"{self.container_port}:{self.host_port}"


@dataclass(frozen=True)
class Message:
    id: str
    src: Endpoint
    dst: Endpoint
    payload: bytes
    size: int  # bytes used for timing; may exceed len(payload) for bulk data

    def __post_init__(self):
        if self.size < len(self.payload):
            raise ValueError("size must cover the payload")


@dataclass(frozen=True)
class Delivery:
    """Terminal outcome handed to a request's on_response callback."""

    status: str  # DELIVERED | REFUSED | UNREACHABLE
    payload: bytes | None
    time: float


@dataclass(frozen=True)
class EventRecord:
    time: float
    seq: int
    kind: str
    detail: str

    def render(self) -> str:
        return f"t={self.time:.9f} seq={self.seq} kind={self.kind} detail={self.detail}"


@dataclass(order=True)
class _Event:
    time: float
    seq: int
    action: Callable[[], tuple[str, str]] = field(compare=False)


@dataclass(frozen=True)
class Binding:
    owner: str
    endpoint: Endpoint


def transfer_time(path: list[str], size: int | float, topology: FederationTopology) -> float:
    """Store-and-forward time for `size` bytes along `path`, in seconds."""
    if not path:
        raise ValueError("empty path")
    if size < 0:
        raise ValueError(f"negative size: {size}")
    total = 0.0
    for a, b in zip(path, path[1:]):
        link = topology.link_between(a, b)
        if link is None:
            raise RouteError(f"no link between {a!r} and {b!r}")
        total += link.latency + size / link.bandwidth
    return total


class SimEngine:
    """Event queue, clock, log, and the (address, port) service table."""

    def __init__(self, topology: FederationTopology, seed: int = 42):
        self.topology = topology
        self.seed = seed
        self.now = 0.0
        self.log: list[EventRecord] = []
        self.bindings: dict[tuple[Ipv4Address, int], Handler] = {}
        self._queue: list[_Event] = []
        self._seq = 0
        self._msg_counter = 0
        self._ephemeral = EPHEMERAL_PORT_BASE

    # -- scheduling --------------------------------------------------------

    def schedule(self, delay: float, action: Callable[[], tuple[str, str]]) -> _Event:
        """Queue an action at now + delay; it returns the (kind, detail) to log."""
        if delay < 0:
            raise ValueError(f"negative delay: {delay}")
        event = _Event(self.now + delay, self._seq, action)
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def log_now(self, kind: str, detail: str) -> _Event:
        """Record a plain log line at the current time (next drain tick)."""
        return self.schedule(0.0, lambda: (kind, detail))

    def pending(self) -> int:
        return len(self._queue)

    # -- clock control -----------------------------------------------------

    def _process_next(self) -> EventRecord:
        event = heapq.heappop(self._queue)
        self.now = event.time
        kind, detail = event.action()
        record = EventRecord(event.time, event.seq, kind, detail)
        self.log.append(record)
        return record

    def advance_until(self, t: float) -> list[EventRecord]:
        """Process every event with time <= t; the clock ends exactly at t."""
        if t < self.now:
            raise ValueError(f"cannot advance to {t} before now={self.now}")
        records = []
        while self._queue and self._queue[0].time <= t:
            records.append(self._process_next())
        self.now = t
        return records

    def drain(self) -> list[EventRecord]:
        """Process everything; the clock ends at the last event's time."""
        records = []
        while self._queue:
            records.append(self._process_next())
        return records

    def run_until(self, stop: Callable[[], bool]) -> list[EventRecord]:
        """Process events until `stop()` holds, then flush co-timed events.

        The flush keeps same-instant work together so a later command never
        interleaves into the middle of a tick.
        """
        records = []
        while self._queue and not stop():
            records.append(self._process_next())
        while self._queue and self._queue[0].time <= self.now:
            records.append(self._process_next())
        return records

    # -- services and messages ----------------------------------------------

    def bind_service(self, owner: str, port: int, handler: Handler) -> Binding:
        itf = self.topology.interface_of(owner)
        endpoint = Endpoint(itf.address, port)
        key = (endpoint.address, endpoint.port)
        if key in self.bindings:
            raise PortInUseError(f"{endpoint} already bound")
        self.bindings[key] = handler
        return Binding(owner, endpoint)

    def unbind(self, binding: Binding):
        self.bindings.pop((binding.endpoint.address, binding.endpoint.port), None)

    def next_message_id(self) -> str:
        self._msg_counter += 1
        return f"m{self._msg_counter}"

    def _alloc_ephemeral_port(self) -> int:
        port = self._ephemeral
        self._ephemeral += 1
        if self._ephemeral > 65535:
            self._ephemeral = EPHEMERAL_PORT_BASE
        return port

    def request_response(
        self,
        src_owner: str,
        dst: Endpoint,
        payload: bytes,
        size: int | None = None,
        on_response: Callable[[Delivery], None] | None = None,
        src_port: int | None = None,
    ) -> Message:
        """Send a request; the handler's reply travels back as its own message.

        Unreachable or unbound destinations produce a terminal refusal event
        instead of a hang; on_response always fires exactly once.
        """
        return self._transmit(src_owner, dst, payload, size, on_response,
                              src_port, expect_response=True)

    def send_oneway(
        self,
        src_owner: str,
        dst: Endpoint,
        payload: bytes,
        size: int | None = None,
        src_port: int | None = None,
    ) -> Message:
        """Fire-and-forget message; any handler return value is discarded."""
        return self._transmit(src_owner, dst, payload, size, None,
                              src_port, expect_response=False)

    def _transmit(self, src_owner, dst, payload, size, on_response,
                  src_port, expect_response) -> Message:
        src_itf = self.topology.interface_of(src_owner)
        if src_port is None:
            src_port = self._alloc_ephemeral_port()
        src = Endpoint(src_itf.address, src_port)
        if size is None:
            size = len(payload)
        msg = Message(self.next_message_id(), src, dst, payload, size)
        tag = f"{msg.id} {msg.src} -> {msg.dst} size={msg.size}"
        self.log_now("send", tag)
        try:
            path = route_lookup(self.topology, src.address, dst.address)
        except RouteError:
            def fail():
                if on_response is not None:
                    on_response(Delivery(UNREACHABLE, None, self.now))
                return ("unreachable", tag)

            self.schedule(0.0, fail)
            return msg

        def arrive():
            handler = self.bindings.get((msg.dst.address, msg.dst.port))
            if handler is None:
                if on_response is not None:
                    on_response(Delivery(REFUSED, None, self.now))
                return ("refused", tag)
            reply = handler(msg.payload, msg.src)
            if expect_response and reply is not None:
                self._reply(msg, path, reply, on_response)
            return ("deliver", tag)

        self.schedule(transfer_time(path, size, self.topology), arrive)
        return msg

    def _reply(self, request: Message, path: list[str], payload: bytes, on_response):
        reply = Message(self.next_message_id(), request.dst, request.src,
                        payload, len(payload))
        tag = f"{reply.id} {reply.src} -> {reply.dst} size={reply.size}"
        self.log_now("send", tag)

        def arrive():
            if on_response is not None:
                on_response(Delivery(DELIVERED, reply.payload, self.now))
            return ("deliver", tag)

        self.schedule(
            transfer_time(list(reversed(path)), reply.size, self.topology), arrive
        )
