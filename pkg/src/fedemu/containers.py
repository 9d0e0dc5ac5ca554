"""Container image lifecycle: archives, digests, shipping, running instances.

Images serialize to the FSA1 archive format::

    FSA1\\n
    name=<name>\\n
    tag=<tag>\\n
    size=<decimal>\\n
    service=<kind>:<port>\\n
    --\\n
    <payload bytes>\\n#digest=<16 lowercase hex>\\n

The digest is FNV-1a 64 over everything before the footer, so any corruption
of manifest or payload is caught at load. The digest check runs before the
manifest parse: a tampered archive always fails as a digest mismatch, never
as a confusing parse error. Transfer timing uses the declared image size, so
a 100 MB image costs 100 MB of virtual transfer time without materializing
100 MB of payload.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import (
    ArchiveError,
    BadMagicError,
    DigestMismatchError,
    ProtocolError,
    RegistryError,
)
from .netsim import PortMap, SimEngine, transfer_time
from .protocols import HttpResponse, parse_http_request, render_http_response
from .topology import Interface, attach_bridge, route_lookup

ARCHIVE_MAGIC = b"FSA1\n"
ARCHIVE_SEPARATOR = b"--\n"
_FOOTER_PREFIX = b"\n#digest="
_FOOTER_LEN = len(_FOOTER_PREFIX) + 16 + 1  # prefix + hex digest + "\n"

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

SERVICE_KINDS = ("notebook", "epics", "none")

_NAME_RE = re.compile(r"[A-Za-z0-9_.-]+\Z")
_HEX16_RE = re.compile(rb"[0-9a-f]{16}\Z")


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash (corruption detection, not cryptography)."""
    h = FNV_OFFSET_BASIS
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def hex16(value: int) -> str:
    return format(value & 0xFFFFFFFFFFFFFFFF, "016x")


@dataclass(frozen=True)
class ContainerImage:
    name: str
    tag: str
    size: int  # declared bulk size in bytes; drives transfer timing
    service_kind: str
    service_port: int
    payload: bytes = b""

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise ValueError(f"bad image name {self.name!r}")
        if not _NAME_RE.match(self.tag):
            raise ValueError(f"bad image tag {self.tag!r}")
        if self.size < len(self.payload):
            raise ValueError(
                f"size {self.size} smaller than payload ({len(self.payload)} bytes)"
            )
        if self.service_kind not in SERVICE_KINDS:
            raise ValueError(f"bad service kind {self.service_kind!r}")
        if not 1 <= self.service_port <= 65535:
            raise ValueError(f"service port out of range: {self.service_port}")

    @property
    def ref(self) -> str:
        return f"{self.name}:{self.tag}"


@dataclass(frozen=True)
class ImageArchive:
    data: bytes

    @property
    def digest(self) -> int:
        return fnv1a64(self.data[:-_FOOTER_LEN])


def image_save(image: ContainerImage) -> ImageArchive:
    """Serialize deterministically; two saves of one image are byte-identical."""
    manifest = (
        f"name={image.name}\n"
        f"tag={image.tag}\n"
        f"size={image.size}\n"
        f"service={image.service_kind}:{image.service_port}\n"
    ).encode("ascii")
    body = ARCHIVE_MAGIC + manifest + ARCHIVE_SEPARATOR + image.payload
    footer = _FOOTER_PREFIX + hex16(fnv1a64(body)).encode("ascii") + b"\n"
    return ImageArchive(body + footer)


def image_load(archive: ImageArchive | bytes) -> ContainerImage:
    """Verify magic and digest, then reconstruct the image."""
    data = archive.data if isinstance(archive, ImageArchive) else archive
    if not data.startswith(ARCHIVE_MAGIC):
        raise BadMagicError(f"expected {ARCHIVE_MAGIC!r} magic")
    if len(data) < len(ARCHIVE_MAGIC) + _FOOTER_LEN:
        raise ArchiveError("truncated archive")
    footer = data[-_FOOTER_LEN:]
    if not footer.startswith(_FOOTER_PREFIX) or not footer.endswith(b"\n"):
        raise ArchiveError("malformed digest footer")
    digest_hex = footer[len(_FOOTER_PREFIX):-1]
    if not _HEX16_RE.match(digest_hex):
        raise ArchiveError(f"malformed digest {digest_hex!r}")
    body = data[:-_FOOTER_LEN]
    actual = hex16(fnv1a64(body))
    if actual != digest_hex.decode("ascii"):
        raise DigestMismatchError(
            f"archive digest {digest_hex.decode('ascii')} != computed {actual}"
        )
    return _parse_manifest(body)


def _parse_manifest(body: bytes) -> ContainerImage:
    rest = body[len(ARCHIVE_MAGIC):]
    fields = {}
    for key in ("name", "tag", "size", "service"):
        newline = rest.find(b"\n")
        if newline < 0:
            raise ArchiveError("truncated manifest")
        line, rest = rest[:newline], rest[newline + 1:]
        prefix = key.encode("ascii") + b"="
        if not line.startswith(prefix):
            raise ArchiveError(f"expected {key}= line, got {line!r}")
        try:
            fields[key] = line[len(prefix):].decode("ascii")
        except UnicodeDecodeError:
            raise ArchiveError(f"non-ASCII manifest value in {key}= line") from None
    if not rest.startswith(ARCHIVE_SEPARATOR):
        raise ArchiveError("missing manifest separator")
    payload = rest[len(ARCHIVE_SEPARATOR):]
    kind, sep, port_text = fields["service"].partition(":")
    if not sep:
        raise ArchiveError(f"malformed service field {fields['service']!r}")
    try:
        return ContainerImage(
            fields["name"], fields["tag"], int(fields["size"], 10),
            kind, int(port_text, 10), payload,
        )
    except ValueError as exc:
        raise ArchiveError(f"bad manifest: {exc}") from None


class Registry:
    """Per-host image store keyed by exact name:tag."""

    def __init__(self, host: str):
        self.host = host
        self.images: dict[str, ContainerImage] = {}

    def put(self, image: ContainerImage):
        self.images[image.ref] = image

    def get(self, ref: str) -> ContainerImage:
        image = self.images.get(ref)
        if image is None:
            raise RegistryError(f"image {ref!r} not in registry of {self.host!r}")
        return image

    def __contains__(self, ref: str) -> bool:
        return ref in self.images


@dataclass
class ContainerInstance:
    id: str
    image: ContainerImage
    image_digest: str  # hex16 of the archive digest
    host: str
    state: str  # "created" | "running" | "stopped"
    port_maps: tuple[PortMap, ...]
    token: str
    bridged: Interface | None = None
    results: list[str] = field(default_factory=list)


def make_token(container_id: str, seed: int) -> str:
    return hex16(fnv1a64(container_id.encode("ascii") + seed.to_bytes(8, "big")))


class ContainerRuntime:
    """Registries and running instances, driven by one engine."""

    def __init__(self, engine: SimEngine):
        self.engine = engine
        self.registries: dict[str, Registry] = {}
        self.instances: dict[str, ContainerInstance] = {}
        self._counter = 0

    def registry(self, host: str) -> Registry:
        if host not in self.engine.topology.nodes:
            raise RegistryError(f"unknown host {host!r}")
        return self.registries.setdefault(host, Registry(host))

    def next_container_id(self) -> str:
        self._counter += 1
        return f"c{self._counter}"


def ship_image(
    runtime: ContainerRuntime,
    ref: str,
    src_host: str,
    dst_host: str,
    on_complete=None,
) -> float:
    """Schedule a registry-to-registry copy; returns the arrival time.

    The transfer is timed on the declared image size over the routed path;
    load at the destination verifies the archive digest. Shipping to the
    local host is a zero-hop, same-tick load.
    """
    engine = runtime.engine
    topology = engine.topology
    image = runtime.registry(src_host).get(ref)
    src_addr = topology.interface_of(src_host).address
    dst_addr = topology.interface_of(dst_host).address
    path = route_lookup(topology, src_addr, dst_addr)
    archive = image_save(image)
    duration = transfer_time(path, image.size, topology)
    arrival = engine.now + duration
    engine.log_now("ship", f"{ref} {src_host}->{dst_host} size={image.size}")

    def complete():
        runtime.registry(dst_host).put(image_load(archive))
        if on_complete is not None:
            on_complete()
        return ("load", f"{ref} {dst_host}")

    engine.schedule(duration, complete)
    return arrival


def run_container(
    runtime: ContainerRuntime,
    host: str,
    ref: str,
    port_maps: tuple[PortMap, ...] = (),
    handler=None,
) -> ContainerInstance:
    """Start an instance: bridge, token, service binding, host port maps.

    `handler` overrides the service handler (the instrument wiring injects
    its PV server this way); by default a notebook image serves
    serve_notebook and other kinds get no binding unless provided.
    """
    engine = runtime.engine
    image = runtime.registry(host).get(ref)

    host_ports = [pm.host_port for pm in port_maps]
    if len(set(host_ports)) != len(host_ports):
        raise ValueError(f"duplicate host ports in maps: {port_maps}")
    for pm in port_maps:
        if pm.container_port != image.service_port:
            raise ValueError(
                f"port map {pm} does not reach the service port "
                f"{image.service_port} of {ref}"
            )

    cid = runtime.next_container_id()
    interface = attach_bridge(engine.topology, host, cid)
    instance = ContainerInstance(
        id=cid,
        image=image,
        image_digest=hex16(image_save(image).digest),
        host=host,
        state="running",
        port_maps=tuple(port_maps),
        token=make_token(cid, engine.seed),
        bridged=interface,
    )

    if handler is None and image.service_kind == "notebook":
        handler = make_notebook_handler(instance)
    if handler is not None:
        engine.bind_service(cid, image.service_port, handler)
        for pm in port_maps:
            engine.bind_service(host, pm.host_port, handler)
    elif port_maps:
        raise ValueError(f"port maps given but image {ref} exposes no service")

    runtime.instances[cid] = instance
    engine.log_now("run", f"{cid} {ref} {host} {interface.address}")
    return instance


def serve_notebook(instance: ContainerInstance, req) -> HttpResponse:
    """Token-gated notebook front page plus any attached result sections."""
    if req.query_get("token") != instance.token:
        return HttpResponse(403)
    if req.path != "/":
        return HttpResponse(404)
    body = f"notebook {instance.image.name} container={instance.id}\n"
    body += "".join(instance.results)
    return HttpResponse(200, body.encode("ascii"))


def make_notebook_handler(instance: ContainerInstance):
    def handler(payload: bytes, src) -> bytes:
        try:
            req = parse_http_request(payload)
        except ProtocolError:
            return render_http_response(HttpResponse(404, b"", "Bad Request"))
        return render_http_response(serve_notebook(instance, req))

    return handler
