"""Static model of the federation: sites, hosts, gateway routers, links.

Addresses live in per-site subnets. Routing is hop-count shortest path over
the link graph, compiled into per-node next-hop tables. Bridged containers
draw addresses from their host's site subnet starting at offset .10 and are
treated as leaves of the host: paths start and end at nodes.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass

from .errors import (
    SubnetExhaustedError,
    TopologyError,
    UnknownAddressError,
    UnreachableError,
)

NODE_NAME_RE = re.compile(r"[A-Za-z0-9_.-]+\Z")

# Routing table sentinels.
DIRECT = "direct"
UNREACHABLE = "unreachable"

# First host offset handed to bridged containers inside a site subnet.
CONTAINER_ADDR_OFFSET = 10


@dataclass(frozen=True, order=True)
class Ipv4Address:
    octets: tuple[int, int, int, int]

    def __post_init__(self):
        if len(self.octets) != 4 or any(not 0 <= o <= 255 for o in self.octets):
            raise ValueError(f"bad IPv4 octets: {self.octets!r}")

    @classmethod
    def parse(cls, text: str) -> "Ipv4Address":
        parts = text.split(".")
        if len(parts) != 4:
            raise ValueError(f"bad IPv4 address: {text!r}")
        try:
            octets = tuple(int(p, 10) for p in parts)
        except ValueError:
            raise ValueError(f"bad IPv4 address: {text!r}") from None
        if any(not 0 <= o <= 255 for o in octets) or any(
            p != str(o) for p, o in zip(parts, octets)
        ):
            raise ValueError(f"bad IPv4 address: {text!r}")
        return cls(octets)

    @classmethod
    def from_int(cls, value: int) -> "Ipv4Address":
        if not 0 <= value < 2**32:
            raise ValueError(f"address out of range: {value}")
        return cls(((value >> 24) & 255, (value >> 16) & 255, (value >> 8) & 255, value & 255))

    def to_int(self) -> int:
        a, b, c, d = self.octets
        return (a << 24) | (b << 16) | (c << 8) | d

    def __str__(self) -> str:
        return ".".join(str(o) for o in self.octets)


@dataclass(frozen=True)
class Subnet:
    base: Ipv4Address
    prefix_len: int

    def __post_init__(self):
        if not 0 <= self.prefix_len <= 32:
            raise ValueError(f"bad prefix length: {self.prefix_len}")
        if self.base.to_int() & self.host_mask() != 0:
            raise ValueError(f"subnet base has host bits set: {self}")

    @classmethod
    def parse(cls, text: str) -> "Subnet":
        base_text, _, len_text = text.partition("/")
        if not len_text:
            raise ValueError(f"bad subnet (missing /len): {text!r}")
        return cls(Ipv4Address.parse(base_text), int(len_text, 10))

    def host_mask(self) -> int:
        return (1 << (32 - self.prefix_len)) - 1

    def size(self) -> int:
        return 1 << (32 - self.prefix_len)

    def contains(self, addr: Ipv4Address) -> bool:
        return (addr.to_int() ^ self.base.to_int()) & ~self.host_mask() == 0

    def host_address(self, offset: int) -> Ipv4Address:
        if not 0 <= offset < self.size():
            raise ValueError(f"offset {offset} outside {self}")
        return Ipv4Address.from_int(self.base.to_int() + offset)

    def __str__(self) -> str:
        return f"{self.base}/{self.prefix_len}"


@dataclass(frozen=True)
class Node:
    name: str
    kind: str  # "host" | "router"

    def __post_init__(self):
        if not NODE_NAME_RE.match(self.name):
            raise ValueError(f"bad node name: {self.name!r}")
        if self.kind not in ("host", "router"):
            raise ValueError(f"bad node kind: {self.kind!r}")


@dataclass(frozen=True)
class Site:
    name: str
    subnet: Subnet
    gateway: str  # router node name


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    bandwidth: float  # bytes/second, > 0
    latency: float  # seconds, >= 0
    kind: str = "lan"  # "lan" | "wan"


@dataclass(frozen=True)
class Interface:
    owner: str  # node name or container id
    address: Ipv4Address
    subnet: Subnet


def _link_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


class FederationTopology:
    """Sites, nodes, links, interfaces and the compiled routing tables.

    Mutation after build happens only through :func:`attach_bridge`, which the
    simulation loop owns; everything else treats the topology as read-only.
    """

    def __init__(self):
        self.sites: dict[str, Site] = {}
        self.nodes: dict[str, Node] = {}
        self.links: dict[tuple[str, str], Link] = {}
        self.interfaces: dict[str, Interface] = {}
        self.site_of: dict[str, str] = {}
        self.containers_on: dict[str, str] = {}  # container id -> host node
        self.routing: dict[str, dict[str, str]] = {}
        self._addr_index: dict[Ipv4Address, str] = {}

    def __eq__(self, other) -> bool:
        if not isinstance(other, FederationTopology):
            return NotImplemented
        return (
            self.sites == other.sites
            and self.nodes == other.nodes
            and self.links == other.links
            and self.interfaces == other.interfaces
            and self.site_of == other.site_of
            and self.containers_on == other.containers_on
            and self.routing == other.routing
        )

    # -- queries -----------------------------------------------------------

    def adjacency(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {name: [] for name in self.nodes}
        for link in self.links.values():
            adj[link.a].append(link.b)
            adj[link.b].append(link.a)
        for peers in adj.values():
            peers.sort()
        return adj

    def link_between(self, a: str, b: str) -> Link | None:
        return self.links.get(_link_key(a, b))

    def interface_of(self, owner: str) -> Interface:
        try:
            return self.interfaces[owner]
        except KeyError:
            raise UnknownAddressError(f"{owner!r} has no interface") from None

    def owner_of(self, addr: Ipv4Address) -> str | None:
        return self._addr_index.get(addr)

    def node_of(self, owner: str) -> str:
        """The node an interface owner sits on (containers map to their host)."""
        return self.containers_on.get(owner, owner)

    def site_subnet_of(self, owner: str) -> Subnet:
        return self.sites[self.site_of[owner]].subnet

    def add_interface(self, owner: str, address: Ipv4Address, subnet: Subnet):
        if owner in self.interfaces:
            raise TopologyError(f"{owner!r} already has an interface")
        if address in self._addr_index:
            raise TopologyError(f"duplicate address {address}")
        self.interfaces[owner] = Interface(owner, address, subnet)
        self._addr_index[address] = owner


def build_topology(scenario) -> FederationTopology:
    """Construct and validate a topology from a parsed scenario."""
    topo = FederationTopology()

    gateways_by_site: dict[str, str] = {}
    for decl in scenario.routers:
        if gateways_by_site.setdefault(decl.site, decl.name) != decl.name:
            raise TopologyError(f"site {decl.site!r} has more than one gateway")
    for decl in scenario.sites:
        if decl.name in topo.sites:
            raise TopologyError(f"duplicate site {decl.name!r}")
        gateway = gateways_by_site.get(decl.name)
        if gateway is None:
            raise TopologyError(f"site {decl.name!r} has no gateway router")
        topo.sites[decl.name] = Site(decl.name, decl.subnet, gateway)

    def add_node(name: str, kind: str, site: str, address: Ipv4Address):
        if name in topo.nodes:
            raise TopologyError(f"duplicate node {name!r}")
        if site not in topo.sites:
            raise TopologyError(f"node {name!r} references unknown site {site!r}")
        subnet = topo.sites[site].subnet
        if not subnet.contains(address):
            raise TopologyError(f"{name!r}: address {address} not in {subnet} of site {site!r}")
        topo.nodes[name] = Node(name, kind)
        topo.add_interface(name, address, subnet)
        topo.site_of[name] = site

    for decl in scenario.routers:
        add_node(decl.name, "router", decl.site, decl.ip)
    for decl in scenario.hosts:
        add_node(decl.name, "host", decl.site, decl.ip)

    for decl in scenario.links:
        for end in (decl.a, decl.b):
            if end not in topo.nodes:
                raise TopologyError(f"link endpoint {end!r} unknown")
        if decl.a == decl.b:
            raise TopologyError(f"self-link on {decl.a!r}")
        key = _link_key(decl.a, decl.b)
        if key in topo.links:
            raise TopologyError(f"duplicate link {decl.a!r}--{decl.b!r}")
        if decl.bandwidth <= 0:
            raise TopologyError(f"link {decl.a!r}--{decl.b!r}: bandwidth must be > 0")
        if decl.latency < 0:
            raise TopologyError(f"link {decl.a!r}--{decl.b!r}: latency must be >= 0")
        topo.links[key] = Link(decl.a, decl.b, decl.bandwidth, decl.latency, decl.kind)

    return compile_routes(topo)


def _multi_source_dist(adj: dict[str, list[str]], sources: set[str]) -> dict[str, int]:
    dist = {s: 0 for s in sources if s in adj}
    queue = deque(sorted(dist))
    while queue:
        cur = queue.popleft()
        for nxt in adj[cur]:
            if nxt not in dist:
                dist[nxt] = dist[cur] + 1
                queue.append(nxt)
    return dist


def compile_routes(topology: FederationTopology) -> FederationTopology:
    """Fill per-node next-hop tables: destination subnet -> next hop.

    Shortest path by hop count; ties broken by lexicographically smallest
    next-hop name. Entries are DIRECT for a node's own subnet and UNREACHABLE
    where no path exists.
    """
    adj = topology.adjacency()
    routing: dict[str, dict[str, str]] = {}
    per_subnet: list[tuple[str, set[str], dict[str, int]]] = []
    for site in topology.sites.values():
        key = str(site.subnet)
        owners = {
            name
            for name in topology.nodes
            if topology.interfaces[name].subnet == site.subnet
        }
        per_subnet.append((key, owners, _multi_source_dist(adj, owners)))
    for name in topology.nodes:
        table: dict[str, str] = {}
        for key, owners, dist in per_subnet:
            if name in owners:
                table[key] = DIRECT
            elif name not in dist:
                table[key] = UNREACHABLE
            else:
                table[key] = min(m for m in adj[name] if dist.get(m, -1) == dist[name] - 1)
        routing[name] = table
    topology.routing = routing
    return topology


def _greedy_shortest_path(adj: dict[str, list[str]], a: str, b: str) -> list[str] | None:
    """Deterministic hop-count shortest path a -> b, or None if disconnected.

    BFS distances from b, then a greedy walk from a picking the
    lexicographically smallest neighbor that decreases the distance.
    """
    dist = _multi_source_dist(adj, {b})
    if a not in dist:
        return None
    path = [a]
    cur = a
    while cur != b:
        cur = min(m for m in adj[cur] if dist.get(m, -1) == dist[cur] - 1)
        path.append(cur)
    return path


def route_lookup(
    topology: FederationTopology, src: Ipv4Address, dst: Ipv4Address
) -> list[str]:
    """Ordered node list from src's node to dst's node.

    Container addresses resolve to the hosting node. Paths are
    direction-normalized so route_lookup(b, a) is exactly the reverse of
    route_lookup(a, b) whenever both succeed.
    """
    src_owner = topology.owner_of(src)
    if src_owner is None:
        raise UnknownAddressError(f"no interface has address {src}")
    dst_owner = topology.owner_of(dst)
    if dst_owner is None:
        raise UnknownAddressError(f"no interface has address {dst}")
    src_node = topology.node_of(src_owner)
    dst_node = topology.node_of(dst_owner)
    if src_node == dst_node:
        return [src_node]
    adj = topology.adjacency()
    if src_node <= dst_node:
        path = _greedy_shortest_path(adj, src_node, dst_node)
    else:
        back = _greedy_shortest_path(adj, dst_node, src_node)
        path = None if back is None else list(reversed(back))
    if path is None:
        raise UnreachableError(f"{dst} unreachable from {src}")
    return path


def attach_bridge(
    topology: FederationTopology, host: str, container_id: str
) -> Interface:
    """Bridge a container onto its host's site subnet.

    The container receives the lowest unassigned address at offset >= .10 and
    becomes addressable from the whole federation as a leaf of the host.
    """
    node = topology.nodes.get(host)
    if node is None or node.kind != "host":
        raise TopologyError(f"unknown host {host!r}")
    attached = topology.containers_on.get(container_id)
    if attached is not None and attached != host:
        raise TopologyError(f"container {container_id!r} not on host {host!r}")
    if container_id in topology.interfaces or container_id in topology.nodes:
        raise TopologyError(f"name {container_id!r} already in use")
    subnet = topology.site_subnet_of(host)
    address = None
    for offset in range(CONTAINER_ADDR_OFFSET, subnet.size() - 1):
        candidate = subnet.host_address(offset)
        if topology.owner_of(candidate) is None:
            address = candidate
            break
    if address is None:
        raise SubnetExhaustedError(f"no free address in {subnet} for {container_id!r}")
    topology.add_interface(container_id, address, subnet)
    topology.containers_on[container_id] = host
    topology.site_of[container_id] = topology.site_of[host]
    return topology.interfaces[container_id]
