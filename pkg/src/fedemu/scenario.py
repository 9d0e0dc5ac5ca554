"""Scenario files: the declarative input describing a federation.

One declaration per line; ``#`` comments and blank lines are skipped:

    seed=<n>
    site <name> subnet=<a.b.c.d/len>
    router <name> site=<site> ip=<addr>
    host <name> site=<site> ip=<addr>
    link <a> <b> bw=<bytes/s> lat=<seconds>
    wan <a> <b> bw=<bytes/s> lat=<seconds>
    image <name>:<tag> host=<host> size=<bytes> service=<kind>:<port>
    instrument <name> host=<host> phantom=disk:<n>:<radius>:<intensity> bins=<n_s>
    workflow <id>
      task <name> kind=<kind> <key>=<value> ...
    end

Errors carry the offending line number and the line itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .errors import ScenarioError
from .topology import NODE_NAME_RE, Ipv4Address, Subnet

DEFAULT_SEED = 42

CANONICAL_SCENARIO = "canonical"


@dataclass(frozen=True)
class SiteDecl:
    name: str
    subnet: Subnet


@dataclass(frozen=True)
class RouterDecl:
    name: str
    site: str
    ip: Ipv4Address


@dataclass(frozen=True)
class HostDecl:
    name: str
    site: str
    ip: Ipv4Address


@dataclass(frozen=True)
class LinkDecl:
    a: str
    b: str
    bandwidth: float
    latency: float
    kind: str = "lan"  # "lan" for `link` stanzas, "wan" for `wan` stanzas


@dataclass(frozen=True)
class ImageDecl:
    name: str
    tag: str
    host: str
    size: int
    service_kind: str
    service_port: int

    @property
    def ref(self) -> str:
        return f"{self.name}:{self.tag}"


@dataclass(frozen=True)
class PhantomDecl:
    kind: str  # only "disk"
    n: int
    radius: float
    intensity: float


@dataclass(frozen=True)
class InstrumentDecl:
    name: str
    host: str
    phantom: PhantomDecl
    bins: int


@dataclass(frozen=True)
class TaskDecl:
    name: str
    kind: str  # acquire | ship | run | reconstruct | fetch
    options: tuple[tuple[str, str], ...]

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.options:
            if k == key:
                return v
        return default

    @property
    def depends(self) -> tuple[str, ...]:
        raw = self.get("depends")
        return tuple(raw.split(",")) if raw else ()


@dataclass(frozen=True)
class WorkflowDecl:
    id: str
    tasks: tuple[TaskDecl, ...]


Declaration = (
    SiteDecl | RouterDecl | HostDecl | LinkDecl | ImageDecl | InstrumentDecl | WorkflowDecl
)


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = DEFAULT_SEED
    declarations: tuple = ()

    def _select(self, cls) -> tuple:
        return tuple(d for d in self.declarations if isinstance(d, cls))

    @property
    def sites(self) -> tuple[SiteDecl, ...]:
        return self._select(SiteDecl)

    @property
    def routers(self) -> tuple[RouterDecl, ...]:
        return self._select(RouterDecl)

    @property
    def hosts(self) -> tuple[HostDecl, ...]:
        return self._select(HostDecl)

    @property
    def links(self) -> tuple[LinkDecl, ...]:
        return self._select(LinkDecl)

    @property
    def images(self) -> tuple[ImageDecl, ...]:
        return self._select(ImageDecl)

    @property
    def instruments(self) -> tuple[InstrumentDecl, ...]:
        return self._select(InstrumentDecl)

    @property
    def workflows(self) -> tuple[WorkflowDecl, ...]:
        return self._select(WorkflowDecl)


# Required and optional task fields by kind.
TASK_FIELDS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "acquire": (("instrument", "angles"), ("depends",)),
    "ship": (("image", "from", "to"), ("depends",)),
    "run": (("image", "host", "ports"), ("depends",)),
    "reconstruct": (("source", "service", "n", "filter"), ("depends",)),
    "fetch": (("from", "service", "path"), ("depends",)),
}


def _parse_fields(
    tokens: list[str],
    required: tuple[str, ...],
    optional: tuple[str, ...],
    err,
) -> dict[str, str]:
    fields: dict[str, str] = {}
    for token in tokens:
        key, sep, value = token.partition("=")
        if not sep or not key:
            err(f"expected key=value, got {token!r}")
        if key in fields:
            err(f"duplicate field {key!r}")
        if key not in required and key not in optional:
            err(f"unknown field {key!r}")
        if not value:
            err(f"empty value for {key!r}")
        fields[key] = value
    for key in required:
        if key not in fields:
            err(f"missing field {key!r}")
    return fields


def _name(value: str, what: str, err) -> str:
    if not NODE_NAME_RE.match(value):
        err(f"bad {what} {value!r}")
    return value


def _int(value: str, what: str, err, minimum: int | None = None) -> int:
    try:
        parsed = int(value, 10)
    except ValueError:
        err(f"bad {what} {value!r}")
    if minimum is not None and parsed < minimum:
        err(f"{what} must be >= {minimum}, got {value}")
    return parsed


def _float(value: str, what: str, err) -> float:
    try:
        return float(value)
    except ValueError:
        err(f"bad {what} {value!r}")


def _image_ref(value: str, err) -> tuple[str, str]:
    name, sep, tag = value.partition(":")
    if not sep or not name or not tag:
        err(f"bad image reference {value!r} (want name:tag)")
    return _name(name, "image name", err), _name(tag, "image tag", err)


def _port(value: str, what: str, err) -> int:
    port = _int(value, what, err)
    if not 1 <= port <= 65535:
        err(f"{what} out of range: {value}")
    return port


def parse_scenario(text: str) -> ScenarioSpec:
    seed = DEFAULT_SEED
    seed_seen = False
    entries: list[tuple[Declaration, int, str]] = []
    task_entries: dict[str, list[tuple[TaskDecl, int, str]]] = {}
    workflow: tuple[str, int, str] | None = None  # (id, line_no, raw) while open
    pending_tasks: list[tuple[TaskDecl, int, str]] = []

    def at(line_no: int, raw: str):
        def err(msg: str):
            raise ScenarioError(msg, line_no=line_no, line=raw)

        return err

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        raw = raw_line.rstrip()
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        err = at(line_no, raw.strip())
        tokens = line.split()
        head = tokens[0]

        if head.startswith("seed="):
            if len(tokens) != 1:
                err("seed line takes no other fields")
            if seed_seen:
                err("duplicate seed")
            seed = _int(head.partition("=")[2], "seed", err)
            seed_seen = True
            continue

        if workflow is not None and head not in ("task", "end"):
            err(f"expected task or end inside workflow {workflow[0]!r}")

        if head == "site":
            if len(tokens) < 2:
                err("site needs a name")
            name = _name(tokens[1], "site name", err)
            fields = _parse_fields(tokens[2:], ("subnet",), (), err)
            try:
                subnet = Subnet.parse(fields["subnet"])
            except ValueError as exc:
                err(str(exc))
            entries.append((SiteDecl(name, subnet), line_no, raw))
        elif head in ("router", "host"):
            if len(tokens) < 2:
                err(f"{head} needs a name")
            name = _name(tokens[1], "node name", err)
            fields = _parse_fields(tokens[2:], ("site", "ip"), (), err)
            try:
                ip = Ipv4Address.parse(fields["ip"])
            except ValueError as exc:
                err(str(exc))
            cls = RouterDecl if head == "router" else HostDecl
            entries.append((cls(name, fields["site"], ip), line_no, raw))
        elif head in ("link", "wan"):
            if len(tokens) < 3:
                err(f"{head} needs two endpoints")
            a = _name(tokens[1], "endpoint", err)
            b = _name(tokens[2], "endpoint", err)
            fields = _parse_fields(tokens[3:], ("bw", "lat"), (), err)
            bandwidth = _float(fields["bw"], "bandwidth", err)
            latency = _float(fields["lat"], "latency", err)
            if bandwidth <= 0:
                err("bandwidth must be > 0")
            if latency < 0:
                err("latency must be >= 0")
            entries.append(
                (LinkDecl(a, b, bandwidth, latency, "wan" if head == "wan" else "lan"),
                 line_no, raw)
            )
        elif head == "image":
            if len(tokens) < 2:
                err("image needs a name:tag")
            name, tag = _image_ref(tokens[1], err)
            fields = _parse_fields(tokens[2:], ("host", "size", "service"), (), err)
            size = _int(fields["size"], "size", err, minimum=0)
            kind, sep, port_text = fields["service"].partition(":")
            if not sep:
                err(f"bad service {fields['service']!r} (want kind:port)")
            kind = _name(kind, "service kind", err)
            port = _port(port_text, "service port", err)
            entries.append((ImageDecl(name, tag, fields["host"], size, kind, port),
                            line_no, raw))
        elif head == "instrument":
            if len(tokens) < 2:
                err("instrument needs a name")
            name = _name(tokens[1], "instrument name", err)
            fields = _parse_fields(tokens[2:], ("host", "phantom", "bins"), (), err)
            parts = fields["phantom"].split(":")
            if len(parts) != 4 or parts[0] != "disk":
                err(f"bad phantom {fields['phantom']!r} (want disk:<n>:<radius>:<intensity>)")
            phantom = PhantomDecl(
                "disk",
                _int(parts[1], "phantom size", err, minimum=2),
                _float(parts[2], "phantom radius", err),
                _float(parts[3], "phantom intensity", err),
            )
            if not 0.0 < phantom.radius <= 1.0:
                err(f"phantom radius must be in (0, 1], got {parts[2]}")
            bins = _int(fields["bins"], "bins", err, minimum=2)
            entries.append((InstrumentDecl(name, fields["host"], phantom, bins),
                            line_no, raw))
        elif head == "workflow":
            if len(tokens) != 2:
                err("workflow takes exactly one id")
            workflow = (_name(tokens[1], "workflow id", err), line_no, raw)
            pending_tasks = []
        elif head == "task":
            if workflow is None:
                err("task outside workflow")
            if len(tokens) < 2:
                err("task needs a name")
            name = _name(tokens[1], "task name", err)
            # kind decides which fields are legal, so pull it out first
            kv = {}
            for token in tokens[2:]:
                key, sep, value = token.partition("=")
                if not sep or not key:
                    err(f"expected key=value, got {token!r}")
                if key in kv:
                    err(f"duplicate field {key!r}")
                kv[key] = value
            kind = kv.pop("kind", None)
            if kind is None:
                err("missing field 'kind'")
            if kind not in TASK_FIELDS:
                err(f"unknown task kind {kind!r}")
            required, optional = TASK_FIELDS[kind]
            for key, value in kv.items():
                if key not in required and key not in optional:
                    err(f"unknown field {key!r} for kind={kind}")
                if not value:
                    err(f"empty value for {key!r}")
            for key in required:
                if key not in kv:
                    err(f"missing field {key!r}")
            _validate_task_values(kind, kv, err)
            options = tuple((k, v) for k, v in kv.items())
            pending_tasks.append((TaskDecl(name, kind, options), line_no, raw))
        elif head == "end":
            if workflow is None:
                err("end outside workflow")
            if len(tokens) != 1:
                err("end takes no fields")
            wf_id, wf_line, wf_raw = workflow
            names = [t.name for t, *_ in pending_tasks]
            for task, t_line, t_raw in pending_tasks:
                if names.count(task.name) > 1:
                    raise ScenarioError(
                        f"duplicate task {task.name!r}", line_no=t_line, line=t_raw
                    )
                for dep in task.depends:
                    if dep not in names:
                        raise ScenarioError(
                            f"unknown dependency {dep!r}", line_no=t_line, line=t_raw
                        )
            entries.append(
                (WorkflowDecl(wf_id, tuple(t for t, *_ in pending_tasks)), wf_line, wf_raw)
            )
            task_entries[wf_id] = pending_tasks
            workflow = None
            pending_tasks = []
        else:
            err(f"unknown stanza {head!r}")

    if workflow is not None:
        raise ScenarioError(
            f"workflow {workflow[0]!r} not terminated by end",
            line_no=workflow[1],
            line=workflow[2],
        )

    _cross_check(entries, task_entries)
    return ScenarioSpec(seed=seed, declarations=tuple(d for d, *_ in entries))


def _validate_task_values(kind: str, kv: dict[str, str], err):
    if "angles" in kv:
        _int(kv["angles"], "angles", err, minimum=1)
    if "n" in kv:
        _int(kv["n"], "n", err, minimum=2)
    if "image" in kv:
        _image_ref(kv["image"], err)
    if "ports" in kv:
        for pair in kv["ports"].split(","):
            c, sep, h = pair.partition(":")
            if not sep:
                err(f"bad port map {pair!r} (want container:host)")
            _port(c, "container port", err)
            _port(h, "host port", err)
    if kind == "reconstruct" and kv.get("filter") != "ramlak":
        err(f"unknown filter {kv.get('filter')!r}")
    if kind == "fetch" and not kv["path"].startswith("/"):
        err(f"fetch path must start with /, got {kv['path']!r}")


def _fail(msg: str, line_no: int, raw: str):
    raise ScenarioError(msg, line_no=line_no, line=raw)


def _cross_check(entries, task_entries):
    sites: set[str] = set()
    nodes: set[str] = set()
    hosts: set[str] = set()
    images: set[str] = set()
    instruments: set[str] = set()
    workflows: set[str] = set()

    for decl, line_no, raw in entries:
        if isinstance(decl, SiteDecl):
            if decl.name in sites:
                _fail(f"duplicate site {decl.name!r}", line_no, raw)
            sites.add(decl.name)
        elif isinstance(decl, (RouterDecl, HostDecl)):
            if decl.name in nodes:
                _fail(f"duplicate node {decl.name!r}", line_no, raw)
            nodes.add(decl.name)
            if isinstance(decl, HostDecl):
                hosts.add(decl.name)
        elif isinstance(decl, ImageDecl):
            if decl.ref in images:
                _fail(f"duplicate image {decl.ref!r}", line_no, raw)
            images.add(decl.ref)
        elif isinstance(decl, InstrumentDecl):
            if decl.name in instruments:
                _fail(f"duplicate instrument {decl.name!r}", line_no, raw)
            instruments.add(decl.name)
        elif isinstance(decl, WorkflowDecl):
            if decl.id in workflows:
                _fail(f"duplicate workflow {decl.id!r}", line_no, raw)
            workflows.add(decl.id)

    for decl, line_no, raw in entries:
        if isinstance(decl, (RouterDecl, HostDecl)) and decl.site not in sites:
            _fail(f"unknown site {decl.site!r}", line_no, raw)
        elif isinstance(decl, LinkDecl):
            for end in (decl.a, decl.b):
                if end not in nodes:
                    _fail(f"unknown link endpoint {end!r}", line_no, raw)
        elif isinstance(decl, (ImageDecl, InstrumentDecl)) and decl.host not in hosts:
            _fail(f"unknown host {decl.host!r}", line_no, raw)
        elif isinstance(decl, WorkflowDecl):
            for task, t_line, t_raw in task_entries.get(decl.id, []):
                instrument = task.get("instrument")
                if instrument and instrument not in instruments:
                    _fail(f"unknown instrument {instrument!r}", t_line, t_raw)
                image = task.get("image")
                if image and image not in images:
                    _fail(f"unknown image {image!r}", t_line, t_raw)
                for key in ("host", "from", "to"):
                    value = task.get(key)
                    if value and value not in hosts:
                        _fail(f"unknown host {value!r}", t_line, t_raw)


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 2**53:
        return str(int(value))
    return repr(value)


def render_scenario(spec: ScenarioSpec) -> str:
    """Canonical text for a spec; parse(render(spec)) == spec."""
    lines = [f"seed={spec.seed}"]
    for decl in spec.declarations:
        if isinstance(decl, SiteDecl):
            lines.append(f"site {decl.name} subnet={decl.subnet}")
        elif isinstance(decl, RouterDecl):
            lines.append(f"router {decl.name} site={decl.site} ip={decl.ip}")
        elif isinstance(decl, HostDecl):
            lines.append(f"host {decl.name} site={decl.site} ip={decl.ip}")
        elif isinstance(decl, LinkDecl):
            head = "wan" if decl.kind == "wan" else "link"
            lines.append(
                f"{head} {decl.a} {decl.b} "
                f"bw={_format_number(decl.bandwidth)} lat={_format_number(decl.latency)}"
            )
        elif isinstance(decl, ImageDecl):
            lines.append(
                f"image {decl.ref} host={decl.host} size={decl.size} "
                f"service={decl.service_kind}:{decl.service_port}"
            )
        elif isinstance(decl, InstrumentDecl):
            p = decl.phantom
            lines.append(
                f"instrument {decl.name} host={decl.host} "
                f"phantom={p.kind}:{p.n}:{_format_number(p.radius)}:"
                f"{_format_number(p.intensity)} bins={decl.bins}"
            )
        elif isinstance(decl, WorkflowDecl):
            lines.append(f"workflow {decl.id}")
            for task in decl.tasks:
                opts = " ".join(f"{k}={v}" for k, v in task.options)
                suffix = f" {opts}" if opts else ""
                lines.append(f"  task {task.name} kind={task.kind}{suffix}")
            lines.append("end")
    return "\n".join(lines) + "\n"


def canonical_text() -> str:
    """The packaged three-site reference scenario."""
    return (
        resources.files("fedemu")
        .joinpath("scenarios", f"{CANONICAL_SCENARIO}.scn")
        .read_text(encoding="utf-8")
    )


def canonical_spec() -> ScenarioSpec:
    return parse_scenario(canonical_text())
