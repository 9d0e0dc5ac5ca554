"""Wire formats carried over the simulated network.

Two line-oriented protocols, both bit-exact and fully round-trippable:

* EPICS-lite — instrument control. Requests ``VERB PV [VALUE]\\n`` with verbs
  GET/PUT/MON/STOP; responses ``OK <pv> <type> <value> <t>\\n`` (EVT same
  shape) or ``ERR <code> <msg...>\\n``. Timestamps render with exactly nine
  decimals so logs stay byte-stable.
* HTTP-lite — service access. GET-only requests, HTTP/1.0, query strings,
  Content-Length-delimited response bodies, status codes 200/403/404.

Parsers raise ProtocolError (and nothing else) on any malformed input.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .errors import ProtocolError

PV_NAME_RE = re.compile(r"[A-Za-z0-9:._-]+\Z")

EPICS_VERBS = ("GET", "PUT", "MON", "STOP")
EPICS_TYPE_TAGS = ("f64", "i64", "str", "enum")

HTTP_VERSION = "HTTP/1.0"
HTTP_REASONS = {200: "OK", 403: "Forbidden", 404: "Not Found"}

_QUERY_FORBIDDEN = set(' &=?#\r\n"')


def _check(cond: bool, msg: str):
    if not cond:
        raise ProtocolError(msg)


def _one_token(value: str, what: str):
    _check(bool(value), f"empty {what}")
    _check(
        not any(c in value for c in " \t\r\n"),
        f"{what} must be a single token: {value!r}",
    )


# -- EPICS-lite -------------------------------------------------------------


@dataclass(frozen=True)
class EpicsRequest:
    verb: str
    pv_name: str
    value: str | None = None

    def __post_init__(self):
        _check(self.verb in EPICS_VERBS, f"unknown verb {self.verb!r}")
        _check(bool(PV_NAME_RE.match(self.pv_name)), f"bad PV name {self.pv_name!r}")
        if self.verb == "PUT":
            _check(self.value is not None and self.value != "", "PUT requires a value")
            _check(
                "\n" not in self.value and "\r" not in self.value,
                "value must not contain newlines",
            )
        else:
            _check(self.value is None, f"{self.verb} takes no value")


def render_epics_request(req: EpicsRequest) -> str:
    if req.value is None:
        return f"{req.verb} {req.pv_name}\n"
    return f"{req.verb} {req.pv_name} {req.value}\n"


def parse_epics_request(line: str | bytes) -> EpicsRequest:
    text = _as_line(line)
    verb, _, rest = text.partition(" ")
    _check(verb in EPICS_VERBS, f"unknown verb {verb!r}")
    pv, sep, value = rest.partition(" ")
    _check(bool(PV_NAME_RE.match(pv)), f"bad PV name {pv!r}")
    if not sep:
        value = None
    return EpicsRequest(verb, pv, value)


@dataclass(frozen=True)
class EpicsResponse:
    status: str  # "OK" | "EVT" | "ERR"
    pv_name: str | None = None
    type_tag: str | None = None
    value: str | None = None
    timestamp: float | None = None
    err_code: int | None = None
    err_msg: str | None = None

    def __post_init__(self):
        if self.status in ("OK", "EVT"):
            _check(self.err_code is None and self.err_msg is None,
                   f"{self.status} carries no error fields")
            _check(bool(PV_NAME_RE.match(self.pv_name or "")),
                   f"bad PV name {self.pv_name!r}")
            _check(self.type_tag in EPICS_TYPE_TAGS,
                   f"bad type tag {self.type_tag!r}")
            _one_token(self.value or "", "value")
            _check(
                self.timestamp is not None
                and math.isfinite(self.timestamp)
                and self.timestamp >= 0,
                f"bad timestamp {self.timestamp!r}",
            )
        elif self.status == "ERR":
            _check(
                self.pv_name is None and self.type_tag is None
                and self.value is None and self.timestamp is None,
                "ERR carries only code and message",
            )
            _check(isinstance(self.err_code, int) and 0 <= self.err_code <= 999,
                   f"bad error code {self.err_code!r}")
            _check(bool(self.err_msg), "empty error message")
            _check(
                "\n" not in self.err_msg and "\r" not in self.err_msg,
                "error message must not contain newlines",
            )
        else:
            raise ProtocolError(f"unknown status {self.status!r}")


def epics_ok(pv: str, type_tag: str, value: str, timestamp: float) -> EpicsResponse:
    return EpicsResponse("OK", pv, type_tag, value, timestamp)


def epics_evt(pv: str, type_tag: str, value: str, timestamp: float) -> EpicsResponse:
    return EpicsResponse("EVT", pv, type_tag, value, timestamp)


def epics_err(code: int, msg: str) -> EpicsResponse:
    return EpicsResponse("ERR", err_code=code, err_msg=msg)


def render_epics_response(resp: EpicsResponse) -> str:
    if resp.status == "ERR":
        return f"ERR {resp.err_code} {resp.err_msg}\n"
    return (
        f"{resp.status} {resp.pv_name} {resp.type_tag} "
        f"{resp.value} {resp.timestamp:.9f}\n"
    )


def parse_epics_response(line: str | bytes) -> EpicsResponse:
    text = _as_line(line)
    status, _, rest = text.partition(" ")
    if status == "ERR":
        code_text, sep, msg = rest.partition(" ")
        _check(bool(sep), "ERR needs a code and a message")
        try:
            code = int(code_text, 10)
        except ValueError:
            raise ProtocolError(f"bad error code {code_text!r}") from None
        return EpicsResponse("ERR", err_code=code, err_msg=msg)
    if status in ("OK", "EVT"):
        parts = rest.split(" ")
        _check(len(parts) == 4, f"{status} needs pv, type, value, timestamp")
        pv, type_tag, value, stamp_text = parts
        try:
            timestamp = float(stamp_text)
        except ValueError:
            raise ProtocolError(f"bad timestamp {stamp_text!r}") from None
        return EpicsResponse(status, pv, type_tag, value, timestamp)
    raise ProtocolError(f"unknown status {status!r}")


def _as_line(line: str | bytes) -> str:
    if isinstance(line, bytes):
        try:
            line = line.decode("ascii")
        except UnicodeDecodeError:
            raise ProtocolError("non-ASCII input") from None
    if line.endswith("\n"):
        line = line[:-1]
    _check("\n" not in line and "\r" not in line, "input must be a single line")
    return line


# -- HTTP-lite ---------------------------------------------------------------


def _check_query_token(text: str, what: str, allow_empty: bool):
    if not allow_empty:
        _check(bool(text), f"empty {what}")
    _check(
        not any(c in _QUERY_FORBIDDEN for c in text),
        f"bad character in {what}: {text!r}",
    )


@dataclass(frozen=True)
class HttpRequest:
    path: str
    query: tuple[tuple[str, str], ...] = ()
    method: str = "GET"

    def __post_init__(self):
        _check(self.method == "GET", f"unsupported method {self.method!r}")
        _check(self.path.startswith("/"), f"path must start with /: {self.path!r}")
        _check(
            not any(c in self.path for c in " ?#\r\n"),
            f"bad character in path {self.path!r}",
        )
        seen = set()
        for key, value in self.query:
            _check_query_token(key, "query key", allow_empty=False)
            _check_query_token(value, "query value", allow_empty=True)
            _check(key not in seen, f"duplicate query key {key!r}")
            seen.add(key)

    def query_get(self, key: str) -> str | None:
        for k, v in self.query:
            if k == key:
                return v
        return None


def render_http_request(req: HttpRequest) -> bytes:
    target = req.path
    if req.query:
        target += "?" + "&".join(f"{k}={v}" for k, v in req.query)
    return f"GET {target} {HTTP_VERSION}\r\n\r\n".encode("ascii")


def parse_http_request(data: bytes | str) -> HttpRequest:
    head = _http_head(data, allow_body=False)[0]
    lines = head.split("\r\n")
    parts = lines[0].split(" ")
    _check(len(parts) == 3, f"malformed request line {lines[0]!r}")
    method, target, version = parts
    _check(method == "GET", f"unsupported method {method!r}")
    _check(version == HTTP_VERSION, f"unsupported version {version!r}")
    for header in lines[1:]:
        _check(":" in header, f"malformed header {header!r}")
    path, _, query_text = target.partition("?")
    query: list[tuple[str, str]] = []
    seen: set[str] = set()
    for chunk in query_text.split("&"):
        if not chunk:
            continue
        key, _, value = chunk.partition("=")
        if key and key not in seen:  # duplicate keys keep the first value
            query.append((key, value))
            seen.add(key)
    return HttpRequest(path, tuple(query))


@dataclass(frozen=True)
class HttpResponse:
    status_code: int
    body: bytes = b""
    reason: str = field(default="")

    def __post_init__(self):
        _check(self.status_code in HTTP_REASONS,
               f"unsupported status code {self.status_code!r}")
        if not self.reason:
            object.__setattr__(self, "reason", HTTP_REASONS[self.status_code])
        _check(
            "\r" not in self.reason and "\n" not in self.reason and bool(self.reason),
            f"bad reason {self.reason!r}",
        )

    @property
    def content_length(self) -> int:
        return len(self.body)


def render_http_response(resp: HttpResponse) -> bytes:
    head = (
        f"{HTTP_VERSION} {resp.status_code} {resp.reason}\r\n"
        f"Content-Length: {resp.content_length}\r\n\r\n"
    )
    return head.encode("ascii") + resp.body


def parse_http_response(data: bytes | str) -> HttpResponse:
    head, body = _http_head(data, allow_body=True)
    lines = head.split("\r\n")
    parts = lines[0].split(" ", 2)
    _check(len(parts) == 3, f"malformed status line {lines[0]!r}")
    version, code_text, reason = parts
    _check(version == HTTP_VERSION, f"unsupported version {version!r}")
    try:
        code = int(code_text, 10)
    except ValueError:
        raise ProtocolError(f"bad status code {code_text!r}") from None
    content_length = None
    for header in lines[1:]:
        name, sep, value = header.partition(":")
        _check(bool(sep), f"malformed header {header!r}")
        if name.strip().lower() == "content-length":
            try:
                content_length = int(value.strip(), 10)
            except ValueError:
                raise ProtocolError(f"bad Content-Length {value!r}") from None
    _check(content_length is not None, "missing Content-Length")
    _check(
        content_length == len(body),
        f"Content-Length {content_length} != body length {len(body)}",
    )
    return HttpResponse(code, body, reason)


def _http_head(data: bytes | str, allow_body: bool) -> tuple[str, bytes]:
    if isinstance(data, str):
        data = data.encode("ascii", errors="surrogateescape")
    marker = data.find(b"\r\n\r\n")
    _check(marker >= 0, "missing terminating blank line")
    head_bytes, body = data[:marker], data[marker + 4:]
    _check(allow_body or not body, "unexpected bytes after headers")
    try:
        head = head_bytes.decode("ascii")
    except UnicodeDecodeError:
        raise ProtocolError("non-ASCII header bytes") from None
    _check("\n" not in head.replace("\r\n", ""), "bare newline in headers")
    return head, body
