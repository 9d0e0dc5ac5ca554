"""Wire-format round-trips and fuzz behavior for the two line protocols."""

import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedemu.errors import ProtocolError
from fedemu.protocols import (
    EpicsRequest,
    EpicsResponse,
    HttpRequest,
    HttpResponse,
    epics_err,
    epics_evt,
    epics_ok,
    parse_epics_request,
    parse_epics_response,
    parse_http_request,
    parse_http_response,
    render_epics_request,
    render_epics_response,
    render_http_request,
    render_http_response,
)

PV_ALPHABET = string.ascii_letters + string.digits + ":._-"

pv_names = st.text(alphabet=PV_ALPHABET, min_size=1, max_size=30)
values = st.text(
    alphabet=string.ascii_letters + string.digits + ".-+:", min_size=1, max_size=20
)


class TestEpicsRequests:
    def test_get_render(self):
        req = EpicsRequest("GET", "BL3:MOT:ROT")
        assert render_epics_request(req) == "GET BL3:MOT:ROT\n"

    def test_put_render(self):
        req = EpicsRequest("PUT", "BL3:MOT:ROT", "12.5")
        assert render_epics_request(req) == "PUT BL3:MOT:ROT 12.5\n"

    def test_put_requires_value(self):
        with pytest.raises(ProtocolError):
            EpicsRequest("PUT", "a:b")

    def test_get_forbids_value(self):
        with pytest.raises(ProtocolError):
            EpicsRequest("GET", "a:b", "1")

    @pytest.mark.parametrize(
        "raw",
        [b"", b"\n", b"PEEK a\n", b"GET\n", b"GET  \n", b"GET a!\n", b"PUT a\n",
         b"get a\n", b"GET a b c\n" b"", "GÉT a\n".encode()],
    )
    def test_malformed_requests(self, raw):
        with pytest.raises(ProtocolError):
            parse_epics_request(raw)

    @given(verb=st.sampled_from(["GET", "MON", "STOP"]), pv=pv_names)
    def test_valueless_round_trip(self, verb, pv):
        req = EpicsRequest(verb, pv)
        assert parse_epics_request(render_epics_request(req).encode()) == req

    @given(pv=pv_names, value=values)
    def test_put_round_trip(self, pv, value):
        req = EpicsRequest("PUT", pv, value)
        assert parse_epics_request(render_epics_request(req).encode()) == req

    def test_put_value_may_contain_spaces(self):
        parsed = parse_epics_request(b"PUT a:b hello world\n")
        assert parsed.value == "hello world"


class TestEpicsResponses:
    def test_ok_render_fixed_width_time(self):
        resp = epics_ok("BL3:MOT:ROT", "f64", "12.5", 1.5)
        assert render_epics_response(resp) == "OK BL3:MOT:ROT f64 12.5 1.500000000\n"

    def test_err_render(self):
        assert render_epics_response(epics_err(404, "unknown pv")) == "ERR 404 unknown pv\n"

    def test_evt_round_trip(self):
        resp = epics_evt("a:b", "i64", "3", 0.25)
        assert parse_epics_response(render_epics_response(resp).encode()) == resp

    def test_err_round_trip(self):
        resp = epics_err(400, "type mismatch")
        assert parse_epics_response(render_epics_response(resp).encode()) == resp

    def test_value_must_be_single_token(self):
        with pytest.raises(ProtocolError):
            epics_ok("a:b", "str", "two words", 0.0)

    def test_bad_type_tag(self):
        with pytest.raises(ProtocolError):
            epics_ok("a:b", "f32", "1", 0.0)

    def test_negative_time_rejected(self):
        with pytest.raises(ProtocolError):
            epics_ok("a:b", "f64", "1", -0.5)

    @pytest.mark.parametrize(
        "raw", [b"OK a:b f64 1\n", b"NO a b c 0.0\n", b"ERR x msg\n", b"OK a:b f64 1 x\n"]
    )
    def test_malformed_responses(self, raw):
        with pytest.raises(ProtocolError):
            parse_epics_response(raw)

    @given(
        pv=pv_names,
        tag=st.sampled_from(["f64", "i64", "str", "enum"]),
        value=values,
        t=st.floats(min_value=0, max_value=1e6, allow_nan=False),
    )
    def test_ok_round_trip(self, pv, tag, value, t):
        resp = epics_ok(pv, tag, value, t)
        parsed = parse_epics_response(render_epics_response(resp).encode())
        assert (parsed.pv_name, parsed.type_tag, parsed.value) == (pv, tag, value)
        assert parsed.timestamp == pytest.approx(t, abs=5e-10)


class TestHttpRequests:
    def test_render_minimal(self):
        req = HttpRequest("/")
        assert render_http_request(req) == b"GET / HTTP/1.0\r\n\r\n"

    def test_render_with_query(self):
        req = HttpRequest("/view", (("token", "abc"), ("n", "3")))
        assert render_http_request(req) == b"GET /view?token=abc&n=3 HTTP/1.0\r\n\r\n"

    def test_parse_ignores_headers(self):
        raw = b"GET /x?a=1 HTTP/1.0\r\nHost: anywhere\r\nAccept: */*\r\n\r\n"
        req = parse_http_request(raw)
        assert req.path == "/x"
        assert req.query_get("a") == "1"

    def test_duplicate_query_keys_keep_first(self):
        req = parse_http_request(b"GET /?a=1&a=2&b=3 HTTP/1.0\r\n\r\n")
        assert req.query_get("a") == "1"
        assert req.query_get("b") == "3"

    def test_query_get_default(self):
        assert HttpRequest("/").query_get("token") is None

    @pytest.mark.parametrize(
        "raw",
        [
            b"",
            b"GET /\r\n\r\n",
            b"POST / HTTP/1.0\r\n\r\n",
            b"GET / HTTP/1.1\r\n\r\n",
            b"GET / HTTP/1.0\r\nbadheader\r\n\r\n",
            b"GET / HTTP/1.0\r\n",  # no terminating blank line
            b"GET / HTTP/1.0\nHost: x\n\n",  # bare newlines
            "GET /é HTTP/1.0\r\n\r\n".encode(),
        ],
    )
    def test_malformed_requests(self, raw):
        with pytest.raises(ProtocolError):
            parse_http_request(raw)

    @given(
        path=st.text(alphabet=string.ascii_letters + string.digits + "/._-", min_size=1).map(
            lambda s: "/" + s.lstrip("/")
        ),
        query=st.lists(
            st.tuples(
                st.text(alphabet=string.ascii_lowercase, min_size=1, max_size=8),
                st.text(alphabet=string.ascii_letters + string.digits, max_size=8),
            ),
            max_size=4,
            unique_by=lambda kv: kv[0],
        ),
    )
    def test_round_trip(self, path, query):
        req = HttpRequest(path, tuple(query))
        assert parse_http_request(render_http_request(req)) == req


class TestHttpResponses:
    def test_render(self):
        raw = render_http_response(HttpResponse(200, b"hi\n"))
        assert raw == b"HTTP/1.0 200 OK\r\nContent-Length: 3\r\n\r\nhi\n"

    def test_reason_auto_filled(self):
        assert HttpResponse(404).reason == "Not Found"
        assert HttpResponse(403).reason == "Forbidden"

    def test_round_trip_with_body(self):
        resp = HttpResponse(200, b"x" * 100)
        assert parse_http_response(render_http_response(resp)) == resp

    def test_content_length_must_match(self):
        with pytest.raises(ProtocolError):
            parse_http_response(b"HTTP/1.0 200 OK\r\nContent-Length: 5\r\n\r\nhi")

    def test_missing_content_length(self):
        with pytest.raises(ProtocolError):
            parse_http_response(b"HTTP/1.0 200 OK\r\n\r\nhi")

    def test_unknown_status_code_rejected(self):
        with pytest.raises(ProtocolError):
            HttpResponse(500)


class TestFuzz:
    @settings(max_examples=300)
    @given(st.binary(max_size=80))
    def test_parsers_raise_only_protocol_errors(self, raw):
        for parse in (
            parse_epics_request,
            parse_epics_response,
            parse_http_request,
            parse_http_response,
        ):
            try:
                parse(raw)
            except ProtocolError:
                pass
