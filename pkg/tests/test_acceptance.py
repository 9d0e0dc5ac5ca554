"""Acceptance gate: seven end-to-end checks, one printed verdict line each.

Every test prints `criterion N (<label>): PASS|FAIL` so a scripted run can
grep the verdicts without parsing pytest output.
"""

import dataclasses
import math
import random
import re
import string
import time
from contextlib import contextmanager

import numpy as np
import pytest
import skimage.transform

from fedemu.cli import Session, run_script
from fedemu.containers import (
    ARCHIVE_MAGIC,
    ContainerImage,
    DigestMismatchError,
    fnv1a64,
    image_load,
    image_save,
)
from fedemu.emulator import Emulator
from fedemu.errors import ProtocolError
from fedemu.netsim import transfer_time
from fedemu.orchestrator import is_legal_transition, submit_by_id, submit_workflow
from fedemu.protocols import (
    EpicsRequest,
    EpicsResponse,
    HttpRequest,
    HttpResponse,
    parse_epics_request,
    parse_epics_response,
    parse_http_request,
    parse_http_response,
    render_epics_request,
    render_epics_response,
    render_http_request,
    render_http_response,
)
from fedemu.scenario import LinkDecl, canonical_spec, parse_scenario, render_scenario
from fedemu.tomo import (
    Phantom,
    ReconParams,
    Sinogram,
    detector_bins,
    fbp,
    make_disk_phantom,
    radon,
    rmse,
)
from fedemu.topology import Ipv4Address, build_topology, route_lookup
from scen_gen import random_emulator, random_scenario_text, random_workflow

TOKEN_CHARS = string.ascii_letters + string.digits + ":._-+"
PV_CHARS = string.ascii_letters + string.digits + "._-"


@contextmanager
def verdict(capsys, number: int, label: str):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"criterion {number} ({label}): FAIL")
        raise
    with capsys.disabled():
        print(f"criterion {number} ({label}): PASS")


def canonical_run():
    emulator = Emulator(canonical_spec())
    run = submit_by_id(emulator, "wf-recon")
    emulator.engine.drain()
    return emulator, run


def host_addresses(spec):
    return {h.name: h.ip for h in spec.hosts}


def interior_mask(n: int, radius: float) -> np.ndarray:
    px = 2.0 / n
    centers = -1.0 + (np.arange(n) + 0.5) * px
    xx, yy = np.meshgrid(centers, centers)
    return xx * xx + yy * yy <= (radius - 2 * px) ** 2


def task_transition_paths(engine):
    pattern = re.compile(r"^(\S+) ([A-Za-z]+)->([A-Za-z]+)$")
    paths: dict[str, list[tuple[str, str]]] = {}
    for record in engine.log:
        if record.kind != "task":
            continue
        name, frm, to = pattern.match(record.detail).groups()
        paths.setdefault(name, []).append((frm, to))
    return paths


def test_criterion_1_end_to_end(capsys):
    with verdict(capsys, 1, "end-to-end mobility"):
        started = time.perf_counter()
        emulator, run = canonical_run()
        elapsed = time.perf_counter() - started

        spec = emulator.spec
        addrs = host_addresses(spec)
        assert str(addrs["cades-h1"]) == "172.16.1.3"

        # the image lands exactly one store-and-forward transfer after start
        ship = run.states["ship-img"]
        path = route_lookup(emulator.topology, addrs["cades-h1"], addrs["olcf-h1"])
        expected = transfer_time(path, spec.images[0].size, emulator.topology)
        assert expected == pytest.approx(2.412, abs=1e-12)
        assert ship.finished_at == pytest.approx(ship.started_at + expected, abs=1e-9)

        endpoint = run.endpoints[0]
        assert str(endpoint.endpoint) == "172.16.0.10:8888"

        ok = emulator.fetch(
            "cades-h1", "http://172.16.0.10:8888/", token=endpoint.token
        )
        assert ok.status_code == 200
        assert b"notebook imars3d" in ok.body

        bad = emulator.fetch("cades-h1", "http://172.16.0.10:8888/", token="bogus")
        assert bad.status_code == 403

        mapped = emulator.fetch(
            "cades-h1",
            f"http://{addrs['olcf-h1']}:8888/",
            token=endpoint.token,
        )
        assert mapped.status_code == 200
        assert mapped.body == ok.body

        assert elapsed < 5.0, f"end-to-end run took {elapsed:.2f}s"


def test_criterion_2_routing(capsys):
    with verdict(capsys, 2, "routing"):
        emulator, _ = canonical_run()
        topology = emulator.topology
        assert route_lookup(
            topology, Ipv4Address.parse("172.16.1.3"), Ipv4Address.parse("172.16.0.10")
        ) == ["cades-h1", "gw-CADES", "gw-OLCF", "olcf-h1"]

        # same-subnet traffic never crosses a gateway boundary
        for host in emulator.spec.hosts:
            gw = next(r for r in emulator.spec.routers if r.site == host.site)
            assert route_lookup(topology, host.ip, gw.ip) == [host.name, gw.name]

        rng = random.Random(26081403)
        checked = 0
        while checked < 100:
            spec = parse_scenario(random_scenario_text(rng))
            topo = build_topology(spec)
            addresses = [d.ip for d in spec.hosts] + [d.ip for d in spec.routers]
            for _ in range(10):
                a, b = rng.sample(addresses, 2)
                forward = route_lookup(topo, a, b)
                assert route_lookup(topo, b, a) == list(reversed(forward))
                checked += 1


def _random_image(rng: random.Random) -> ContainerImage:
    payload = rng.randbytes(rng.randrange(0, 300))
    return ContainerImage(
        name="img" + str(rng.randrange(100)),
        tag=rng.choice(("1.0", "2.3.1", "latest")),
        size=len(payload) + rng.randrange(0, 10_000),
        service_kind=rng.choice(("notebook", "epics", "none")),
        service_port=rng.randrange(1, 65536),
        payload=payload,
    )


def _fnv_reference(data: bytes) -> int:
    # deliberately written out long-hand, independent of the library code
    value = 0xCBF29CE484222325
    for byte in data:
        value = ((value ^ byte) * 0x100000001B3) % (1 << 64)
    return value


def test_criterion_3_image_integrity(capsys):
    with verdict(capsys, 3, "image integrity"):
        rng = random.Random(33)
        for _ in range(200):
            image = _random_image(rng)
            assert image_load(image_save(image)) == image

        for _ in range(200):
            blob = bytearray(image_save(_random_image(rng)).data)
            offset = rng.randrange(len(ARCHIVE_MAGIC), len(blob) - 26)
            blob[offset] ^= rng.randrange(1, 256)
            with pytest.raises(DigestMismatchError):
                image_load(bytes(blob))

        assert fnv1a64(b"") == 0xCBF29CE484222325
        for text in (b"a", b"imars3d", b"federated science"):
            assert fnv1a64(text) == _fnv_reference(text)
        assert _fnv_reference(b"a") == 0xAF63DC4C8601EC8C
        assert _fnv_reference(b"imars3d") == 0xBFA1C9D48A460EA2
        assert _fnv_reference(b"federated science") == 0x107C25299437E761


def _random_token(rng, lo=1, hi=12):
    return "".join(rng.choice(TOKEN_CHARS) for _ in range(rng.randrange(lo, hi)))


def _random_pv(rng):
    def segment():
        return "".join(rng.choice(PV_CHARS) for _ in range(rng.randrange(1, 8)))

    return ":".join(segment() for _ in range(rng.randrange(1, 4)))


def _quantized_time(rng):
    return float(f"{rng.uniform(0.0, 4000.0):.9f}")


def _random_epics_request(rng):
    verb = rng.choice(("GET", "PUT", "MON", "STOP"))
    value = None
    if verb == "PUT":
        value = " ".join(_random_token(rng) for _ in range(rng.randrange(1, 4)))
    return EpicsRequest(verb, _random_pv(rng), value)


def _random_epics_response(rng):
    status = rng.choice(("OK", "EVT", "ERR"))
    if status == "ERR":
        msg = " ".join(_random_token(rng) for _ in range(rng.randrange(1, 5)))
        return EpicsResponse("ERR", err_code=rng.choice((400, 403, 404)), err_msg=msg)
    return EpicsResponse(
        status,
        pv_name=_random_pv(rng),
        type_tag=rng.choice(("f64", "i64", "str")),
        value=_random_token(rng),
        timestamp=_quantized_time(rng),
    )


def _random_http_request(rng):
    path = "/" + "/".join(_random_token(rng) for _ in range(rng.randrange(0, 3)))
    keys = rng.sample(["a", "token", "page", "q", "view"], rng.randrange(0, 3))
    query = tuple((k, _random_token(rng)) for k in keys)
    return HttpRequest(path, query)


def _random_http_response(rng):
    return HttpResponse(
        rng.choice((200, 403, 404)), rng.randbytes(rng.randrange(0, 200))
    )


def test_criterion_4_protocol_robustness(capsys):
    with verdict(capsys, 4, "protocol robustness"):
        rng = random.Random(44)
        for _ in range(250):
            req = _random_epics_request(rng)
            assert parse_epics_request(render_epics_request(req)) == req
            resp = _random_epics_response(rng)
            assert parse_epics_response(render_epics_response(resp)) == resp
            hreq = _random_http_request(rng)
            assert parse_http_request(render_http_request(hreq)) == hreq
            hresp = _random_http_response(rng)
            assert parse_http_response(render_http_response(hresp)) == hresp

        parsers = (
            parse_epics_request,
            parse_epics_response,
            parse_http_request,
            parse_http_response,
        )
        renders = [
            render_epics_request(_random_epics_request(rng)).encode(),
            render_epics_response(_random_epics_response(rng)).encode(),
            render_http_request(_random_http_request(rng)),
            render_http_response(_random_http_response(rng)),
        ]
        for i in range(1000):
            if i % 2:
                raw = rng.randbytes(rng.randrange(0, 120))
            else:
                raw = bytearray(rng.choice(renders))
                if raw:
                    raw[rng.randrange(len(raw))] = rng.randrange(256)
                raw = bytes(raw)
            for parse in parsers:
                try:
                    parse(raw)
                except ProtocolError:
                    pass


def test_criterion_5_tomography(capsys):
    with verdict(capsys, 5, "tomography"):
        started = time.perf_counter()
        n, radius, n_angles, n_s = 64, 0.5, 90, 95
        disk = make_disk_phantom(n, radius, 1.0)
        angles = np.linspace(0.0, np.pi, n_angles, endpoint=False)
        sinogram = radon(disk, angles, n_s)

        # (a) chord lengths through a unit-intensity disk, measured broadside
        row0 = sinogram.data[0]
        assert float(np.interp(0.0, sinogram.s_values, row0)) == pytest.approx(
            1.000, abs=0.01
        )
        assert float(np.interp(0.4, sinogram.s_values, row0)) == pytest.approx(
            0.600, abs=0.02
        )

        # (b) every projection integrates to the phantom mass
        mass = float(disk.values.sum()) * disk.pixel_size**2
        per_angle = sinogram.data.sum(axis=1) * sinogram.ds
        assert np.max(np.abs(per_angle - mass)) / mass < 1e-2

        # (c) interior accuracy, cross-checked against scikit-image
        mask = interior_mask(n, radius)
        ours = rmse(
            fbp(sinogram, ReconParams(n_angles, n_s, n)).values, disk.values, mask
        )
        assert ours < 0.15

        ref = skimage.transform.iradon(
            (sinogram.data / sinogram.ds).T,
            theta=np.degrees(angles),
            filter_name="ramp",
            circle=False,
            output_size=n_s,
        )
        cc = (np.arange(n_s) - (n_s - 1) / 2.0) * sinogram.ds
        xx, yy = np.meshgrid(cc, cc)
        ref_mask = xx * xx + yy * yy <= (radius - 2 * disk.pixel_size) ** 2
        ref_disk = np.where(xx * xx + yy * yy <= radius**2, 1.0, 0.0)
        ref_err = math.sqrt(np.mean((ref[ref_mask] - ref_disk[ref_mask]) ** 2))
        assert ref_err < 0.15
        assert ours <= 2.0 * ref_err

        # (d) more angles reconstruct better
        few = np.linspace(0.0, np.pi, 10, endpoint=False)
        coarse = rmse(
            fbp(radon(disk, few, n_s), ReconParams(10, n_s, n)).values,
            disk.values,
            mask,
        )
        assert ours < coarse

        # (e) both transforms are linear maps
        gen = np.random.default_rng(55)
        lin_angles = np.linspace(0.0, np.pi, 8, endpoint=False)
        bins = detector_bins(17)
        for _ in range(10):
            a = gen.normal(size=(16, 16))
            b = gen.normal(size=(16, 16))
            combo = radon(Phantom(16, 1.7 * a - 0.6 * b), lin_angles, 17).data
            parts = (
                1.7 * radon(Phantom(16, a), lin_angles, 17).data
                - 0.6 * radon(Phantom(16, b), lin_angles, 17).data
            )
            scale = np.max(np.abs(parts)) or 1.0
            assert np.max(np.abs(combo - parts)) / scale < 1e-9

            sa = gen.normal(size=(8, 17))
            sb = gen.normal(size=(8, 17))
            params = ReconParams(8, 17, 16)
            fcombo = fbp(Sinogram(lin_angles, bins, 1.7 * sa - 0.6 * sb), params).values
            fparts = (
                1.7 * fbp(Sinogram(lin_angles, bins, sa), params).values
                - 0.6 * fbp(Sinogram(lin_angles, bins, sb), params).values
            )
            fscale = np.max(np.abs(fparts)) or 1.0
            assert np.max(np.abs(fcombo - fparts)) / fscale < 1e-9

        elapsed = time.perf_counter() - started
        assert elapsed < 30.0, f"tomography checks took {elapsed:.2f}s"


SCRIPT = ["up canonical", "submit wf-recon", "drain", "digest"]


def _script_digest(lines):
    import io

    out = io.StringIO()
    assert run_script(Session(), lines, out=out, err=out) == 0
    return out.getvalue().splitlines()[-1]


def test_criterion_6_determinism(capsys, tmp_path):
    with verdict(capsys, 6, "determinism"):
        first = _script_digest(SCRIPT)
        second = _script_digest(SCRIPT)
        assert first == second

        # double the latency of the WAN link the image transfer rides on
        spec = canonical_spec()
        decls = list(spec.declarations)
        idx = next(
            i
            for i, d in enumerate(decls)
            if isinstance(d, LinkDecl)
            and d.kind == "wan"
            and {d.a, d.b} == {"gw-CADES", "gw-OLCF"}
        )
        decls[idx] = dataclasses.replace(decls[idx], latency=0.02)
        patched = dataclasses.replace(spec, declarations=tuple(decls))
        path = tmp_path / "patched.scn"
        path.write_text(render_scenario(patched))

        third = _script_digest([f"up {path}"] + SCRIPT[1:])
        assert third != first


def test_criterion_7_workflow_state_machine(capsys):
    with verdict(capsys, 7, "workflow state machine"):
        fully_completed = 0
        ship_failures = 0
        for seed in range(50):
            rng = random.Random(7000 + seed)
            emulator = random_emulator(rng, isolated=rng.choice((0, 1)))
            run = submit_workflow(emulator, random_workflow(rng, emulator))
            emulator.engine.drain()

            assert emulator.engine.pending() == 0
            assert run.done()
            phases = {name: s.phase for name, s in run.states.items()}
            assert set(phases.values()) <= {"Completed", "Failed"}

            for hops in task_transition_paths(emulator.engine).values():
                assert all(is_legal_transition(frm, to) for frm, to in hops)

            for task in run.spec.tasks:
                if any(phases[dep] == "Failed" for dep in task.depends_on):
                    assert phases[task.name] == "Failed"
                    assert run.states[task.name].reason == "dependency failed"

            if all(p == "Completed" for p in phases.values()):
                fully_completed += 1
            if any(
                t.kind == "ship" and phases[t.name] == "Failed"
                for t in run.spec.tasks
            ):
                ship_failures += 1

        # the sweep must actually exercise both outcomes
        assert fully_completed >= 1
        assert ship_failures >= 1
