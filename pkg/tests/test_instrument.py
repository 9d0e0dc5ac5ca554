"""PV server behavior: reads, writes, monitors, frames, and scans."""

import numpy as np
import pytest

from fedemu.instrument import (
    EPICS_PORT,
    DetectorFrame,
    Instrument,
    acquire_frame,
    handle_pv_request,
    run_scan,
)
from fedemu.netsim import Endpoint
from fedemu.protocols import EpicsRequest
from fedemu.tomo import make_disk_phantom, radon
from fedemu.topology import Ipv4Address

SUB = Endpoint(Ipv4Address.parse("10.0.0.2"), 5101)


@pytest.fixture
def instrument():
    return Instrument("BL3", make_disk_phantom(16, 0.5, 1.0), 9)


def ask(instr, verb, pv, value=None, now=0.0, subscriber=None):
    return handle_pv_request(instr, EpicsRequest(verb, pv, value), now, subscriber)


class TestStaticPvs:
    def test_initial_values(self, instrument):
        rot = ask(instrument, "GET", "BL3:MOT:ROT")
        assert (rot.status, rot.type_tag, rot.value) == ("OK", "f64", "0.0")
        acq = ask(instrument, "GET", "BL3:DET:ACQ")
        assert (acq.type_tag, acq.value) == ("i64", "0")
        nfr = ask(instrument, "GET", "BL3:DET:NFRAMES")
        assert nfr.value == "0"

    def test_unknown_pv_is_404(self, instrument):
        resp = ask(instrument, "GET", "BL3:NOPE")
        assert (resp.status, resp.err_code) == ("ERR", 404)

    def test_port_constant(self):
        assert EPICS_PORT == 5064


class TestPut:
    def test_put_rotation_echoes_written_value(self, instrument):
        resp = ask(instrument, "PUT", "BL3:MOT:ROT", "12.5", now=1.0)
        assert (resp.status, resp.value) == ("OK", "12.5")
        assert resp.timestamp == pytest.approx(1.0)

    def test_rotation_wraps_mod_360(self, instrument):
        resp = ask(instrument, "PUT", "BL3:MOT:ROT", "370")
        assert resp.value == "10.0"
        assert ask(instrument, "PUT", "BL3:MOT:ROT", "-90").value == "270.0"

    def test_read_only_pv_is_403(self, instrument):
        resp = ask(instrument, "PUT", "BL3:DET:NFRAMES", "5")
        assert (resp.err_code, resp.err_msg) == (403, "read-only pv")

    def test_type_mismatch_is_400(self, instrument):
        resp = ask(instrument, "PUT", "BL3:MOT:ROT", "fast")
        assert resp.err_code == 400
        assert "mismatch" in resp.err_msg

    def test_put_acq_one_takes_a_frame(self, instrument):
        ask(instrument, "PUT", "BL3:MOT:ROT", "45", now=2.0)
        resp = ask(instrument, "PUT", "BL3:DET:ACQ", "1", now=2.0)
        assert resp.status == "OK"
        assert len(instrument.frames) == 1
        assert instrument.frames[0].angle == pytest.approx(45.0)
        assert ask(instrument, "GET", "BL3:DET:NFRAMES").value == "1"


class TestFramePvs:
    def test_frame_value_is_single_token(self, instrument):
        ask(instrument, "PUT", "BL3:DET:ACQ", "1")
        resp = ask(instrument, "GET", "BL3:DET:FRAME:0")
        assert resp.status == "OK"
        assert resp.type_tag == "str"
        assert " " not in resp.value
        assert resp.value.startswith("angle=0.0;bins=")

    def test_missing_frame_is_404(self, instrument):
        assert ask(instrument, "GET", "BL3:DET:FRAME:0").err_code == 404

    def test_frame_pv_rejects_put(self, instrument):
        ask(instrument, "PUT", "BL3:DET:ACQ", "1")
        assert ask(instrument, "PUT", "BL3:DET:FRAME:0", "x").err_code == 403

    def test_render_text_round_trip_values(self, instrument):
        frame = DetectorFrame(30.0, (0.25, 1.0, 0.0), 0.0)
        text = frame.render_text()
        assert text == "angle=30.0;bins=0.25,1.0,0.0"


class TestMonitors:
    def test_mon_requires_subscriber(self, instrument):
        resp = ask(instrument, "MON", "BL3:MOT:ROT")
        assert resp.err_code == 400

    def test_mon_receives_put_events(self, instrument):
        pushed = []
        instrument.notify = lambda endpoint, resp: pushed.append((endpoint, resp))
        assert ask(instrument, "MON", "BL3:MOT:ROT", subscriber=SUB).status == "OK"
        ask(instrument, "PUT", "BL3:MOT:ROT", "90", now=3.0)
        assert len(pushed) == 1
        endpoint, evt = pushed[0]
        assert endpoint == SUB
        assert (evt.status, evt.value) == ("EVT", "90.0")
        assert evt.timestamp == pytest.approx(3.0)

    def test_duplicate_mon_is_idempotent(self, instrument):
        pushed = []
        instrument.notify = lambda e, r: pushed.append(r)
        ask(instrument, "MON", "BL3:MOT:ROT", subscriber=SUB)
        ask(instrument, "MON", "BL3:MOT:ROT", subscriber=SUB)
        ask(instrument, "PUT", "BL3:MOT:ROT", "10")
        assert len(pushed) == 1

    def test_stop_removes_subscription(self, instrument):
        pushed = []
        instrument.notify = lambda e, r: pushed.append(r)
        ask(instrument, "MON", "BL3:MOT:ROT", subscriber=SUB)
        assert ask(instrument, "STOP", "BL3:MOT:ROT", subscriber=SUB).status == "OK"
        ask(instrument, "PUT", "BL3:MOT:ROT", "10")
        assert pushed == []

    def test_nframes_monitor_fires_on_acquire(self, instrument):
        pushed = []
        instrument.notify = lambda e, r: pushed.append(r)
        ask(instrument, "MON", "BL3:DET:NFRAMES", subscriber=SUB)
        ask(instrument, "PUT", "BL3:DET:ACQ", "1")
        assert [r.value for r in pushed if r.pv_name == "BL3:DET:NFRAMES"] == ["1"]


class TestScan:
    def test_angles_uniform_over_half_turn(self, instrument):
        sinogram = run_scan(instrument, 4, 0.0)
        assert np.allclose(np.degrees(sinogram.angles), [0.0, 45.0, 90.0, 135.0])
        assert len(instrument.frames) == 4

    def test_scan_matches_direct_projection(self, instrument):
        sinogram = run_scan(instrument, 6, 0.0)
        angles = np.linspace(0.0, np.pi, 6, endpoint=False)
        direct = radon(instrument.phantom, angles, 9)
        assert np.allclose(sinogram.data, direct.data, atol=1e-12)

    def test_zero_angles_rejected(self, instrument):
        with pytest.raises(ValueError):
            run_scan(instrument, 0, 0.0)

    def test_acquire_frame_appends(self, instrument):
        instrument.set_angle(30.0, 1.0)
        frame = acquire_frame(instrument, 1.5)
        assert frame.angle == pytest.approx(30.0)
        assert frame.acquired_at == 1.5
        assert len(frame.bins) == 9
