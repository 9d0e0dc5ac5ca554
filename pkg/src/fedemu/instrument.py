"""Emulated beamline: a PV server driving a rotation stage over a phantom.

Three static process variables per instrument (names prefixed by the
instrument name):

* ``<name>:MOT:ROT``  f64, degrees, writable, wrapped to [0, 360)
* ``<name>:DET:ACQ``  i64, writable; a PUT of ``1`` triggers an acquisition
* ``<name>:DET:NFRAMES``  i64, read-only frame count

Acquired frames are additionally readable one per GET through the virtual
``<name>:DET:FRAME:<k>`` family (text values, GET-only). Monitors receive one
EVT per accepted write through an injected notify callback, which keeps this
module free of any networking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tomo
from .netsim import Endpoint
from .protocols import EpicsRequest, EpicsResponse, epics_err, epics_evt, epics_ok

EPICS_PORT = 5064

NotifyFn = Callable[[Endpoint, EpicsResponse], None]


@dataclass
class ProcessVariable:
    name: str
    type_tag: str  # "f64" | "i64" | "str"
    value: object
    timestamp: float = 0.0
    writable: bool = False

    def render_value(self) -> str:
        if self.type_tag == "f64":
            return repr(float(self.value))
        if self.type_tag == "i64":
            return str(int(self.value))
        return str(self.value)

    def parse_value(self, text: str):
        """Convert PUT text per the PV type; ValueError on mismatch."""
        if self.type_tag == "f64":
            parsed = float(text)
            if not math.isfinite(parsed):
                raise ValueError(f"non-finite value {text!r}")
            return parsed
        if self.type_tag == "i64":
            return int(text, 10)
        if any(c in text for c in " \t\r\n"):
            raise ValueError(f"string value must be a single token: {text!r}")
        return text


@dataclass(frozen=True)
class DetectorFrame:
    angle: float  # degrees at acquisition time
    bins: np.ndarray
    acquired_at: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.bins)):
            raise ValueError("frame bins must be finite")

    def render_text(self) -> str:
        bins_text = ",".join(repr(float(b)) for b in self.bins)
        return f"angle={repr(float(self.angle))};bins={bins_text}"


class Instrument:
    """PV server state plus the phantom it images."""

    def __init__(
        self,
        name: str,
        phantom: tomo.Phantom,
        n_bins: int,
        notify: NotifyFn | None = None,
    ):
        if n_bins < 3 or n_bins % 2 == 0:
            raise ValueError(f"n_bins must be odd and >= 3, got {n_bins}")
        self.name = name
        self.phantom = phantom
        self.n_bins = n_bins
        self.notify = notify
        self.angle_pv = f"{name}:MOT:ROT"
        self.acquire_pv = f"{name}:DET:ACQ"
        self.frame_count_pv = f"{name}:DET:NFRAMES"
        self.frame_prefix = f"{name}:DET:FRAME:"
        self.pvs: dict[str, ProcessVariable] = {
            self.angle_pv: ProcessVariable(self.angle_pv, "f64", 0.0, writable=True),
            self.acquire_pv: ProcessVariable(self.acquire_pv, "i64", 0, writable=True),
            self.frame_count_pv: ProcessVariable(self.frame_count_pv, "i64", 0),
        }
        self.frames: list[DetectorFrame] = []
        # Subscriptions in registration order, unique per (pv, endpoint).
        self.monitors: list[tuple[str, Endpoint]] = []

    # -- internals -----------------------------------------------------------

    def _push(self, pv: ProcessVariable):
        if self.notify is None:
            return
        evt = epics_evt(pv.name, pv.type_tag, pv.render_value(), pv.timestamp)
        for pv_name, endpoint in self.monitors:
            if pv_name == pv.name:
                self.notify(endpoint, evt)

    def _write(self, pv: ProcessVariable, value, now: float):
        pv.value = value
        pv.timestamp = now
        self._push(pv)

    def set_angle(self, degrees: float, now: float):
        self._write(self.pvs[self.angle_pv], float(degrees) % 360.0, now)

    def _frame_index(self, pv_name: str) -> int | None:
        if not pv_name.startswith(self.frame_prefix):
            return None
        suffix = pv_name[len(self.frame_prefix):]
        if not suffix.isdigit():
            return None
        return int(suffix, 10)


def acquire_frame(instrument: Instrument, now: float) -> DetectorFrame:
    """Project the phantom at the current stage angle and store the frame."""
    angle_deg = float(instrument.pvs[instrument.angle_pv].value)
    sino = tomo.radon(
        instrument.phantom, [math.radians(angle_deg)], instrument.n_bins
    )
    frame = DetectorFrame(angle_deg, sino.data[0], now)
    instrument.frames.append(frame)
    count_pv = instrument.pvs[instrument.frame_count_pv]
    instrument._write(count_pv, len(instrument.frames), now)
    return frame


def run_scan(instrument: Instrument, n_angles: int, now: float) -> tomo.Sinogram:
    """Rotate-and-acquire over [0, 180) in n_angles uniform steps."""
    if n_angles < 1:
        raise ValueError(f"n_angles must be >= 1, got {n_angles}")
    angles_deg = [180.0 * k / n_angles for k in range(n_angles)]
    rows = []
    for angle in angles_deg:
        instrument.set_angle(angle, now)
        rows.append(acquire_frame(instrument, now).bins)
    return tomo.Sinogram(
        np.radians(angles_deg),
        tomo.detector_bins(instrument.n_bins),
        np.vstack(rows),
    )


def handle_pv_request(
    instrument: Instrument,
    req: EpicsRequest,
    now: float,
    subscriber: Endpoint | None = None,
) -> EpicsResponse:
    """Apply one EPICS-lite request; errors come back as ERR responses."""
    pv = instrument.pvs.get(req.pv_name)

    if req.verb == "GET":
        if pv is not None:
            return epics_ok(pv.name, pv.type_tag, pv.render_value(), pv.timestamp)
        index = instrument._frame_index(req.pv_name)
        if index is not None and 0 <= index < len(instrument.frames):
            frame = instrument.frames[index]
            return epics_ok(req.pv_name, "str", frame.render_text(), frame.acquired_at)
        return epics_err(404, "unknown pv")

    if pv is None:
        index = instrument._frame_index(req.pv_name)
        known_frame = index is not None and 0 <= index < len(instrument.frames)
        if known_frame and req.verb == "PUT":
            return epics_err(403, "read-only pv")
        return epics_err(404, "unknown pv")

    if req.verb == "PUT":
        if not pv.writable:
            return epics_err(403, "read-only pv")
        try:
            value = pv.parse_value(req.value)
        except ValueError:
            return epics_err(400, "type mismatch")
        if pv.name == instrument.angle_pv:
            value = float(value) % 360.0
        instrument._write(pv, value, now)
        if pv.name == instrument.acquire_pv and value == 1:
            acquire_frame(instrument, now)
        return epics_ok(pv.name, pv.type_tag, pv.render_value(), pv.timestamp)

    if subscriber is None:
        return epics_err(400, "monitor needs a subscriber endpoint")
    key = (pv.name, subscriber)
    if req.verb == "MON":
        if key not in instrument.monitors:
            instrument.monitors.append(key)
    else:  # STOP
        if key in instrument.monitors:
            instrument.monitors.remove(key)
    return epics_ok(pv.name, pv.type_tag, pv.render_value(), pv.timestamp)
