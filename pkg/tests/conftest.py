"""Shared fixtures: kernel warm-up and canonical sessions."""

import numpy as np
import pytest

from fedemu import tomo
from fedemu.cli import Session, exec_command


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Run the hot kernels once so wall-clock limits measure steady state."""
    phantom = tomo.make_disk_phantom(8, 0.5, 1.0)
    angles = np.linspace(0.0, np.pi, 4, endpoint=False)
    sinogram = tomo.radon(phantom, angles, 9)
    tomo.fbp(sinogram, tomo.ReconParams(4, 9, 8))


@pytest.fixture
def canonical_session() -> Session:
    session = Session()
    exec_command(session, "up canonical")
    return session


@pytest.fixture
def canonical_emulator(canonical_session):
    return canonical_session.emulator
