"""Deterministic emulator for a federation of science facilities.

Models multi-site networks, beamline instrument control, container image
mobility, and workflow orchestration on a single virtual clock, with a
tomographic reconstruction workload riding on top.
"""

__version__ = "0.1.0"
