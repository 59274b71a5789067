"""Simulation and analysis toolkit for criticality-enhanced frequency
estimation with a two-photon-driven Kerr resonator."""

__version__ = "0.1.0"
