"""Bundled operating points for the two thermodynamic-limit scalings.

Rows are stored as printed (GHz/kHz, rates divided by 2 pi).  Scaling I
varies the flux so that only U changes; Scaling II keeps the flux fixed and
scales the pump and detuning.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

from .fock import TWO_PI, PhysicalParams

_FILES = {"table1": "table1.csv", "table2": "table2.csv"}


@dataclass(frozen=True)
class OperatingPoint:
    F: float
    omega_r_ghz: float
    omega_p_lo_ghz: float
    omega_p_hi_ghz: float
    u_khz: float
    L: float
    kappa_khz: float
    g_khz: float

    @property
    def delta_window_hz(self) -> tuple[float, float]:
        """Detuning range ``omega_r - omega_p / 2`` covered by the pump sweep, ascending (Hz)."""
        a = (self.omega_r_ghz - self.omega_p_hi_ghz / 2.0) * 1e9
        b = (self.omega_r_ghz - self.omega_p_lo_ghz / 2.0) * 1e9
        return (min(a, b), max(a, b))

    def physical(self, delta_hz: float = 0.0) -> PhysicalParams:
        return PhysicalParams(TWO_PI * delta_hz, TWO_PI * self.g_khz * 1e3,
                              TWO_PI * self.u_khz * 1e3, TWO_PI * self.kappa_khz * 1e3)


def load_table(name: str) -> list[OperatingPoint]:
    """Rows of ``"table1"`` (Scaling I) or ``"table2"`` (Scaling II)."""
    if name not in _FILES:
        raise KeyError(f"unknown reference table {name!r}; choose from {sorted(_FILES)}")
    text = resources.files(__package__).joinpath("data", _FILES[name]).read_text()
    rows = csv.DictReader(text.splitlines())
    return [OperatingPoint(float(r["F"]), float(r["omega_r_GHz"]), float(r["omega_p_lo_GHz"]),
                           float(r["omega_p_hi_GHz"]), float(r["U_kHz"]), float(r["L"]),
                           float(r["kappa_kHz"]), float(r["G_kHz"])) for r in rows]


def preset(name: str) -> OperatingPoint:
    """Look up ``table1_row<k>`` / ``table2_row<k>`` (1-based)."""
    table, sep, k = name.partition("_row")
    if not sep or not k.isdigit():
        raise KeyError(f"preset name {name!r} must look like table1_row3")
    rows = load_table(table)
    i = int(k)
    if not 1 <= i <= len(rows):
        raise KeyError(f"{table} has rows 1..{len(rows)}, got {i}")
    return rows[i - 1]


# Reduced rates (rad/s) of the reference scaling study.
REFERENCE_REDUCED = dict(tilde_U=TWO_PI * -9.14e3, tilde_G=TWO_PI * 300e3,
                         tilde_kappa=TWO_PI * 72e3)
