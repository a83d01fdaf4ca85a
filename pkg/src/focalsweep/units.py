"""Unit conventions.

All internal lengths are millimetres and all internal optical powers are
mm^-1 (1 diopter = 0.001 mm^-1).  The CLI and the on-disk JSON documents
speak diopters; everything else converts on the way in.
"""


def from_diopters(power_d: float) -> float:
    """Optical power in diopters (m^-1) -> mm^-1."""
    return power_d * 1e-3


def to_diopters(power_mm: float) -> float:
    """Optical power in mm^-1 -> diopters."""
    return power_mm * 1e3
