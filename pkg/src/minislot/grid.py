"""Scalable time-frequency resource grid and rectangle placement.

The radio frame is discretised on an integer lattice whose column width is
the shortest OFDM symbol group the system supports (set by the largest
subcarrier-spacing exponent) and whose row height is the narrowest
bandwidth-part width (set by the smallest exponent).  Every bandwidth part
(BWP) occupies an axis-aligned rectangle of whole lattice cells, so all
scheduling geometry reduces to integer rectangle packing.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

SYMBOLS_PER_SLOT = 14
SUBCARRIERS_PER_RB = 12
BASE_SCS_KHZ = 15.0
MAX_MINISLOT_SYMBOLS = 14

# tolerance when checking that frame duration / bandwidth are whole multiples
# of the lattice cell size (frame durations like 2/7 ms are not exactly
# representable in binary floating point)
_INT_TOL = 1e-9


class ConfigError(ValueError):
    """A static grid/system configuration is internally inconsistent."""


class Tier(str, Enum):
    """Transmission tier: base tier carries the full sphere, enhancement
    tier carries the predicted field-of-view region."""

    BT = "BT"
    ET = "ET"


@dataclass(frozen=True)
class GridSpec:
    """Static system parameters that determine the lattice.

    mu_min/mu_max bound the subcarrier-spacing exponents in use (spacing is
    15 * 2**mu kHz).  The frame duration and system bandwidth must be whole
    multiples of the resulting minimum cell dimensions.
    """

    mu_min: int
    mu_max: int
    frame_duration_ms: float
    system_bandwidth_khz: float

    def __post_init__(self) -> None:
        if self.mu_min < 0 or self.mu_max < self.mu_min:
            raise ConfigError(
                f"numerology exponents must satisfy 0 <= mu_min <= mu_max, "
                f"got mu_min={self.mu_min}, mu_max={self.mu_max}"
            )
        if self.frame_duration_ms <= 0:
            raise ConfigError(
                f"frame_duration_ms must be positive, got {self.frame_duration_ms}"
            )
        if self.system_bandwidth_khz <= 0:
            raise ConfigError(
                f"system_bandwidth_khz must be positive, got {self.system_bandwidth_khz}"
            )

    @property
    def dt_min_ms(self) -> float:
        """Duration of one lattice column: a 14th of the shortest slot."""
        return 1.0 / (SYMBOLS_PER_SLOT * 2**self.mu_max)

    @property
    def db_min_khz(self) -> float:
        """Width of one lattice row: one resource block at the narrowest spacing."""
        return SUBCARRIERS_PER_RB * BASE_SCS_KHZ * 2**self.mu_min


@dataclass(frozen=True)
class GridDims:
    """Lattice dimensions derived from a :class:`GridSpec`."""

    n_time_units: int
    n_freq_units: int
    rb_size_shz: float  # cell area in seconds * hertz (== ms * kHz)

    @property
    def total_units(self) -> int:
        return self.n_time_units * self.n_freq_units


def _exact_units(value: float, unit: float, field: str) -> int:
    ratio = value / unit
    n = round(ratio)
    if n <= 0 or abs(ratio - n) > _INT_TOL * max(1.0, abs(ratio)):
        raise ConfigError(
            f"{field}={value} is not a positive whole multiple of the "
            f"lattice unit {unit} (ratio {ratio})"
        )
    return int(n)


def derive_grid(spec: GridSpec) -> GridDims:
    """Derive lattice dimensions; rejects configs that do not tile exactly."""
    n_time = _exact_units(spec.frame_duration_ms, spec.dt_min_ms, "frame_duration_ms")
    n_freq = _exact_units(
        spec.system_bandwidth_khz, spec.db_min_khz, "system_bandwidth_khz"
    )
    return GridDims(
        n_time_units=n_time,
        n_freq_units=n_freq,
        rb_size_shz=spec.dt_min_ms * spec.db_min_khz,
    )


@dataclass(frozen=True)
class BwpShape:
    """Rectangular footprint of one bandwidth part on the lattice.

    A BWP with numerology exponent ``mu`` and ``eta`` OFDM symbols spans
    ``eta * 2**(mu_max - mu)`` columns and ``2**(mu - mu_min)`` rows, so its
    cell count ``eta * 2**(mu_max - mu_min)`` is independent of ``mu``.
    """

    mu: int
    eta: int
    time_len_units: int
    freq_width_units: int

    @property
    def area_units(self) -> int:
        return self.time_len_units * self.freq_width_units

    def area_shz(self, dims: GridDims) -> float:
        return self.area_units * dims.rb_size_shz


def bwp_shape(mu: int, eta: int, spec: GridSpec) -> BwpShape:
    """Footprint of a (numerology, mini-slot length) choice on the lattice."""
    if not spec.mu_min <= mu <= spec.mu_max:
        raise ConfigError(
            f"mu={mu} outside the configured numerology range "
            f"[{spec.mu_min}, {spec.mu_max}]"
        )
    if not 1 <= eta <= MAX_MINISLOT_SYMBOLS:
        raise ConfigError(
            f"eta={eta} outside the mini-slot symbol range [1, {MAX_MINISLOT_SYMBOLS}]"
        )
    return BwpShape(
        mu=mu,
        eta=eta,
        time_len_units=eta * 2 ** (spec.mu_max - mu),
        freq_width_units=2 ** (mu - spec.mu_min),
    )


@dataclass(frozen=True)
class BwpAllocation:
    """A placed BWP: who it serves, which tier, and where it sits."""

    ue_index: int
    tier: Tier
    shape: BwpShape
    time_offset_units: int
    freq_offset_units: int

    @property
    def time_end(self) -> int:
        return self.time_offset_units + self.shape.time_len_units

    @property
    def freq_end(self) -> int:
        return self.freq_offset_units + self.shape.freq_width_units


def allocations_overlap(a: BwpAllocation, b: BwpAllocation) -> bool:
    return (
        a.time_offset_units < b.time_end
        and b.time_offset_units < a.time_end
        and a.freq_offset_units < b.freq_end
        and b.freq_offset_units < a.freq_end
    )


def validate_allocation_set(allocations: list[BwpAllocation], dims: GridDims) -> bool:
    """True iff every allocation is in bounds and no two overlap."""
    for alloc in allocations:
        if alloc.time_offset_units < 0 or alloc.freq_offset_units < 0:
            return False
        if alloc.time_end > dims.n_time_units or alloc.freq_end > dims.n_freq_units:
            return False
    for i, a in enumerate(allocations):
        for b in allocations[i + 1 :]:
            if allocations_overlap(a, b):
                return False
    return True


class Occupancy:
    """Mutable occupancy bitmap with a per-row allocation frontier.

    ``frontier[r]`` is one past the last occupied column of row ``r`` (the
    row's boundary line), not necessarily the first free cell: first-fit
    placement of mixed rectangle heights can leave holes behind the frontier.
    The bitmap is authoritative; the frontier is bookkeeping for observers.
    """

    def __init__(self, dims: GridDims):
        self.dims = dims
        self.occ = np.zeros((dims.n_freq_units, dims.n_time_units), dtype=bool)
        self.frontier = np.zeros(dims.n_freq_units, dtype=np.int64)

    def copy(self) -> "Occupancy":
        clone = Occupancy.__new__(Occupancy)
        clone.dims = self.dims
        clone.occ = self.occ.copy()
        clone.frontier = self.frontier.copy()
        return clone

    def free_units(self) -> int:
        return int(self.occ.size - self.occ.sum())

    def find_first_fit(self, shape: BwpShape) -> tuple[int, int] | None:
        """First position fitting ``shape``: minimum time offset, then
        minimum frequency offset.  Returns (time_offset, freq_offset)."""
        fw, tl = shape.freq_width_units, shape.time_len_units
        n_freq, n_time = self.occ.shape
        if fw > n_freq or tl > n_time:
            return None
        # integral image -> occupied-cell count of every candidate window
        csum = np.zeros((n_freq + 1, n_time + 1), dtype=np.int64)
        np.cumsum(self.occ, axis=0, out=csum[1:, 1:])
        np.cumsum(csum[1:, 1:], axis=1, out=csum[1:, 1:])
        window = (
            csum[fw:, tl:]
            - csum[:-fw, tl:]
            - csum[fw:, :-tl]
            + csum[:-fw, :-tl]
        )
        feasible = window == 0  # (freq offsets, time offsets)
        by_time = feasible.any(axis=0)
        if not by_time.any():
            return None
        t0 = int(np.argmax(by_time))
        f0 = int(np.argmax(feasible[:, t0]))
        return t0, f0

    def mark(self, time_offset: int, freq_offset: int, shape: BwpShape) -> None:
        t1 = time_offset + shape.time_len_units
        f1 = freq_offset + shape.freq_width_units
        region = self.occ[freq_offset:f1, time_offset:t1]
        if region.any():
            raise ValueError(
                f"placement at (t={time_offset}, f={freq_offset}) overlaps an "
                f"existing allocation"
            )
        region[:] = True
        self.frontier[freq_offset:f1] = np.maximum(self.frontier[freq_offset:f1], t1)

    def place(self, shape: BwpShape) -> tuple[int, int] | None:
        """Find-and-mark in one call; None when the shape fits nowhere."""
        pos = self.find_first_fit(shape)
        if pos is not None:
            self.mark(pos[0], pos[1], shape)
        return pos
