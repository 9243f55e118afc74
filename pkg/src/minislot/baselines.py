"""Fixed equal-allocation benchmarks.

Two non-adaptive references: an equal-bandwidth split, where each user gets
a contiguous horizontal band for the whole frame and everything is sent as
base tier (full sphere, no field-of-view prediction); and an equal
time-frequency split, where each user's band carries base tier in the first
half of the frame and enhancement tier in the second half.
"""

from __future__ import annotations

from dataclasses import dataclass

from .grid import (
    BwpAllocation,
    BwpShape,
    GridDims,
    Tier,
    bwp_shape,
    validate_allocation_set,
)
from .qoe import QoeReport, evaluate_ue
from .scenario import ScenarioConfig, UeProfile


@dataclass(frozen=True)
class AllocationPlan:
    """A complete allocation with its evaluated outcome."""

    allocations: tuple[BwpAllocation, ...]
    reports: tuple[QoeReport, ...]

    @property
    def total_qoe(self) -> float:
        return sum(r.counted_qoe for r in self.reports)

    @property
    def served_count(self) -> int:
        return sum(1 for r in self.reports if r.served)


def band_rows(n_freq_units: int, n_ues: int) -> list[tuple[int, int]]:
    """Contiguous (first_row, n_rows) bands; widths differ by at most one
    row when the grid does not divide evenly (earlier users get the extra)."""
    base, extra = divmod(n_freq_units, n_ues)
    bands = []
    row = 0
    for i in range(n_ues):
        rows = base + (1 if i < extra else 0)
        bands.append((row, rows))
        row += rows
    return bands


def tile_span(
    config: ScenarioConfig, ue_index: int, tier: Tier, row: int, col0: int, span: int
) -> list[BwpAllocation]:
    """Tile ``span`` columns of one lattice row with valid BWPs.

    Uses the narrowest numerology (single-row footprint) and the longest
    mini-slot that fits, repeatedly; a remainder shorter than one symbol
    group stays unallocated.
    """
    spec = config.grid
    stride = 2 ** (spec.mu_max - spec.mu_min)  # columns per symbol at mu_min
    allocations = []
    col = col0
    while span - (col - col0) >= stride:
        eta = min(14, (span - (col - col0)) // stride)
        shape = bwp_shape(spec.mu_min, eta, spec)
        allocations.append(
            BwpAllocation(
                ue_index=ue_index,
                tier=tier,
                shape=shape,
                time_offset_units=col,
                freq_offset_units=row,
            )
        )
        col += shape.time_len_units
    return allocations


def _band_plan(
    config: ScenarioConfig,
    profiles: list[UeProfile],
    spans: list[tuple[Tier, int, int]],
) -> AllocationPlan:
    """Shared builder: every user gets the same per-row column spans inside
    its own frequency band."""
    dims = config.dims()
    allocations: list[BwpAllocation] = []
    reports: list[QoeReport] = []
    for profile, (row0, n_rows) in zip(profiles, band_rows(dims.n_freq_units, config.n_ues)):
        bits = {Tier.BT: 0.0, Tier.ET: 0.0}
        for tier, col0, span in spans:
            for row in range(row0, row0 + n_rows):
                for alloc in tile_span(config, profile.index, tier, row, col0, span):
                    allocations.append(alloc)
                    bits[tier] += (
                        alloc.shape.area_shz(dims) * profile.link.spectral_efficiency
                    )
        reports.append(
            evaluate_ue(
                bits[Tier.BT], bits[Tier.ET], config.frame_duration_s, profile.qoe
            )
        )
    assert validate_allocation_set(allocations, dims)
    return AllocationPlan(allocations=tuple(allocations), reports=tuple(reports))


def equal_bandwidth_plan(
    config: ScenarioConfig, profiles: list[UeProfile]
) -> AllocationPlan:
    """Equal bandwidth split, whole frame, all base tier (no FoV prediction,
    so the combined QoE has no enhancement term)."""
    dims = config.dims()
    return _band_plan(config, profiles, [(Tier.BT, 0, dims.n_time_units)])


def equal_time_frequency_plan(
    config: ScenarioConfig, profiles: list[UeProfile]
) -> AllocationPlan:
    """Equal bandwidth split with the frame halved in time: base tier first,
    enhancement tier second."""
    dims = config.dims()
    half = dims.n_time_units // 2
    return _band_plan(
        config,
        profiles,
        [(Tier.BT, 0, half), (Tier.ET, half, dims.n_time_units - half)],
    )


def plan_to_trace(plan: AllocationPlan) -> list[dict]:
    """Plan as step records, same schema the environment emits."""
    records = []
    for t, alloc in enumerate(plan.allocations):
        records.append(
            {
                "t": t,
                "ue": alloc.ue_index,
                "tier": alloc.tier.value,
                "action": {"mu": alloc.shape.mu, "eta": alloc.shape.eta},
                "placement": {
                    "time_offset": alloc.time_offset_units,
                    "freq_offset": alloc.freq_offset_units,
                    "time_len": alloc.shape.time_len_units,
                    "freq_width": alloc.shape.freq_width_units,
                },
                "reward": 0.0,
                "branch": "plan",
                "q_tilde": [
                    0.0 if r.q_combined != r.q_combined else r.q_combined
                    for r in plan.reports
                ],
            }
        )
    return records
