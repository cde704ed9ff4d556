"""Multi-level sub-array decomposition: index algebra, phase synthesis,
effective channels, and the identity check used by the test suite.

The surface of M elements is factored into level sizes (P_1, ..., P_v) with
P_1 * ... * P_v = M. Grouping is contiguous in element order with the level-1
index varying fastest, i.e. element m-1 (0-based) has mixed-radix digits
(p_v, ..., p_1). Level phases are stored as grid *indices* and combined with
the grid's exact integer addition, so synthesized phases always land on the
grid; no floating-point wrap is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codebook import InteractionVector, PhaseGrid
from .errors import ConfigurationError, DimensionError
from .scenario import CompositeChannel


@dataclass(frozen=True)
class LevelSpec:
    """Sub-array sizes per level, lowest level first."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes:
            raise ConfigurationError("level spec needs at least one level")
        if any(s < 1 for s in sizes):
            raise ConfigurationError("level sizes must be positive")
        object.__setattr__(self, "sizes", sizes)

    @property
    def num_levels(self) -> int:
        return len(self.sizes)

    @property
    def num_elements(self) -> int:
        return math.prod(self.sizes)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        """Array shape (P_v, ..., P_1) matching a C-order reshape of elements."""
        return tuple(reversed(self.sizes))

    def level_shape(self, level: int) -> tuple[int, ...]:
        """Shape (P_v, ..., P_level) of the phase array for one level (1-based)."""
        if not 1 <= level <= self.num_levels:
            raise IndexError(f"level {level} outside [1, {self.num_levels}]")
        return self.grid_shape[: self.num_levels - level + 1]

    def require_elements(self, m: int) -> None:
        if self.num_elements != m:
            raise ConfigurationError(
                f"level sizes {self.sizes} multiply to {self.num_elements}, "
                f"but the surface has {m} elements"
            )


def index_to_multilevel(m: int, spec: LevelSpec) -> tuple[int, ...]:
    """Convert a 1-based element index to its multi-level index (p_v, ..., p_1).

    p_l = mod(ceil(m / (P_1 ... P_{l-1})), P_l), with a 0 result standing
    for P_l. Exact inverse of multilevel_to_index.
    """
    if not 1 <= m <= spec.num_elements:
        raise IndexError(f"element index {m} outside [1, {spec.num_elements}]")
    digits = []
    stride = 1
    for size in spec.sizes:
        r = math.ceil(m / stride) % size
        digits.append(r if r else size)
        stride *= size
    return tuple(reversed(digits))


def multilevel_to_index(indices, spec: LevelSpec) -> int:
    """Convert (p_v, ..., p_1) back to the 1-based element index."""
    indices = tuple(int(i) for i in indices)
    if len(indices) != spec.num_levels:
        raise DimensionError(
            f"expected {spec.num_levels} level indices, got {len(indices)}"
        )
    m = 1
    stride = 1
    for p, size in zip(reversed(indices), spec.sizes):
        if not 1 <= p <= size:
            raise IndexError(f"level index {p} outside [1, {size}]")
        m += (p - 1) * stride
        stride *= size
    return m


@dataclass(frozen=True, eq=False)
class LevelPhases:
    """Grid-index phase arrays for every level of a decomposition.

    arrays[l-1] holds level l and has shape (P_v, ..., P_l); level 1 covers
    every element, level v has exactly P_v entries.
    """

    grid: PhaseGrid
    spec: LevelSpec
    arrays: tuple[np.ndarray, ...]

    def __post_init__(self):
        arrays = tuple(np.asarray(a) for a in self.arrays)
        if len(arrays) != self.spec.num_levels:
            raise DimensionError(
                f"expected {self.spec.num_levels} level arrays, got {len(arrays)}"
            )
        checked = []
        for level, arr in enumerate(arrays, start=1):
            want = self.spec.level_shape(level)
            if arr.shape != want:
                raise DimensionError(
                    f"level {level} phases have shape {arr.shape}, expected {want}"
                )
            checked.append(self.grid.check_indices(arr))
        object.__setattr__(self, "arrays", tuple(checked))

    @classmethod
    def from_flat(cls, grid: PhaseGrid, spec: LevelSpec, flat_arrays) -> "LevelPhases":
        """Build from flat per-level arrays laid out in C order."""
        arrays = [
            np.asarray(a).reshape(spec.level_shape(level))
            for level, a in enumerate(flat_arrays, start=1)
        ]
        return cls(grid, spec, tuple(arrays))

    @classmethod
    def zeros(cls, grid: PhaseGrid, spec: LevelSpec) -> "LevelPhases":
        arrays = [
            np.full(spec.level_shape(level), grid.zero_index, dtype=np.int64)
            for level in range(1, spec.num_levels + 1)
        ]
        return cls(grid, spec, tuple(arrays))


def _broadcastable(arr: np.ndarray, level: int) -> np.ndarray:
    """Append the trailing singleton axes that broadcast level l over lower levels."""
    return arr.reshape(arr.shape + (1,) * (level - 1))


def _index_sum(grid: PhaseGrid, arrays, shape) -> np.ndarray:
    """Exact grid-index sum of the given level arrays, broadcast to `shape`."""
    total = np.broadcast_to(_broadcastable(arrays[0], 1), shape).copy()
    for level, arr in enumerate(arrays[1:], start=2):
        total = grid.add_indices(total, _broadcastable(arr, level))
    return total


def synthesize_phases(levels: LevelPhases) -> InteractionVector:
    """Combine all level phases into the per-element interaction vector.

    The per-element phase is the wrapped sum of its level components; the
    sum is carried out on grid indices, so the result is a valid grid
    vector by construction.
    """
    spec = levels.spec
    total = _index_sum(levels.grid, levels.arrays, spec.grid_shape)
    return InteractionVector(total.reshape(-1), levels.grid)


def _effective_matrix(channel_matrix: np.ndarray, spec: LevelSpec,
                      grid: PhaseGrid, lower_arrays) -> np.ndarray:
    """Group-combined channels for every user after applying lower levels.

    Returns a (num_users, P_v * ... * P_{v'}) matrix where v' - 1 levels
    are frozen. Group coefficients are plain sums (no normalization); the
    1/sqrt(M) factor is applied once at final gain evaluation.
    """
    users, m = channel_matrix.shape
    spec.require_elements(m)
    lower = [np.asarray(a) for a in lower_arrays]
    if len(lower) >= spec.num_levels:
        raise DimensionError(
            f"at most {spec.num_levels - 1} lower levels may be frozen"
        )
    for level, arr in enumerate(lower, start=1):
        want = spec.level_shape(level)
        if arr.shape != want:
            if arr.ndim == 1 and arr.shape[0] == math.prod(want):
                arr = arr.reshape(want)
                lower[level - 1] = arr
            else:
                raise DimensionError(
                    f"level {level} phases have shape {arr.shape}, expected {want}"
                )
        grid.check_indices(arr)
    grouped = channel_matrix.reshape((users,) + spec.grid_shape)
    if not lower:
        return grouped.reshape(users, -1)
    total = _index_sum(grid, lower, spec.grid_shape)
    rotated = grouped * np.exp(1j * grid.values[total])
    summed = rotated.sum(axis=tuple(range(-1, -len(lower) - 1, -1)))
    return summed.reshape(users, -1)


def effective_channel(channel, spec: LevelSpec, grid: PhaseGrid,
                      lower_levels) -> CompositeChannel:
    """Combined channel seen by the next level once lower phases are frozen.

    With the lower levels applied, the gain of the reduced problem under
    any upper-level phases equals the full-array gain of the corresponding
    synthesized vector (up to the single 1/M normalization).
    """
    coeff = np.asarray(
        channel.coefficients if hasattr(channel, "coefficients") else channel,
        dtype=complex,
    )
    out = _effective_matrix(coeff[None, :], spec, grid, list(lower_levels))
    return CompositeChannel(out[0])


def decomposition_identity_check(channel, levels: LevelPhases) -> float:
    """|direct co-phased sum - nested multi-level sum| for one channel.

    The two evaluations are algebraically identical; this reports the
    floating-point deviation, which the test suite bounds.
    """
    coeff = np.asarray(
        channel.coefficients if hasattr(channel, "coefficients") else channel,
        dtype=complex,
    )
    spec, grid = levels.spec, levels.grid
    spec.require_elements(coeff.shape[0])
    direct = np.sum(coeff * np.exp(1j * synthesize_phases(levels).phases))
    nested = coeff.reshape(spec.grid_shape)
    for arr in levels.arrays:
        nested = (nested * np.exp(1j * grid.values[arr])).sum(axis=-1)
    return float(np.abs(direct - nested))
