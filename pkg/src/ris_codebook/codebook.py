"""Quantized phase grid, interaction vectors/codebooks, gains, and oracles.

Grid enumeration convention: with q bits the grid holds 2^q values
-pi + 2*pi*k/2^q for k = 1..2^q, so +pi is on the grid and -pi is not.
Internally beam entries are stored as 0-based indices into that ascending
enumeration; persisted files use 1-based indices (k itself) so they are
portable bit-exactly. Because the grid is a uniform lattice containing 0,
it is closed under addition modulo 2*pi, which the multi-level phase
synthesis relies on as an exact integer invariant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    ConfigurationError,
    DatasetFormatError,
    DimensionError,
    SearchSpaceError,
)
from .utils import TWO_PI, wrap_phase

EXHAUSTIVE_GUARD = 2**20


@dataclass(frozen=True)
class PhaseGrid:
    """The 2^q-point phase set realizable by a q-bit phase shifter."""

    bits: int

    def __post_init__(self):
        if not isinstance(self.bits, int) or not (1 <= self.bits <= 20):
            raise ConfigurationError("phase-shifter resolution must be an int in [1, 20]")

    @property
    def size(self) -> int:
        return 1 << self.bits

    @property
    def step(self) -> float:
        return TWO_PI / self.size

    @cached_property
    def values(self) -> np.ndarray:
        """Ascending grid values in (-pi, pi]."""
        k = np.arange(1, self.size + 1)
        return -np.pi + TWO_PI * k / self.size

    @property
    def zero_index(self) -> int:
        """Index of the 0.0 phase (exists for every q >= 1)."""
        return self.size // 2 - 1

    def _lattice_to_index(self, k):
        return np.mod(k + self.size // 2 - 1, self.size).astype(np.int64)

    def _bracket(self, phases):
        """Nearest index, the other bracketing index, and the snap error.

        Exact halfway ties resolve to the smaller index, which keeps the
        snapping deterministic for golden tests.
        """
        x = np.asarray(wrap_phase(phases))
        pos = x / self.step
        k_down = np.floor(pos)
        d_down = np.abs(x - k_down * self.step)
        d_up = np.abs((k_down + 1) * self.step - x)
        i_down = self._lattice_to_index(k_down)
        i_up = self._lattice_to_index(k_down + 1)
        down_wins = (d_down < d_up) | ((d_down == d_up) & (i_down < i_up))
        near = np.where(down_wins, i_down, i_up)
        flip = np.where(down_wins, i_up, i_down)
        err = np.where(down_wins, d_down, d_up)
        return near, flip, err

    def snap(self, phases):
        """Nearest grid index for each phase (ties toward the smaller index)."""
        near, _, _ = self._bracket(phases)
        if near.ndim == 0:
            return int(near)
        return near

    def add_indices(self, a, b):
        """Index arithmetic realizing exact phase addition modulo 2*pi."""
        return np.mod(np.asarray(a) + np.asarray(b) + self.size // 2 + 1, self.size)

    def check_indices(self, indices) -> np.ndarray:
        idx = np.asarray(indices)
        if not np.issubdtype(idx.dtype, np.integer):
            raise ConfigurationError("grid indices must be integers")
        if idx.size and (idx.min() < 0 or idx.max() >= self.size):
            raise ConfigurationError(
                f"grid indices must lie in [0, {self.size}), got range "
                f"[{idx.min()}, {idx.max()}]"
            )
        return idx.astype(np.int64)


@dataclass(frozen=True, eq=False)
class InteractionVector:
    """Per-element reflection phases, stored as grid indices.

    The implied beam is (1/sqrt(M)) * exp(j * theta_m), so every entry has
    magnitude exactly 1/sqrt(M).
    """

    indices: np.ndarray
    grid: PhaseGrid

    def __post_init__(self):
        idx = self.grid.check_indices(self.indices)
        if idx.ndim != 1:
            raise DimensionError("interaction vector indices must be 1-D")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def phases(self) -> np.ndarray:
        return self.grid.values[self.indices]

    @property
    def vector(self) -> np.ndarray:
        return np.exp(1j * self.phases) / np.sqrt(len(self))


@dataclass(frozen=True, eq=False)
class Codebook:
    """N interaction vectors over a common grid and surface size."""

    indices: np.ndarray
    grid: PhaseGrid

    def __post_init__(self):
        idx = self.grid.check_indices(self.indices)
        if idx.ndim != 2 or idx.shape[0] < 1:
            raise DimensionError("codebook indices must be a non-empty (N, M) array")
        object.__setattr__(self, "indices", idx)

    @property
    def num_beams(self) -> int:
        return self.indices.shape[0]

    @property
    def num_elements(self) -> int:
        return self.indices.shape[1]

    @property
    def phases(self) -> np.ndarray:
        return self.grid.values[self.indices]

    @property
    def beams(self) -> list[InteractionVector]:
        return [InteractionVector(row, self.grid) for row in self.indices]

    @classmethod
    def from_beams(cls, beams) -> "Codebook":
        beams = list(beams)
        grids = {b.grid for b in beams}
        if len(grids) != 1:
            raise ConfigurationError("codebook beams must share one phase grid")
        lengths = {len(b) for b in beams}
        if len(lengths) != 1:
            raise DimensionError("codebook beams must share one length")
        return cls(np.vstack([b.indices for b in beams]), beams[0].grid)


def _as_coefficients(channel) -> np.ndarray:
    if hasattr(channel, "coefficients"):
        return np.asarray(channel.coefficients)
    return np.asarray(channel, dtype=complex)


def _as_matrix(users) -> np.ndarray:
    """Stack channels into a (num_users, M) complex matrix."""
    if isinstance(users, np.ndarray) and users.ndim == 2:
        return users.astype(complex, copy=False)
    rows = [_as_coefficients(u) for u in users]
    if not rows:
        raise ValueError("user channel set must be non-empty")
    return np.vstack(rows)


def phase_gain(channel, phases) -> float:
    """Beamforming gain for arbitrary (possibly off-grid) phases.

    Evaluates (1/M) * |sum_m alpha_m exp(j (phi_m + theta_m))|^2.
    """
    c = _as_coefficients(channel)
    phases = np.asarray(phases, dtype=float)
    if phases.shape != c.shape:
        raise DimensionError(
            f"phase vector length {phases.shape} does not match channel {c.shape}"
        )
    s = np.sum(c * np.exp(1j * phases))
    return float(np.abs(s) ** 2 / c.shape[0])


def gain(channel, beam: InteractionVector) -> float:
    """Composite channel gain |c^T psi|^2 achieved by one beam."""
    c = _as_coefficients(channel)
    if len(beam) != c.shape[0]:
        raise DimensionError(
            f"beam length {len(beam)} does not match channel length {c.shape[0]}"
        )
    return phase_gain(c, beam.phases)


def gain_matrix(users, codebook: Codebook) -> np.ndarray:
    """(num_users, num_beams) gains for every user/beam pair."""
    c = _as_matrix(users)
    if c.shape[1] != codebook.num_elements:
        raise DimensionError(
            f"codebook is over {codebook.num_elements} elements, channels over {c.shape[1]}"
        )
    steering = np.exp(1j * codebook.phases)
    return np.abs(c @ steering.T) ** 2 / c.shape[1]


def codebook_objective(codebook: Codebook, users) -> float:
    """Mean over users of the best-beam gain (the codebook design objective)."""
    c = _as_matrix(users)
    if c.shape[0] == 0:
        raise ValueError("codebook objective needs at least one user")
    return float(gain_matrix(c, codebook).max(axis=1).mean())


def dft_phases(num_elements: int, num_beams: int) -> np.ndarray:
    """Ideal (unquantized) scanning-beam phases, wrapped to (-pi, pi]."""
    if num_beams < 1:
        raise ConfigurationError("codebook needs at least one beam")
    m = np.arange(num_elements)
    n = np.arange(num_beams)
    return np.asarray(wrap_phase(-TWO_PI * np.outer(n, m) / num_beams))


def dft_codebook(num_elements: int, num_beams: int, grid: PhaseGrid) -> Codebook:
    """Scanning-beam baseline snapped to the hardware phase grid.

    The quantization constraint binds any deployed codebook, so the snapped
    variant is the default; `dft_phases` stays available for reporting the
    ideal reference. Per-element snapping error is at most pi / 2^q.
    """
    ideal = dft_phases(num_elements, num_beams)
    return Codebook(grid.snap(ideal), grid)


def egc_upper_bound(channel) -> float:
    """Equal-gain-combining bound (1/M) * (sum_m alpha_m)^2.

    This is the gain under perfect continuous co-phasing, so it dominates
    the gain of every unit-modulus beam.
    """
    c = _as_coefficients(channel)
    return float(np.abs(c).sum() ** 2 / c.shape[0])


def aligned_oracle(channel, grid: PhaseGrid) -> InteractionVector:
    """Genie beam that co-phases the channel using full phase knowledge.

    For each candidate target phase on the grid, each element's shift is
    snapped to cancel the channel phase; the best candidate wins (ties to
    the smallest candidate index). Guaranteed to reach at least
    cos^2(pi / 2^q) of the EGC bound. Oracle/testing use only: it reads
    channel phases, which the learning path never does.
    """
    c = _as_coefficients(channel)
    phases = np.asarray(wrap_phase(np.angle(c)))
    # candidate offsets sweep the grid starting at phase zero, so exact
    # ties (e.g. an already co-phased channel) resolve to the zero offset
    offsets = wrap_phase(grid.step * np.arange(grid.size))
    deltas = wrap_phase(np.atleast_1d(offsets)[:, None] - phases[None, :])
    candidates = np.asarray(grid.snap(deltas))
    steering = np.exp(1j * grid.values[candidates])
    gains = np.abs(steering @ c) ** 2 / c.shape[0]
    # first candidate within float tolerance of the max keeps the
    # selection deterministic when offsets tie mathematically
    best = int(np.argmax(gains >= gains.max() * (1.0 - 1e-12)))
    return InteractionVector(candidates[best], grid)


def exhaustive_search(users, grid: PhaseGrid, guard: int = EXHAUSTIVE_GUARD) -> InteractionVector:
    """Globally optimal beam by enumerating every grid vector.

    Maximizes the mean gain over the given users. Refuses to run when
    (2^q)^M exceeds `guard` combinations; ties resolve to the first optimum
    in lexicographic index order.
    """
    c = _as_matrix(users)
    m = c.shape[1]
    total = grid.size**m
    if total > guard:
        raise SearchSpaceError(
            f"(2^{grid.bits})^{m} = {total} combinations exceeds the "
            f"exhaustive-search guard of {guard}"
        )
    radix = grid.size ** np.arange(m - 1, -1, -1, dtype=np.int64)
    best_gain = -1.0
    best = None
    chunk = 8192
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (ids[:, None] // radix[None, :]) % grid.size
        steering = np.exp(1j * grid.values[digits])
        gains = (np.abs(steering @ c.T) ** 2).mean(axis=1) / m
        top = int(np.argmax(gains))
        if gains[top] > best_gain:
            best_gain = float(gains[top])
            best = digits[top].copy()
    return InteractionVector(best, grid)


CODEBOOK_FORMAT_VERSION = 1


def save_codebook(path, codebook: Codebook, config_hash: str | None = None) -> None:
    """Persist a codebook with 1-based grid indices (portable bit-exactly)."""
    body = {
        "format_version": CODEBOOK_FORMAT_VERSION,
        "M": codebook.num_elements,
        "N": codebook.num_beams,
        "q": codebook.grid.bits,
        "beams": (codebook.indices + 1).tolist(),
    }
    if config_hash is not None:
        body["config_hash"] = config_hash
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=1)
        fh.write("\n")


def load_codebook(path) -> Codebook:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    try:
        version = raw["format_version"]
        m, n, q = int(raw["M"]), int(raw["N"]), int(raw["q"])
        beams = np.asarray(raw["beams"])
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError(f"{path}: missing or malformed field: {e}") from e
    if version != CODEBOOK_FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported format_version {version!r}")
    grid = PhaseGrid(q)
    if beams.shape != (n, m):
        raise DimensionError(f"{path}: beams shape {beams.shape} != (N={n}, M={m})")
    if not np.issubdtype(beams.dtype, np.integer):
        raise DatasetFormatError(f"{path}: beam indices must be integers")
    if beams.min() < 1 or beams.max() > grid.size:
        raise DatasetFormatError(
            f"{path}: beam indices must lie in [1, {grid.size}] (1-based)"
        )
    return Codebook(beams - 1, grid)
