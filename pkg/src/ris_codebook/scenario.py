"""Surface geometries, multipath channels, and synthetic scenario generation.

Element positions are expressed in wavelength units, so phase responses never
need a carrier frequency. Angles are azimuth-only and always reduced to
(-pi, pi]. Channels are plain complex vectors over the surface elements; the
composite channel (transmitter-side times receiver-side, elementwise) is the
only channel object the codebook optimizer ever touches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DatasetFormatError, DimensionError
from .utils import TWO_PI, wrap_phase


@dataclass(frozen=True, eq=False)
class SurfaceGeometry:
    """Element positions of one or more (possibly distributed) sub-surfaces.

    positions: (M, 3) array of element coordinates in wavelength units.
    subsurface_sizes: element count per sub-surface; sizes partition [0, M).
    """

    positions: np.ndarray
    subsurface_sizes: tuple[int, ...] = ()

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise DimensionError("positions must be an (M, 3) array")
        if pos.shape[0] < 1:
            raise ConfigurationError("geometry needs at least one element")
        if not np.all(np.isfinite(pos)):
            raise ConfigurationError("element positions must be finite")
        sizes = tuple(int(s) for s in self.subsurface_sizes) or (pos.shape[0],)
        if any(s < 1 for s in sizes):
            raise ConfigurationError("sub-surface sizes must be positive")
        if sum(sizes) != pos.shape[0]:
            raise DimensionError(
                f"sub-surface sizes {sizes} do not sum to {pos.shape[0]} elements"
            )
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "subsurface_sizes", sizes)

    @property
    def num_elements(self) -> int:
        return self.positions.shape[0]

    @property
    def subsurface_slices(self) -> tuple[slice, ...]:
        out, start = [], 0
        for s in self.subsurface_sizes:
            out.append(slice(start, start + s))
            start += s
        return tuple(out)

    def subsurface(self, index: int) -> "SurfaceGeometry":
        sl = self.subsurface_slices[index]
        return SurfaceGeometry(self.positions[sl], (sl.stop - sl.start,))

    @classmethod
    def ula(cls, num_elements: int, spacing: float = 0.5) -> "SurfaceGeometry":
        """Uniform linear array along the y axis (half-wavelength by default)."""
        pos = np.zeros((num_elements, 3))
        pos[:, 1] = spacing * np.arange(num_elements)
        return cls(pos, (num_elements,))

    @classmethod
    def distributed_ulas(
        cls, sizes, spacing: float = 0.5, gap: float = 4.0
    ) -> "SurfaceGeometry":
        """Collinear ULAs separated by `gap` wavelengths, concatenated."""
        sizes = tuple(int(s) for s in sizes)
        chunks, offset = [], 0.0
        for s in sizes:
            pos = np.zeros((s, 3))
            pos[:, 1] = offset + spacing * np.arange(s)
            chunks.append(pos)
            offset += spacing * s + gap
        return cls(np.vstack(chunks), sizes)


@dataclass(frozen=True)
class PathComponent:
    """One propagation path: complex linear gain and angle of arrival."""

    gain: complex
    aoa: float

    def __post_init__(self):
        if not np.isfinite(self.gain):
            raise ConfigurationError("path gain must be finite")
        if not (-np.pi < self.aoa <= np.pi):
            raise ConfigurationError("path AoA must lie in (-pi, pi]")


@dataclass(frozen=True, eq=False)
class VisibilityRegion:
    """Per-element closed interval [phi_min, phi_max] of seeable AoAs."""

    phi_min: np.ndarray
    phi_max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.phi_min, dtype=float)
        hi = np.asarray(self.phi_max, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("visibility bounds must be equal-length 1-D arrays")
        if np.any(lo > hi):
            raise ConfigurationError("visibility requires phi_min <= phi_max")
        object.__setattr__(self, "phi_min", lo)
        object.__setattr__(self, "phi_max", hi)

    def __len__(self) -> int:
        return self.phi_min.shape[0]

    @classmethod
    def full(cls, num_elements: int) -> "VisibilityRegion":
        return cls(np.full(num_elements, -np.pi), np.full(num_elements, np.pi))

    def indicator(self, aoa: float) -> np.ndarray:
        """1.0 where the element can see `aoa`, 0.0 elsewhere."""
        return ((self.phi_min <= aoa) & (aoa <= self.phi_max)).astype(float)

    def slice(self, sl: slice) -> "VisibilityRegion":
        return VisibilityRegion(self.phi_min[sl], self.phi_max[sl])


def random_visibility(
    num_elements: int,
    rng: np.random.Generator,
    width_range=(np.pi / 2, TWO_PI),
    center_range=(-np.pi, np.pi),
) -> VisibilityRegion:
    """Per-element intervals with uniform random centers and widths.

    The distribution of visibility regions is a free scenario parameter;
    intervals are clipped to [-pi, pi] (no wrap-around intervals).
    """
    centers = rng.uniform(center_range[0], center_range[1], num_elements)
    widths = rng.uniform(width_range[0], width_range[1], num_elements)
    lo = np.clip(centers - widths / 2, -np.pi, np.pi)
    hi = np.clip(centers + widths / 2, -np.pi, np.pi)
    return VisibilityRegion(lo, hi)


@dataclass(frozen=True, eq=False)
class Channel:
    """Length-M complex channel vector over the surface elements."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim != 1:
            raise DimensionError("channel coefficients must be 1-D")
        if not np.all(np.isfinite(c)):
            raise ConfigurationError("channel coefficients must be finite")
        object.__setattr__(self, "coefficients", c)

    def __len__(self) -> int:
        return self.coefficients.shape[0]


@dataclass(frozen=True, eq=False)
class CompositeChannel:
    """Elementwise product of transmitter-side and receiver-side channels.

    Exposes the cached polar view (per-element magnitude and wrapped phase)
    that the gain computations work in.
    """

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim != 1:
            raise DimensionError("channel coefficients must be 1-D")
        if not np.all(np.isfinite(c)):
            raise ConfigurationError("channel coefficients must be finite")
        object.__setattr__(self, "coefficients", c)

    def __len__(self) -> int:
        return self.coefficients.shape[0]

    @cached_property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.coefficients)

    @cached_property
    def phases(self) -> np.ndarray:
        return np.asarray(wrap_phase(np.angle(self.coefficients)))


def array_response(geometry: SurfaceGeometry, aoa: float) -> Channel:
    """Unit-modulus response of the surface to a planar wave from `aoa`.

    Entry m is exp(j * 2*pi * <position_m, unit_direction(aoa)>). For a
    half-wavelength ULA this reduces to exp(j * pi * m * sin(aoa)).
    """
    direction = np.array([np.cos(aoa), np.sin(aoa), 0.0])
    phase = TWO_PI * geometry.positions @ direction
    return Channel(np.exp(1j * phase))


def generate_channel(
    geometry: SurfaceGeometry,
    paths,
    visibility: VisibilityRegion | None = None,
) -> Channel:
    """Sum of per-path responses, masked by each element's visibility.

    Without a visibility region every element sees every path (the
    stationary special case). An empty path list gives the zero channel.
    """
    m = geometry.num_elements
    if visibility is not None and len(visibility) != m:
        raise DimensionError(
            f"visibility covers {len(visibility)} elements, geometry has {m}"
        )
    coeff = np.zeros(m, dtype=complex)
    for p in paths:
        response = array_response(geometry, p.aoa).coefficients
        if visibility is not None:
            response = response * visibility.indicator(p.aoa)
        coeff += p.gain * response
    return Channel(coeff)


def composite_channel(h_tx: Channel, h_rx: Channel) -> CompositeChannel:
    """Hadamard product of the two link channels."""
    if len(h_tx) != len(h_rx):
        raise DimensionError(
            f"channel lengths differ: {len(h_tx)} vs {len(h_rx)}"
        )
    return CompositeChannel(h_tx.coefficients * h_rx.coefficients)


@dataclass(frozen=True)
class ClusterSpec:
    """One user cluster: AoA center, angular spread, and path statistics."""

    center_aoa: float
    angular_spread: float
    num_users: int
    num_paths: int = 5
    mean_power: float = 1.0

    def __post_init__(self):
        if self.num_users < 1:
            raise ConfigurationError("cluster needs at least one user")
        if self.num_paths < 1:
            raise ConfigurationError("cluster needs at least one path")
        if self.angular_spread < 0:
            raise ConfigurationError("angular spread must be non-negative")
        if self.mean_power <= 0:
            raise ConfigurationError("mean power must be positive")


@dataclass(frozen=True, eq=False)
class SyntheticScenario:
    """Generator spec for a desk-scale synthetic channel dataset.

    `transmit_power` and `noise_power` are carried as metadata only; the
    codebook objective is a noiseless gain, so they never enter the
    optimization.
    """

    geometry: SurfaceGeometry
    clusters: tuple[ClusterSpec, ...]
    tx_aoa: float = 0.0
    tx_paths: int = 1
    tx_spread: float = 0.0
    visibility: VisibilityRegion | None = None
    per_subsurface_paths: bool = False
    transmit_power: float = 1.0
    noise_power: float = 0.0
    seed: int = 0

    def __post_init__(self):
        clusters = tuple(self.clusters)
        if not clusters:
            raise ConfigurationError("scenario needs at least one cluster")
        object.__setattr__(self, "clusters", clusters)
        if self.tx_paths < 1:
            raise ConfigurationError("transmitter needs at least one path")
        if self.visibility is not None and len(self.visibility) != self.geometry.num_elements:
            raise DimensionError("visibility length does not match geometry")

    @property
    def num_users(self) -> int:
        return sum(c.num_users for c in self.clusters)


@dataclass(eq=False)
class ChannelDataset:
    """Per-user composite channels plus the geometry they live on."""

    geometry: SurfaceGeometry
    users: list[CompositeChannel]
    transmitter: Channel | None = None
    cluster_labels: np.ndarray | None = None
    seed: int | None = None
    q_hint: int | None = None

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_elements(self) -> int:
        return self.geometry.num_elements

    def matrix(self) -> np.ndarray:
        """Stack user channels into a (num_users, M) complex matrix."""
        return np.vstack([u.coefficients for u in self.users])


def _draw_paths(rng, center, spread, count, power):
    aoas = wrap_phase(center + spread * rng.standard_normal(count))
    scale = np.sqrt(power / (2.0 * count))
    gains = scale * (rng.standard_normal(count) + 1j * rng.standard_normal(count))
    return [PathComponent(complex(g), float(a)) for g, a in zip(gains, np.atleast_1d(aoas))]


def _draw_channel(rng, geometry, visibility, center, spread, count, power, per_sub):
    """One link channel; with per_sub each sub-surface gets its own path set."""
    if not per_sub:
        paths = _draw_paths(rng, center, spread, count, power)
        return generate_channel(geometry, paths, visibility)
    parts = []
    for i, sl in enumerate(geometry.subsurface_slices):
        paths = _draw_paths(rng, center, spread, count, power)
        vis = visibility.slice(sl) if visibility is not None else None
        parts.append(generate_channel(geometry.subsurface(i), paths, vis).coefficients)
    return Channel(np.concatenate(parts))


def generate_scenario(spec: SyntheticScenario) -> ChannelDataset:
    """Deterministically realize a scenario: one draw per (seed, spec).

    Draw order is fixed (transmitter first, then clusters and users in
    declaration order) so that the output is a pure function of the spec.
    """
    rng = np.random.default_rng(spec.seed)
    geom, vis = spec.geometry, spec.visibility
    h_tx = _draw_channel(
        rng, geom, vis, spec.tx_aoa, spec.tx_spread, spec.tx_paths,
        1.0, spec.per_subsurface_paths,
    )
    users, labels = [], []
    for ci, cluster in enumerate(spec.clusters):
        for _ in range(cluster.num_users):
            h_rx = _draw_channel(
                rng, geom, vis, cluster.center_aoa, cluster.angular_spread,
                cluster.num_paths, cluster.mean_power, spec.per_subsurface_paths,
            )
            users.append(composite_channel(h_tx, h_rx))
            labels.append(ci)
    return ChannelDataset(
        geometry=geom,
        users=users,
        transmitter=h_tx,
        cluster_labels=np.asarray(labels, dtype=int),
        seed=spec.seed,
    )


CHANNELS_FORMAT_VERSION = 1


def export_channels(path, dataset: ChannelDataset, config_hash: str | None = None) -> None:
    """Write a channel dataset as structured text (JSON, re/im pairs).

    Floats are serialized with full round-trip precision, so an
    export/import cycle reproduces coefficient arrays bit for bit.
    """
    body = {
        "format_version": CHANNELS_FORMAT_VERSION,
        "M": dataset.num_elements,
        "num_users": dataset.num_users,
        "q_hint": dataset.q_hint,
        "seed": dataset.seed,
        "geometry": {
            "positions": dataset.geometry.positions.tolist(),
            "subsurface_sizes": list(dataset.geometry.subsurface_sizes),
        },
        "users": [
            [[float(c.real), float(c.imag)] for c in u.coefficients]
            for u in dataset.users
        ],
    }
    if config_hash is not None:
        body["config_hash"] = config_hash
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=1)
        fh.write("\n")


def import_channels(path) -> ChannelDataset:
    """Read a dataset written by export_channels, validating as it goes."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    try:
        version = raw["format_version"]
        m = int(raw["M"])
        num_users = int(raw["num_users"])
        geo = raw["geometry"]
        geometry = SurfaceGeometry(
            np.asarray(geo["positions"], dtype=float),
            tuple(geo["subsurface_sizes"]),
        )
        user_records = raw["users"]
    except (KeyError, TypeError) as e:
        raise DatasetFormatError(f"{path}: missing or malformed field: {e}") from e
    if version != CHANNELS_FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported format_version {version!r}")
    if geometry.num_elements != m:
        raise DimensionError(
            f"{path}: header M={m} but geometry has {geometry.num_elements} elements"
        )
    if len(user_records) != num_users:
        raise DimensionError(
            f"{path}: header num_users={num_users} but found {len(user_records)} records"
        )
    users = []
    for ui, rec in enumerate(user_records):
        arr = np.asarray(rec, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise DatasetFormatError(f"{path}: user {ui}: expected [re, im] pairs")
        if arr.shape[0] != m:
            raise DimensionError(
                f"{path}: user {ui}: {arr.shape[0]} coefficients, expected {m}"
            )
        if not np.all(np.isfinite(arr)):
            bad = int(np.argwhere(~np.isfinite(arr))[0][0])
            raise DatasetFormatError(
                f"{path}: user {ui}: non-finite coefficient at element {bad}"
            )
        users.append(CompositeChannel(arr[:, 0] + 1j * arr[:, 1]))
    return ChannelDataset(
        geometry=geometry,
        users=users,
        seed=raw.get("seed"),
        q_hint=raw.get("q_hint"),
    )
