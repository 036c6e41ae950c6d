"""Multi-altitude Walker-like constellation and circular-orbit propagation."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhysicalConstants:
    earth_radius: float = 6371.0                # km
    gravitational_parameter: float = 398600.4418  # km^3/s^2
    earth_rotation_rate: float = 7.2921159e-5   # rad/s, sidereal
    boltzmann: float = 1.380649e-23             # J/K
    light_speed: float = 299_792_458.0          # m/s

    def __post_init__(self):
        for name in ("earth_radius", "gravitational_parameter", "earth_rotation_rate",
                     "boltzmann", "light_speed"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def sidereal_day(self) -> float:
        return TWO_PI / self.earth_rotation_rate


CONSTANTS = PhysicalConstants()


def normalize_angle(x):
    return np.mod(x, TWO_PI)


@dataclass(frozen=True)
class ConstellationSpec:
    """P planes of T satellites; altitudes are cycled over the planes in order.

    ``total_sats`` allows a count that P does not divide (e.g. 50 over 6
    planes): the first ``total_sats % P`` planes get one extra satellite and
    the phasing terms use the fractional T = total_sats / P.
    ``in_plane_spacing`` selects ``"strided"`` ((i-1)·P·2π/T) or
    ``"walker"`` ((i-1)·2π/T).
    """

    num_planes: int
    sats_per_plane: int = 0
    phasing: int = 1
    inclination: float = math.radians(70.0)
    plane_altitudes: tuple[float, ...] = (500.0, 1000.0, 1500.0)
    raan_ref: float = 0.0
    anomaly_ref: float = 0.0
    total_sats: int | None = None
    in_plane_spacing: str = "strided"

    def __post_init__(self):
        if self.num_planes < 1:
            raise ValueError("need at least one orbital plane")
        if self.total_sats is None and self.sats_per_plane < 1:
            raise ValueError("need at least one satellite per plane")
        if self.total_sats is not None and self.total_sats < 1:
            raise ValueError("need at least one satellite")
        if not self.plane_altitudes or min(self.plane_altitudes) <= 0:
            raise ValueError("altitudes must be positive")
        if not 0.0 <= self.inclination <= math.pi:
            raise ValueError("inclination must lie in [0, pi]")
        if self.in_plane_spacing not in ("strided", "walker"):
            raise ValueError("in_plane_spacing must be 'strided' or 'walker'")

    @property
    def num_sats(self) -> int:
        return self.total_sats if self.total_sats is not None else self.num_planes * self.sats_per_plane

    @property
    def t_per_plane(self) -> float:
        return self.num_sats / self.num_planes

    def plane_counts(self) -> list[int]:
        if self.total_sats is None:
            return [self.sats_per_plane] * self.num_planes
        base, extra = divmod(self.total_sats, self.num_planes)
        return [base + (1 if m < extra else 0) for m in range(self.num_planes)]


@dataclass(frozen=True)
class OrbitalElements:
    semi_major_axis: float  # km
    raan: float
    anomaly_at_epoch: float
    inclination: float
    plane_index: int  # 1-based, m
    slot_index: int   # 1-based, i
    constants: PhysicalConstants = field(default=CONSTANTS, repr=False, compare=False)

    def __post_init__(self):
        if self.semi_major_axis <= self.constants.earth_radius:
            raise ValueError("semi-major axis must exceed the Earth radius")

    @property
    def mean_motion(self) -> float:
        return math.sqrt(self.constants.gravitational_parameter / self.semi_major_axis ** 3)

    @property
    def period(self) -> float:
        return TWO_PI / self.mean_motion

    @property
    def altitude(self) -> float:
        return self.semi_major_axis - self.constants.earth_radius


@dataclass(frozen=True)
class BodyState:
    position: np.ndarray  # km, ECI
    timestamp: float


class AssetKind(enum.Enum):
    GS = "GS"
    HAP = "HAP"


@dataclass(frozen=True)
class GroundAsset:
    latitude: float
    longitude: float
    altitude: float = 0.0
    kind: AssetKind = AssetKind.GS
    name: str = ""

    def __post_init__(self):
        if abs(self.latitude) > math.pi / 2 + 1e-15:
            raise ValueError("latitude out of range")
        if self.altitude < 0:
            raise ValueError("altitude must be non-negative")


def build_constellation(spec: ConstellationSpec,
                        constants: PhysicalConstants = CONSTANTS) -> list[OrbitalElements]:
    P = spec.num_planes
    T = spec.t_per_plane
    step = P if spec.in_plane_spacing == "strided" else 1
    out = []
    for m, count in enumerate(spec.plane_counts(), start=1):
        raan = spec.raan_ref + (m - 1) * TWO_PI / P
        alt = spec.plane_altitudes[(m - 1) % len(spec.plane_altitudes)]
        for i in range(1, count + 1):
            u = spec.anomaly_ref + (m - 1) * spec.phasing * TWO_PI / T + (i - 1) * step * TWO_PI / T
            out.append(OrbitalElements(
                semi_major_axis=constants.earth_radius + alt,
                raan=float(normalize_angle(raan)),
                anomaly_at_epoch=float(normalize_angle(u)),
                inclination=spec.inclination,
                plane_index=m,
                slot_index=i,
                constants=constants,
            ))
    return out


def anomaly(elem: OrbitalElements, t):
    return normalize_angle(elem.anomaly_at_epoch + elem.mean_motion * np.asarray(t, dtype=float))


def _orbit_positions(a: float, raan: float, incl: float, u) -> np.ndarray:
    cu, su = np.cos(u), np.sin(u)
    cO, sO = math.cos(raan), math.sin(raan)
    ci, si = math.cos(incl), math.sin(incl)
    # Rz(raan) @ Rx(incl) @ (a cos u, a sin u, 0)
    x = a * (cO * cu - sO * ci * su)
    y = a * (sO * cu + cO * ci * su)
    z = a * (si * su)
    return np.stack([x, y, z], axis=-1)


def positions(elem: OrbitalElements, t) -> np.ndarray:
    """Vectorised ECI positions (km), shape ``t.shape + (3,)``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be non-negative")
    return _orbit_positions(elem.semi_major_axis, elem.raan, elem.inclination, anomaly(elem, t))


def propagate(elem: OrbitalElements, t: float) -> BodyState:
    return BodyState(positions(elem, float(t)), float(t))


def asset_positions(asset: GroundAsset, t, constants: PhysicalConstants = CONSTANTS) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    r = constants.earth_radius + asset.altitude
    theta = asset.longitude + constants.earth_rotation_rate * t
    cl = math.cos(asset.latitude)
    return np.stack([
        r * cl * np.cos(theta),
        r * cl * np.sin(theta),
        np.full_like(theta, r * math.sin(asset.latitude)),
    ], axis=-1)


def ground_position(asset: GroundAsset, t: float, constants: PhysicalConstants = CONSTANTS) -> BodyState:
    return BodyState(asset_positions(asset, float(t), constants), float(t))
