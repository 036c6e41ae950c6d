"""Sub-THz link capacity: free-space loss, molecular absorption, pointing loss, thermal noise."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erf

from .orbital import CONSTANTS

C_LIGHT = CONSTANTS.light_speed
K_BOLTZMANN = CONSTANTS.boltzmann


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def aperture_gain(diameter: float, frequency, efficiency: float = 1.0):
    """Parabolic aperture gain (pi D f / c)^2 * efficiency."""
    return efficiency * (math.pi * diameter * np.asarray(frequency, dtype=float) / C_LIGHT) ** 2


class PathClass(enum.Enum):
    SPACE_AIR = "space-air"
    AIR_GROUND = "air-ground"


# kappa_a in 1/km. Above a stratospheric HAP there is almost no absorbing
# column; the tropospheric leg is water-vapour dominated and rises toward
# the wing of the 118.75 GHz oxygen line.
DEFAULT_ABSORPTION = {
    PathClass.SPACE_AIR: ((90e9, 2.0e-5), (95e9, 2.2e-5), (100e9, 2.6e-5), (105e9, 3.2e-5)),
    PathClass.AIR_GROUND: ((90e9, 9.0e-3), (95e9, 9.6e-3), (100e9, 1.05e-2), (105e9, 1.2e-2)),
}


@dataclass(frozen=True)
class AbsorptionModel:
    """Per-path-class (frequency Hz -> kappa 1/km) tables, linearly interpolated."""

    coefficients: dict = field(default_factory=lambda: dict(DEFAULT_ABSORPTION))

    def __post_init__(self):
        for cls, table in self.coefficients.items():
            freqs = [f for f, _ in table]
            if any(k < 0 for _, k in table):
                raise ValueError(f"negative absorption coefficient in {cls}")
            if freqs != sorted(freqs) or len(set(freqs)) != len(freqs):
                raise ValueError(f"frequencies for {cls} must be strictly increasing")

    def kappa(self, frequency, path_class: PathClass = PathClass.SPACE_AIR):
        table = self.coefficients[PathClass(path_class)]
        f = np.asarray(frequency, dtype=float)
        freqs = np.array([p[0] for p in table])
        kap = np.array([p[1] for p in table])
        if len(table) == 1:
            if np.any(f != freqs[0]):
                raise ValueError("frequency outside the absorption table")
            return np.full_like(f, kap[0])
        if np.any(f < freqs[0]) or np.any(f > freqs[-1]):
            raise ValueError(f"frequency outside the absorption table [{freqs[0]:g}, {freqs[-1]:g}] Hz")
        return np.interp(f, freqs, kap)

    @classmethod
    def constant(cls, kappa_per_km: float, f_lo: float = 1e9, f_hi: float = 1e12) -> "AbsorptionModel":
        table = ((f_lo, kappa_per_km), (f_hi, kappa_per_km))
        return cls({PathClass.SPACE_AIR: table, PathClass.AIR_GROUND: table})

    def with_table(self, path_class: PathClass, table) -> "AbsorptionModel":
        coeffs = dict(self.coefficients)
        coeffs[PathClass(path_class)] = tuple((float(f), float(k)) for f, k in table)
        return AbsorptionModel(coeffs)


def load_absorption_table(path: str | Path) -> tuple[tuple[float, float], ...]:
    """Two whitespace/comma separated columns: frequency_hz, kappa_per_km. '#' starts a comment."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        rows.append((float(parts[0]), float(parts[1])))
    return tuple(sorted(rows))


def absorption(am: AbsorptionModel, frequency, path_length_km: float,
               path_class: PathClass = PathClass.SPACE_AIR):
    """Homogeneous-path absorption factor exp(kappa(f) * L) >= 1."""
    if path_length_km < 0:
        raise ValueError("path length must be non-negative")
    return np.exp(am.kappa(frequency, path_class) * path_length_km)


@dataclass(frozen=True)
class PointingModel:
    error_angle: float = 1e-6   # rad
    beam_waist_tx: float = 0.1  # m
    rx_aperture_radius: float = 0.25  # m
    error_std: float = 0.0      # rad; >0 draws a zero-mean Gaussian error per transmission

    def __post_init__(self):
        if self.error_angle < 0 or self.error_std < 0:
            raise ValueError("pointing error must be non-negative")
        if self.beam_waist_tx <= 0 or self.rx_aperture_radius <= 0:
            raise ValueError("beam waist and aperture radius must be positive")

    def sample(self, rng: np.random.Generator) -> "PointingModel":
        if self.error_std == 0:
            return self
        return PointingModel(abs(rng.normal(0.0, self.error_std)), self.beam_waist_tx,
                             self.rx_aperture_radius, 0.0)


def equivalent_beam_width_sq(pm: PointingModel, distance_m: float, frequency):
    w_z = C_LIGHT * distance_m / (math.pi * np.asarray(frequency, dtype=float) * pm.beam_waist_tx)
    v = math.sqrt(math.pi / 2.0) * pm.rx_aperture_radius / w_z
    # v -> 0: erf(v)/(2v) -> 1/sqrt(pi), so w_zeq^2 -> w_z^2
    small = v < 1e-8
    v_safe = np.where(small, 1.0, v)
    ratio = np.where(small, 1.0 / math.sqrt(math.pi), erf(v_safe) / (2.0 * v_safe * np.exp(-v_safe ** 2)))
    return w_z ** 2 * math.sqrt(math.pi) * ratio


def pointing_loss(pm: PointingModel, distance_m: float, frequency):
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    if pm.error_angle == 0:
        return np.ones_like(np.asarray(frequency, dtype=float))
    w_eq2 = equivalent_beam_width_sq(pm, distance_m, frequency)
    with np.errstate(over="ignore"):
        return np.exp(-2.0 * (distance_m * math.tan(pm.error_angle)) ** 2 / w_eq2)


def noise_density(temperature: float, noise_figure_db: float) -> float:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return K_BOLTZMANN * temperature * 10.0 ** (noise_figure_db / 10.0)


@dataclass(frozen=True)
class LinkBudget:
    f_lo: float = 94.1e9
    f_hi: float = 100e9
    tx_power: float = 0.1          # W total, spread flat over the band
    tx_diameter: float = 0.2       # m
    rx_diameter: float = 0.5       # m
    aperture_efficiency: float = 1.0
    temperature: float = 220.0     # K
    noise_figure: float = 10.0     # dB
    sub_bands: int = 64
    path_class: PathClass = PathClass.SPACE_AIR
    psd_profile: tuple[float, ...] = ()  # relative weights per equal sub-band; empty = flat

    def __post_init__(self):
        if not self.f_lo < self.f_hi:
            raise ValueError("f_lo must be below f_hi")
        if self.tx_power < 0:
            raise ValueError("transmit power must be non-negative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.sub_bands < 1:
            raise ValueError("need at least one sub-band")
        if self.psd_profile and (min(self.psd_profile) < 0 or sum(self.psd_profile) <= 0):
            raise ValueError("psd profile weights must be non-negative with positive sum")

    @property
    def bandwidth(self) -> float:
        return self.f_hi - self.f_lo

    def tx_gain(self, frequency):
        return aperture_gain(self.tx_diameter, frequency, self.aperture_efficiency)

    def rx_gain(self, frequency):
        return aperture_gain(self.rx_diameter, frequency, self.aperture_efficiency)

    def psd(self, frequency):
        """Transmit PSD (W/Hz); piecewise constant over the profile segments."""
        f = np.asarray(frequency, dtype=float)
        if not self.psd_profile:
            return np.full_like(f, self.tx_power / self.bandwidth)
        w = np.asarray(self.psd_profile, dtype=float)
        w = w / w.sum()
        seg = np.clip(((f - self.f_lo) / self.bandwidth * len(w)).astype(int), 0, len(w) - 1)
        return self.tx_power * w[seg] * len(w) / self.bandwidth

    def with_power_dbm(self, p_dbm: float) -> "LinkBudget":
        from dataclasses import replace
        return replace(self, tx_power=dbm_to_watts(p_dbm))


def spectral_efficiency(lb: LinkBudget, am: AbsorptionModel, pm: PointingModel, distance_m: float, f):
    f = np.asarray(f, dtype=float)
    fspl = (C_LIGHT / (4.0 * math.pi * f * distance_m)) ** 2
    snr = (lb.psd(f) * lb.tx_gain(f) * lb.rx_gain(f) * fspl * pointing_loss(pm, distance_m, f)
           / (absorption(am, f, distance_m / 1000.0, lb.path_class)
              * noise_density(lb.temperature, lb.noise_figure)))
    return np.log2(1.0 + snr)


def capacity(lb: LinkBudget, am: AbsorptionModel, pm: PointingModel, distance_m: float,
             sub_bands: int | None = None) -> float:
    """Shannon capacity (bit/s) integrated over the band by the composite trapezoid rule."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    n = sub_bands or lb.sub_bands
    f = np.linspace(lb.f_lo, lb.f_hi, n + 1)
    y = spectral_efficiency(lb, am, pm, distance_m, f)
    return float(max(0.0, np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(f))))


def per_satellite_rate(total_capacity: float, n_sharing: int) -> float:
    if n_sharing < 1:
        raise ValueError("at least one satellite must share the link")
    return total_capacity / n_sharing


def transmission_latency(payload_bytes: float, rate_bps: float) -> float:
    if rate_bps <= 0:
        raise ValueError("rate must be positive")
    return 8.0 * payload_bytes / rate_bps
