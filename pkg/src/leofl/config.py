"""Declarative scenario configuration (TOML, ``schema = 1``) and the built-in presets."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .capability import ResourceProfile
from .channel import DEFAULT_ABSORPTION, AbsorptionModel, LinkBudget, PathClass, PointingModel, dbm_to_watts
from .flproxy import DistillConfig, InjectConfig
from .geometry import VisibilityConfig
from .orbital import AssetKind, ConstellationSpec, GroundAsset
from .simkernel import AggregationConstants, LearningConfig, Scenario

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


_DEFAULT = {
    "schema": 1,
    "constellation": {
        "num_planes": 6,
        "total_sats": 50,
        "phasing": 1,
        "inclination_deg": 70.0,
        "plane_altitudes_km": [500.0, 1000.0, 1500.0],
        "in_plane_spacing": "strided",
    },
    "assets": [
        {"name": "gs", "kind": "GS", "lat_deg": 30.0, "lon_deg": -90.0, "alt_km": 0.0},
        {"name": "hap-15n", "kind": "HAP", "lat_deg": 15.0, "lon_deg": -120.0, "alt_km": 20.0},
        {"name": "hap-45n", "kind": "HAP", "lat_deg": 45.0, "lon_deg": -120.0, "alt_km": 20.0},
    ],
    "visibility": {
        "min_elev_hap_deg": 5.0,
        "min_elev_gs_deg": 5.0,
        "coarse_step_s": 1.0,
        "refine_tolerance_s": 1e-3,
        "epoch_step_s": 300.0,
    },
    "link": {
        "f_lo_hz": 94.1e9,
        "f_hi_hz": 100e9,
        "tx_power_dbm": 20.0,
        "tx_diameter_m": 0.2,
        "rx_diameter_m": 0.5,
        "aperture_efficiency": 1.0,
        "temperature_k": 220.0,
        "noise_figure_db": 10.0,
        "sub_bands": 64,
        "n_sharing": 128,
    },
    "absorption": {
        "space_air": [list(p) for p in DEFAULT_ABSORPTION[PathClass.SPACE_AIR]],
        "air_ground": [list(p) for p in DEFAULT_ABSORPTION[PathClass.AIR_GROUND]],
    },
    "pointing": {"error_angle_rad": 1e-6, "beam_waist_m": 0.1, "rx_aperture_radius_m": 0.25, "error_std_rad": 0.0},
    "sweep": {"num_sats": [50, 100, 150, 200], "inclinations_deg": [10.0, 40.0, 70.0]},
    "capacity": {
        "distances_km": [100, 200, 300, 400, 500, 600, 700, 800, 900, 1000, 1100, 1200, 1300, 1400, 1500],
        "powers_dbm": [10.0, 20.0, 30.0],
        "payload_bytes": 11088.0,
    },
    "aggregation": {
        "t_sync_s": 600.0,
        "mu_bal": 1e-3,
        "mu_prox": 0.1,
        "kappa": 1e-3,
        "nu": 1e-4,
        "async_alpha": 0.6,
        "probe_size": 64,
    },
    "training": {
        "num_planes": 6,
        "total_sats": 6,
        "active": [0, 1, 2, 3],
        "budgets": [1.0, 0.75, 0.5, 0.25],
        "horizon_s": 259200.0,
        "round_time_full_s": 1200.0,
        "peak_flops": 1e9,
        "local_epochs": 2,
        "memory_bytes": 1e9,
        "global_model_bytes": 1e6,
        "local_model_bytes": 1e5,
        "idle_after_upload": True,
        "mode": "model",
        "num_train": 2400,
        "num_test": 1000,
        "dim": 32,
        "num_classes": 10,
        "separation": 2.5,
        "iid": False,
        "num_shards": 240,
        "lr_local": 0.05,
        "batch_size": 128,
        "temperature": 3.0,
        "alpha_inj": 0.5,
        "lr_dis": 0.05,
        "lr_inj": 0.05,
        "lr_receiver": 0.05,
        "lr_transmitter": 0.05,
        "distill_epochs": 3,
        "inject_epochs": 1,
    },
}

PRESETS: dict[str, dict] = {
    "default": _DEFAULT,
    # one simulated day; enough for a quick look at the protocol
    "quick": {"training": {"horizon_s": 86164.0}},
    # vector surrogate learners; exercises the protocol without training networks
    "protocol": {"training": {"mode": "surrogate"}},
}


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return _DEFAULT if name == "default" else deep_merge(_DEFAULT, PRESETS[name])


def load_toml(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    if data.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: expected schema = {SCHEMA_VERSION}, got {data.get('schema')!r}")
    return data


@dataclass
class Config:
    data: dict

    @classmethod
    def load(cls, path: str | Path | None = None, preset_name: str = "default") -> "Config":
        base = preset(preset_name)
        return cls(deep_merge(base, load_toml(path)) if path else copy.deepcopy(base))

    def section(self, name: str) -> dict[str, Any]:
        return self.data.get(name, {})

    def constellation_spec(self, inclination_deg: float | None = None, num_sats: int | None = None,
                           section: str = "constellation") -> ConstellationSpec:
        c = self.section(section)
        base = self.section("constellation")
        try:
            return ConstellationSpec(
                num_planes=int(c.get("num_planes", base.get("num_planes"))),
                total_sats=int(num_sats if num_sats is not None else c.get("total_sats", base.get("total_sats"))),
                phasing=int(c.get("phasing", base.get("phasing", 1))),
                inclination=math.radians(inclination_deg if inclination_deg is not None
                                         else c.get("inclination_deg", base.get("inclination_deg"))),
                plane_altitudes=tuple(float(a) for a in c.get("plane_altitudes_km",
                                                             base.get("plane_altitudes_km"))),
                in_plane_spacing=c.get("in_plane_spacing", base.get("in_plane_spacing", "strided")),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid constellation: {exc}") from exc

    def assets(self) -> tuple[GroundAsset, ...]:
        out = []
        for a in self.data.get("assets", []):
            try:
                out.append(GroundAsset(math.radians(a["lat_deg"]), math.radians(a["lon_deg"]),
                                       float(a.get("alt_km", 0.0)), AssetKind(a["kind"]), a.get("name", "")))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"invalid asset {a!r}: {exc}") from exc
        return tuple(out)

    def visibility(self) -> VisibilityConfig:
        v = self.section("visibility")
        return VisibilityConfig(math.radians(v["min_elev_hap_deg"]), math.radians(v["min_elev_gs_deg"]),
                                float(v["coarse_step_s"]), float(v["refine_tolerance_s"]))

    def link(self, path_class: PathClass = PathClass.SPACE_AIR) -> LinkBudget:
        k = self.section("link")
        return LinkBudget(f_lo=float(k["f_lo_hz"]), f_hi=float(k["f_hi_hz"]),
                          tx_power=dbm_to_watts(k["tx_power_dbm"]), tx_diameter=float(k["tx_diameter_m"]),
                          rx_diameter=float(k["rx_diameter_m"]),
                          aperture_efficiency=float(k["aperture_efficiency"]),
                          temperature=float(k["temperature_k"]), noise_figure=float(k["noise_figure_db"]),
                          sub_bands=int(k["sub_bands"]), path_class=path_class)

    def absorption(self) -> AbsorptionModel:
        a = self.section("absorption")
        return AbsorptionModel({
            PathClass.SPACE_AIR: tuple((float(f), float(v)) for f, v in a["space_air"]),
            PathClass.AIR_GROUND: tuple((float(f), float(v)) for f, v in a["air_ground"]),
        })

    def pointing(self) -> PointingModel:
        p = self.section("pointing")
        return PointingModel(float(p["error_angle_rad"]), float(p["beam_waist_m"]),
                             float(p["rx_aperture_radius_m"]), float(p.get("error_std_rad", 0.0)))

    def aggregation(self) -> AggregationConstants:
        g = self.section("aggregation")
        nu = g.get("gamma", g.get("nu", 1e-4))
        return AggregationConstants(t_sync=float(g["t_sync_s"]), mu_bal=float(g["mu_bal"]),
                                    mu_prox=float(g["mu_prox"]), kappa=float(g["kappa"]), nu=float(nu),
                                    async_alpha=float(g["async_alpha"]), probe_size=int(g["probe_size"]))

    def learning(self) -> LearningConfig:
        t = self.section("training")
        return LearningConfig(
            mode=t["mode"], num_train=int(t["num_train"]), num_test=int(t["num_test"]), dim=int(t["dim"]),
            num_classes=int(t["num_classes"]), separation=float(t["separation"]), iid=bool(t["iid"]),
            num_shards=int(t["num_shards"]), lr_local=float(t["lr_local"]), batch_size=int(t["batch_size"]),
            distill_epochs=int(t["distill_epochs"]), inject_epochs=int(t["inject_epochs"]),
            distill=DistillConfig(temperature=float(t["temperature"]), lr_proxy=float(t["lr_dis"]),
                                  lr_transmitter=float(t["lr_transmitter"]), batch_size=int(t["batch_size"])),
            inject=InjectConfig(temperature=float(t["temperature"]), alpha=float(t["alpha_inj"]),
                                lr_local=float(t["lr_inj"]), lr_receiver=float(t["lr_receiver"]),
                                batch_size=int(t["batch_size"])),
        )

    def profiles(self) -> tuple[ResourceProfile, ...]:
        """Compute rate scales with the budget tier, so weaker satellites finish rounds later."""
        t = self.section("training")
        peak = float(t["peak_flops"])
        epochs = int(t["local_epochs"])
        per_batch = float(t["round_time_full_s"]) * peak / epochs
        size = int(t["num_train"]) // max(1, len(t["budgets"]))
        return tuple(ResourceProfile.constant(
            peak * b, local_epochs=epochs, flops_per_batch=per_batch, memory=float(t["memory_bytes"]),
            global_model_size=float(t["global_model_bytes"]), local_model_size=float(t["local_model_bytes"]),
            proxy_model_size=float(self.section("capacity")["payload_bytes"]), dataset_size=size)
            for b in t["budgets"])

    def scenario(self, seed: int, horizon: float | None = None) -> Scenario:
        t = self.section("training")
        try:
            return Scenario(
                constellation=self.constellation_spec(section="training"),
                assets=self.assets(),
                profiles=self.profiles(),
                budgets=tuple(float(b) for b in t["budgets"]),
                horizon=float(t["horizon_s"] if horizon is None else horizon),
                seed=int(seed),
                active=tuple(int(i) for i in t.get("active", ())),
                visibility=self.visibility(),
                link=self.link(),
                absorption=self.absorption(),
                pointing=self.pointing(),
                n_sharing=int(self.section("link")["n_sharing"]),
                aggregation=self.aggregation(),
                learning=self.learning(),
                idle_after_upload=bool(t["idle_after_upload"]),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"incomplete training configuration: {exc}") from exc
