"""Run configuration: every tunable as a flat key=value setting.

Unknown keys are a hard error, both in files and over the wire; silent
acceptance of a misspelled key cost us a day once.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields

PROPERTY_KINDS = ("residential", "commercial", "industrial", "park")

# Per-use attribute weights; each row sums to 1.
DEFAULT_WEIGHTS = {
    "residential": {
        "hill": 0.3,
        "water_proximity": 0.3,
        "residential_density": 0.4,
    },
    "commercial": {
        "flatness": 0.2,
        "water_proximity": 0.15,
        "residential_density": 0.15,
        "market": 0.4,
        "commercial_distance": 0.1,
    },
    "industrial": {
        "flatness": 0.5,
        "water_proximity": 0.3,
        "industrial_density": 0.1,
        "primary_proximity": 0.1,
    },
    "park": {
        "relief": 0.1,
        "flood_safety": 0.1,
        "water_proximity": 0.1,
        "residential_density": 0.1,
        "park_distance": 0.4,
        "neglect": 0.2,
    },
}

ATTRIBUTE_KEYS = (
    "hill", "flatness", "relief", "flood_safety", "water_proximity",
    "residential_density", "industrial_density", "park_distance",
    "primary_proximity", "market", "commercial_distance", "neglect",
)


class ConfigError(ValueError):
    pass


def _per_use(res, com, ind, park):
    return {"residential": res, "commercial": com, "industrial": ind, "park": park}


@dataclass
class SimConfig:
    seed: int = 0
    ticks: int = 5000  # hard budget; quiescence can end a run sooner
    quiescence_ticks: int = 200
    snapshot_every: int = 25  # 0 disables periodic snapshots

    # agent roster for a 200x200 map; scaled linearly with area when enabled
    agents_residential: int = 4
    agents_commercial: int = 2
    agents_industrial: int = 2
    agents_park: int = 1
    agents_extender: int = 3
    agents_connector: int = 2
    agents_primary: int = 1
    scale_agents_with_area: bool = True

    profit_margin_pct: float = 10.0
    recent_ticks: int = 20  # commit memory window used while prospecting
    relocate_top_share: float = 0.2
    site_drop_share: float = 0.1
    honey_decay: float = 0.0
    value_floor: float = 0.01
    park_compat_as_printed: bool = True

    # desired share of city population / developed cover per use
    pop_target: dict = field(default_factory=lambda: _per_use(0.40, 0.05, 0.10, 0.20))
    cover_target: dict = field(default_factory=lambda: _per_use(0.40, 0.05, 0.10, 0.20))

    size_min: dict = field(default_factory=lambda: _per_use(2, 4, 8, 20))
    size_max: dict = field(default_factory=lambda: _per_use(6, 12, 24, 200))
    density_min: dict = field(default_factory=lambda: _per_use(1, 4, 1, 0))
    density_max: dict = field(default_factory=lambda: _per_use(6, 20, 4, 0))

    block_length: int = 12  # longest parcel march away from a road, in patches

    park_min_city_population: int = 500
    park_per_resident: float = 0.1
    park_per_developed: float = 0.15
    park_area_norm: float = 0.25

    road_reach_max: int = 10  # farthest an extender chases underserved ground
    road_need_dist: int = 3  # roadless gap that justifies a new tertiary road
    road_stall_ticks: int = 30
    road_density_limit: int = 20  # max road patches among the 81 in circle(5)
    connector_radius: int = 20
    connector_ratio: float = 1.6  # detour factor that justifies a shortcut
    primary_min_network_dist: int = 100
    primary_water_heading: bool = True  # keep the water-crossing penalty term

    grid_spacing_x: float = 8.0
    grid_spacing_y: float = 8.0
    grid_theta: float = 0.0  # radians
    grid_slack_x: float = 8.0
    grid_slack_y: float = 8.0

    weights: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_WEIGHTS))

    def copy(self) -> "SimConfig":
        return copy.deepcopy(self)

    # ------------------------------------------------------------- flat key view

    def items(self):
        """All settings as sorted (key, value) pairs of plain scalars."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "weights":
                for use in PROPERTY_KINDS:
                    for attr in ATTRIBUTE_KEYS:
                        out.append((f"weight_{use}_{attr}", v[use].get(attr, 0.0)))
            elif isinstance(v, dict):
                for use in PROPERTY_KINDS:
                    out.append((f"{f.name}_{use}", v[use]))
            else:
                out.append((f.name, v))
        return sorted(out)

    def set_key(self, key: str, value):
        """Set one flat key, coercing the value to the field's type."""
        if key.startswith("weight_"):
            rest = key[len("weight_"):]
            for use in PROPERTY_KINDS:
                if rest.startswith(use + "_"):
                    attr = rest[len(use) + 1:]
                    if attr not in ATTRIBUTE_KEYS:
                        raise ConfigError(f"unknown attribute in {key!r}")
                    self.weights[use][attr] = _coerce(value, float, key)
                    return
            raise ConfigError(f"unknown use in {key!r}")
        for f in fields(self):
            if f.name == key:
                v = getattr(self, f.name)
                if isinstance(v, dict):
                    raise ConfigError(f"{key!r} needs a per-use suffix")
                self._assign(f.name, value)
                return
            if isinstance(getattr(self, f.name), dict) and f.name != "weights":
                for use in PROPERTY_KINDS:
                    if key == f"{f.name}_{use}":
                        cur = getattr(self, f.name)[use]
                        cur_t = float if isinstance(cur, float) else int
                        getattr(self, f.name)[use] = _coerce(value, cur_t, key)
                        return
        raise ConfigError(f"unknown setting {key!r}")

    def _assign(self, name, value):
        cur = getattr(self, name)
        if isinstance(cur, bool):
            setattr(self, name, _coerce(value, bool, name))
        elif isinstance(cur, int):
            setattr(self, name, _coerce(value, int, name))
        elif isinstance(cur, float):
            setattr(self, name, _coerce(value, float, name))
        else:
            raise ConfigError(f"cannot assign setting {name!r}")


def _coerce(value, t, key):
    if t is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes", "on"):
                return True
            if value.lower() in ("false", "0", "no", "off"):
                return False
        raise ConfigError(f"{key!r} wants a boolean, got {value!r}")
    try:
        return t(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key!r} wants {t.__name__}, got {value!r}") from None


def format_config(cfg: SimConfig) -> str:
    lines = ["# sprawl config v1"]
    for k, v in cfg.items():
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, base: SimConfig | None = None) -> SimConfig:
    """Parse flat key=value lines; # comments and blank lines are skipped."""
    cfg = base.copy() if base is not None else SimConfig()
    for ln, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        cfg.set_key(key.strip(), value.strip())
    return cfg
