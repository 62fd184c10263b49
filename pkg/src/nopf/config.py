"""Run-configuration files: INI sections with strict keys and full defaults.

Every tunable of the pipeline lives here so a single file reproduces a run.
Unknown sections or keys are rejected (typos must not silently fall back to
defaults), parse -> serialize -> parse is a fixed point, and the effective
configuration is echoed into the metadata of every produced artifact.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .simulator import SimConfig
from .surrogate import SurrogateArchitecture
from .training import SamplingConfig, TrainConfig

_F, _I, _B, _S, _FL, _OF = "float", "int", "bool", "str", "float_list", "opt_float"

# section -> key -> (type, default)
SCHEMA = {
    "plant": {
        "name": (_S, "benchmark"),
        "k1": (_F, 300.0),
        "k2": (_F, 300.0),
        "ka": (_F, 0.04),
        "kb": (_F, 0.004),
        "x_star": (_FL, (0.0939, 5.2525)),
        "a": (_F, -1.0),
    },
    "simulation": {
        "true_delay": (_F, 1.0),
        "d_hat0": (_F, 2.0),
        "d_min": (_F, 0.5),
        "d_max": (_F, 3.0),
        "gamma": (_F, 1000.0),
        "b": (_F, 1.0),
        "dt": (_F, 1e-3),
        "t_final": (_F, 40.0),
        "dx": (_F, 0.005),
        "backend": (_S, "numerical"),
        "open_loop": (_B, False),
        "x0": (_S, "equilibrium"),  # "equilibrium" or comma-separated floats
        "seed": (_I, 0),
        "initial_input": (_F, 0.0),
        "integrator": (_S, "euler"),
        "predictor_scheme": (_S, "euler"),
        "weights": (_S, ""),
    },
    "surrogate": {
        "grid_size": (_I, 41),
        "branch_layers": (_FL, (128, 128, 128)),
        "trunk_layers": (_FL, (128, 128)),
        "latent_dim": (_I, 48),
        "activation": (_S, "tanh"),
    },
    "training": {
        "learning_rate": (_F, 1e-3),
        "batch_size": (_I, 256),
        "epochs": (_I, 1500),
        "adam_beta1": (_F, 0.9),
        "adam_beta2": (_F, 0.999),
        "adam_eps": (_F, 1e-8),
        "seed": (_I, 0),
        "patience": (_I, 100),
        "validation_fraction": (_F, 0.1),
        "target_epsilon": (_OF, None),
    },
    "dataset": {
        "trajectories": (_I, 500),
        "samples_per_trajectory": (_I, 24),
        "t_final": (_F, 7.0),
        "dt": (_F, 1e-3),
        "dx": (_F, 0.02),
        "x0_low": (_FL, (0.0, 4.5)),
        "x0_high": (_FL, (0.15, 40.0)),
        "x0_log": (_S, "false, true"),
        "delay_min": (_F, 0.6),
        "delay_max": (_F, 2.5),
        "domain_x_low": (_FL, (-0.15, 3.5)),
        "domain_x_high": (_FL, (0.22, 47.0)),
        "workers": (_I, 0),
        "max_discard_fraction": (_F, 0.1),
        "seed": (_I, 0),
    },
}


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


def _fmt(kind, value):
    if value is None:
        return ""
    if kind == _FL:
        return ", ".join(f"{float(v):.17g}" for v in value)
    if kind == _B:
        return "true" if value else "false"
    if kind == _F or kind == _OF:
        return f"{float(value):.17g}"
    return str(value)


def _parse_value(kind, raw, where):
    raw = raw.strip()
    try:
        if kind == _F:
            return float(raw)
        if kind == _I:
            return int(raw)
        if kind == _B:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == _FL:
            return tuple(float(part) for part in raw.split(",") if part.strip())
        if kind == _OF:
            return None if raw == "" else float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class RunConfig:
    """Typed view over the full configuration tree."""

    values: dict = field(default_factory=dict)  # section -> key -> value

    def __post_init__(self):
        for section, keys in SCHEMA.items():
            self.values.setdefault(section, {})
            for key, (kind, default) in keys.items():
                self.values[section].setdefault(key, default)

    def get(self, section, key):
        return self.values[section][key]

    def set(self, section, key, value):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown configuration key [{section}] {key}")
        self.values[section][key] = value

    # -- views ------------------------------------------------------------

    def plant_selection(self) -> tuple[str, dict]:
        p = self.values["plant"]
        name = p["name"]
        if name == "benchmark":
            overrides = {"k1": p["k1"], "k2": p["k2"], "ka": p["ka"], "kb": p["kb"],
                         "x_star": list(p["x_star"])}
        elif name == "linear-test":
            overrides = {"a": p["a"]}
        else:
            overrides = {}
        return name, overrides

    def sim_config(self, **cli_overrides) -> SimConfig:
        s = dict(self.values["simulation"])
        s.update({k: v for k, v in cli_overrides.items() if v is not None})
        name, overrides = self.plant_selection()
        x0 = s.pop("x0")
        if isinstance(x0, str):
            x0 = None if x0.strip() in ("", "equilibrium") else tuple(
                float(v) for v in x0.split(","))
        weights = s.pop("weights") or None
        return SimConfig(plant=name, plant_overrides=overrides,
                         weights_path=weights, x0=x0, **s)

    def architecture(self, state_dim: int) -> SurrogateArchitecture:
        s = self.values["surrogate"]
        return SurrogateArchitecture(
            state_dim=state_dim,
            input_grid_size=int(s["grid_size"]),
            branch_layers=tuple(int(w) for w in s["branch_layers"]),
            trunk_layers=tuple(int(w) for w in s["trunk_layers"]),
            latent_dim=int(s["latent_dim"]),
            activation=s["activation"])

    def train_config(self, **cli_overrides) -> TrainConfig:
        s = dict(self.values["training"])
        s.update({k: v for k, v in cli_overrides.items() if v is not None})
        return TrainConfig(**s)

    def sampling_config(self, **cli_overrides) -> SamplingConfig:
        d = dict(self.values["dataset"])
        d.update({k: v for k, v in cli_overrides.items() if v is not None})
        seed = d.pop("seed")
        sim = self.values["simulation"]
        return SamplingConfig(
            trajectories=d["trajectories"],
            samples_per_trajectory=d["samples_per_trajectory"],
            t_final=d["t_final"], dt=d["dt"], dx=d["dx"],
            x0_low=tuple(d["x0_low"]), x0_high=tuple(d["x0_high"]),
            x0_log=tuple(part.strip().lower() in ("true", "1", "yes")
                         for part in d["x0_log"].split(",")),
            delay_min=d["delay_min"], delay_max=d["delay_max"],
            d_min=sim["d_min"], d_max=sim["d_max"],
            gamma=sim["gamma"], b=sim["b"],
            surrogate_grid_size=int(self.values["surrogate"]["grid_size"]),
            domain_x_low=tuple(d["domain_x_low"]) or None,
            domain_x_high=tuple(d["domain_x_high"]) or None,
            workers=d["workers"],
            max_discard_fraction=d["max_discard_fraction"]), seed

    def dataset_seed(self) -> int:
        return int(self.values["dataset"]["seed"])

    # -- (de)serialization -------------------------------------------------

    def to_string(self) -> str:
        out = io.StringIO()
        for section, keys in SCHEMA.items():
            out.write(f"[{section}]\n")
            for key, (kind, _default) in keys.items():
                out.write(f"{key} = {_fmt(kind, self.values[section][key])}\n")
            out.write("\n")
        return out.getvalue()

    def flat_dict(self) -> dict:
        """Effective configuration as dotted keys, for artifact metadata."""
        flat = {}
        for section, keys in SCHEMA.items():
            for key, (kind, _default) in keys.items():
                flat[f"{section}.{key}"] = _fmt(kind, self.values[section][key])
        return flat

    @staticmethod
    def from_string(text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse configuration: {exc}") from exc
        cfg = RunConfig()
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown configuration section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown configuration key [{section}] {key}")
                kind = SCHEMA[section][key][0]
                cfg.values[section][key] = _parse_value(kind, raw,
                                                        f"[{section}] {key}")
        return cfg


def load_config(path=None) -> RunConfig:
    """Read a configuration file, or return pure defaults when path is None."""
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return RunConfig.from_string(fh.read())


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(cfg.to_string())
