"""Run configuration: JSON model specs, flag overrides and a registry of custom models."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Callable

import numpy as np

from . import intensity
from .errors import ConfigError, ModelError
from .intensity import IntensityModel, TrigSignal

_U64 = 2**64
CUSTOM_MODELS: dict[str, Callable[..., IntensityModel]] = {}


def register_custom(name: str):
    """Decorator adding a factory ``f(theta0, n, **params) -> IntensityModel`` to the registry."""

    def wrap(factory):
        CUSTOM_MODELS[name] = factory
        return factory

    return wrap


def _logcos_derivative(j: int, w: float, theta, x):
    c = np.cos(w * x)
    return c**j * np.exp(theta * c)


def _logcos_majorant(theta):
    return math.exp(abs(theta)) * 1.001


def _constant(value: float, x):
    return np.full(np.shape(x), value)


@register_custom("log-cosine")
def log_cosine(theta0: float, n: float, period: float = 1.0, **kw) -> IntensityModel:
    """S(theta, x) = exp(theta cos(2 pi x / period)); theta-derivatives are cos^j S."""
    w = 2.0 * math.pi / period
    theta_max = theta0 + kw.get("delta_theta_max", 1.0)
    bound = max(abs(theta0), abs(theta_max))
    return intensity.custom(
        theta0, n, [partial(_logcos_derivative, j, w) for j in range(5)], majorant=_logcos_majorant,
        floor=partial(_constant, math.exp(-bound)), envelopes=[partial(_constant, math.exp(bound))] * 4,
        name="log-cosine", periodic_integrands=True, period=period, **kw)


def _signal(spec) -> TrigSignal:
    if spec is None:
        return TrigSignal.cosine()
    if not isinstance(spec, dict):
        raise ConfigError("signal must be an object with offset, cos, sin, period")
    unknown = set(spec) - {"offset", "cos", "sin", "period"}
    if unknown:
        raise ConfigError(f"unknown signal keys {sorted(unknown)}")
    try:
        return TrigSignal(period=float(spec.get("period", 1.0)), offset=float(spec.get("offset", 2.0)),
                          cos_coeffs=tuple(spec.get("cos", (1.0,))), sin_coeffs=tuple(spec.get("sin", ())))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid signal: {exc}") from exc


_MODEL_KEYS = {"family", "theta0", "n", "dark_current", "signal", "delta_theta_max", "name", "params"}


def build_model(spec: dict, n: float | None = None) -> IntensityModel:
    """IntensityModel from a JSON object; ``n`` overrides the window length."""
    if not isinstance(spec, dict):
        raise ConfigError("model must be a JSON object")
    unknown = set(spec) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown model keys {sorted(unknown)}")
    for key in ("family", "theta0"):
        if key not in spec:
            raise ConfigError(f"model spec is missing required key {key!r}")
    family = spec["family"]
    try:
        theta0 = float(spec["theta0"])
        length = float(n if n is not None else spec.get("n", 100.0))
        extra = {}
        if "delta_theta_max" in spec:
            extra["delta_theta_max"] = float(spec["delta_theta_max"])
        if not length > 0:
            raise ConfigError("n must be positive")
        if family == "homogeneous":
            if not theta0 >= 0:
                raise ConfigError("homogeneous theta0 must be nonnegative")
            return intensity.homogeneous(theta0, length, **extra)
        if family in ("amplitude", "phase", "frequency"):
            ctor = getattr(intensity, family)
            return ctor(theta0, length, dark_current=float(spec.get("dark_current", 0.5)),
                        signal=_signal(spec.get("signal")), **extra)
        if family == "exp-sine":
            return intensity.exp_sine(theta0, length, **extra)
        if family == "custom":
            name = spec.get("name")
            if name not in CUSTOM_MODELS:
                raise ConfigError(f"unknown custom model {name!r}; registered: {sorted(CUSTOM_MODELS)}")
            return CUSTOM_MODELS[name](theta0, length, **dict(spec.get("params", {})), **extra)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid model spec: {exc}") from exc
    raise ConfigError(f"unknown family {family!r}")


@dataclass(frozen=True)
class RunConfig:
    model: dict = field(default_factory=lambda: {"family": "homogeneous", "theta0": 1.0, "n": 100.0})
    alpha: float = 0.05
    u: tuple = (1.0,)
    n: tuple = ()
    reps: int = 100_000
    master_seed: int = 1
    quad_tol: float = 1e-10
    output_dir: str = "out"
    threads: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if int(self.reps) < 1:
            raise ConfigError("reps must be at least 1")
        if not 0 <= int(self.master_seed) < _U64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if any(not v > 0 for v in self.n):
            raise ConfigError("every n must be positive")
        if any(not math.isfinite(v) or v < 0 for v in self.u):
            raise ConfigError("every u must be finite and nonnegative")
        if not self.quad_tol > 0:
            raise ConfigError("quad_tol must be positive")
        if int(self.threads) < 1:
            raise ConfigError("threads must be at least 1")

    @property
    def n_list(self) -> tuple:
        return self.n or (float(self.model.get("n", 100.0)),)

    def model_at(self, n: float | None = None) -> IntensityModel:
        return build_model(self.model, n if n is not None else self.n_list[0])

    def to_json(self) -> dict:
        out = asdict(self)
        out["n"] = list(self.n_list)
        return out


_CONFIG_KEYS = {"model", "alpha", "u", "n", "reps", "seed", "master_seed", "quad_tol", "output_dir", "threads",
                "options"}


def _as_tuple(value, name: str) -> tuple:
    if isinstance(value, (int, float)):
        return (float(value),)
    if isinstance(value, (list, tuple)) and all(isinstance(v, (int, float)) for v in value):
        return tuple(float(v) for v in value)
    raise ConfigError(f"{name} must be a number or a list of numbers")


def parse_list(text: str, name: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"--{name} expects comma-separated numbers") from exc


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """Config file (optional) with flag overrides applied on top."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "model" not in raw:
            raise ConfigError("config is missing the model spec")
    kwargs = {}
    if "model" in raw:
        kwargs["model"] = raw["model"]
    for key in ("alpha", "quad_tol"):
        if key in raw:
            kwargs[key] = float(raw[key])
    for key in ("reps", "threads"):
        if key in raw:
            kwargs[key] = int(raw[key])
    seed = raw.get("master_seed", raw.get("seed"))
    if seed is not None:
        kwargs["master_seed"] = int(seed)
    if "u" in raw:
        kwargs["u"] = _as_tuple(raw["u"], "u")
    if "n" in raw:
        kwargs["n"] = _as_tuple(raw["n"], "n")
    if "output_dir" in raw:
        kwargs["output_dir"] = str(raw["output_dir"])
    if "options" in raw:
        kwargs["options"] = dict(raw["options"])
    try:
        cfg = RunConfig(**kwargs)
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    cfg.model_at()  # validate the model before any output is produced
    return cfg
