"""Strict JSON run configuration with field-path error messages."""

from __future__ import annotations

import copy
import difflib
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import decision, network, quantum, spiking
from .errors import ConfigFileNotFound, ConfigSyntaxError, ConfigValidationError
from .nonmarkov import PAIR_SETS

TWO_PI = 2.0 * math.pi


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_default=True)


class MemLawConfig(_Strict):
    r_on: float = Field(0.2, gt=0)
    r_off: float = Field(1.75, gt=0)
    v_set: float = 0.8
    v_reset: float = -0.32
    tau_switch: float = Field(2.8, gt=0)

    @model_validator(mode="after")
    def _ordering(self):
        if not self.r_off > self.r_on:
            raise ValueError("r_off must be > r_on")
        if not self.v_set > self.v_reset:
            raise ValueError("v_set must be > v_reset")
        return self

    def build(self) -> spiking.MemristanceLaw:
        return spiking.MemristanceLaw(self.r_on, self.r_off, self.v_set, self.v_reset, self.tau_switch)


class CircuitInitial(_Strict):
    v1: float = 0.0
    v2: float = 0.0
    dv1: float = 0.0
    dv2: float = 0.63
    r_mem: Optional[list[float]] = Field(None, min_length=4, max_length=4)


class CircuitConfig(_Strict):
    c1: float = Field(1.15, gt=0)
    c2: float = Field(0.45, gt=0)
    c5: float = Field(1.15, gt=0)
    c6: float = Field(0.45, gt=0)
    r3: float = Field(0.23, gt=0)
    r4: float = Field(23.0, gt=0)
    r5: float = Field(0.23, gt=0)
    r6: float = Field(23.0, gt=0)
    k1_coupled: float = Field(56.0, allow_inf_nan=False)
    k2_coupled: float = Field(-2.1, allow_inf_nan=False)
    mem_laws: list[MemLawConfig] = Field(default_factory=lambda: [MemLawConfig() for _ in range(4)],
                                         min_length=4, max_length=4)
    initial: CircuitInitial = Field(default_factory=CircuitInitial)
    dt: float = Field(0.01, gt=0)
    t_end: float = Field(60.0, gt=0)
    threshold: float = 0.21

    @model_validator(mode="after")
    def _span(self):
        if not self.t_end >= self.dt:
            raise ValueError("t_end must be >= dt")
        r0 = self.initial.r_mem
        if r0 is not None:
            for j, (r, law) in enumerate(zip(r0, self.mem_laws)):
                if not law.r_on <= r <= law.r_off:
                    raise ValueError(f"initial.r_mem[{j}] must lie in [r_on, r_off]")
        return self

    def params(self) -> spiking.NeuronCircuitParams:
        return spiking.NeuronCircuitParams(
            self.c1, self.c2, self.c5, self.c6, self.r3, self.r4, self.r5, self.r6,
            self.k1_coupled, self.k2_coupled, tuple(m.build() for m in self.mem_laws))

    def initial_state(self) -> spiking.NeuronNetworkState:
        i = self.initial
        r = tuple(i.r_mem) if i.r_mem is not None else tuple(m.r_off for m in self.mem_laws)
        return spiking.NeuronNetworkState(0.0, i.v1, i.v2, i.dv1, i.dv2, r)


class QuantumConfig(_Strict):
    n_max: int = Field(6, ge=1)
    g: float = Field(1.0, ge=0)
    drive_amp: float = Field(0.5, ge=0)
    tau_e: float = Field(10.0, gt=0)
    t1: Optional[float] = Field(7.4, gt=0)
    kappa: float = Field(0.0, ge=0)
    dephasing: float = Field(0.0, ge=0)
    dt: float = Field(0.01, gt=0)
    t_end: float = Field(60.0, gt=0)
    initial_bloch: list[float] = Field(default_factory=lambda: [0.0, 0.0, -1.0],
                                       min_length=3, max_length=3)

    @field_validator("initial_bloch")
    @classmethod
    def _in_ball(cls, v):
        if math.fsum(x * x for x in v) > 1.0 + 1e-12:
            raise ValueError("initial_bloch must have norm <= 1")
        return v

    def fock(self) -> quantum.FockConfig:
        return quantum.FockConfig(self.n_max)

    def channels(self) -> list[quantum.CollapseChannel]:
        return quantum.default_channels(self.fock(), self.t1, self.kappa, self.dephasing)


class TTMConfig(_Strict):
    dt_map: float = Field(0.5, gt=0)
    K: int = Field(10, ge=1)
    steps: int = Field(10, ge=0)


class BandConfig(_Strict):
    q_low: float
    q_high: float
    level_min: float = Field(gt=0)
    corr_min: float = Field(gt=0, lt=1)
    awareness: Literal["Regular", "EnhancedAwareness", "Elevated"]
    action: str

    @model_validator(mode="after")
    def _range(self):
        if not self.q_low < self.q_high:
            raise ValueError("q_low must be < q_high")
        return self


def _default_bands() -> list[BandConfig]:
    return [BandConfig(q_low=b.q_low, q_high=b.q_high, level_min=b.level_min, corr_min=b.corr_min,
                       awareness=b.cls.value, action=b.action) for b in decision.DEFAULT_BANDS]


class ThresholdsConfig(_Strict):
    bands: list[BandConfig] = Field(default_factory=_default_bands, min_length=1)

    @model_validator(mode="after")
    def _disjoint(self):
        bands = sorted(self.bands, key=lambda b: b.q_low)
        for a, b in zip(bands, bands[1:]):
            if b.q_low < a.q_high:
                raise ValueError("band q ranges must be pairwise disjoint")
        return self

    def build(self) -> decision.ClassificationThresholds:
        return decision.ClassificationThresholds(tuple(
            decision.Band(b.q_low, b.q_high, b.level_min, b.corr_min,
                          decision.AwarenessClass(b.awareness), b.action) for b in self.bands))


class MappingConfig(_Strict):
    mode: Literal["amplitude", "index", "constant"] = "amplitude"
    theta_max: float = Field(math.pi, gt=0, lt=TWO_PI)
    q_mode: Literal["mean", "neuron1", "total"] = "mean"
    source: Literal["neuron1", "neuron2", "both"] = "neuron1"


class NetworkConfig(_Strict):
    enabled: bool = True
    j: float = Field(0.5, ge=0)
    drive_amps: list[float] = Field(default_factory=lambda: [0.5, 0.5], min_length=2, max_length=2)
    initial: Literal["gg", "ge", "eg", "ee"] = "eg"
    t1: Optional[float] = Field(7.4, gt=0)
    dephasing: float = Field(0.0, ge=0)
    depolarizing: float = Field(0.0, ge=0)
    cavity: bool = False
    cavity_n_max: int = Field(1, ge=1)

    @field_validator("drive_amps")
    @classmethod
    def _nonneg(cls, v):
        if any(not a >= 0 for a in v):
            raise ValueError("drive_amps must be >= 0")
        return v


class CorrelationConfig(_Strict):
    tau_max: float = Field(0.5, gt=0)
    n_tau: int = Field(11, ge=2)


class MixtureConfig(_Strict):
    weights: list[float] = Field(default_factory=lambda: [1.0 / 3.0, 1.0 / 2.0, 1.0 / 6.0])

    @field_validator("weights")
    @classmethod
    def _valid(cls, v):
        try:
            network.MixtureWeights(tuple(v))
        except ConfigValidationError as exc:
            raise ValueError(str(exc).removeprefix("mixture.weights ")) from None
        return v

    def build(self) -> network.MixtureWeights:
        return network.MixtureWeights(tuple(self.weights))


class FeedbackConfig(_Strict):
    windows: int = Field(1, ge=1)
    policy: Literal["class_remap", "off"] = "class_remap"
    enhanced_factor: float = Field(1.25, gt=0)


class IOConfig(_Strict):
    out_dir: str = "runs"
    record_stride: int = Field(10, ge=1)


class RunConfig(_Strict):
    circuit: CircuitConfig = Field(default_factory=CircuitConfig)
    quantum: QuantumConfig = Field(default_factory=QuantumConfig)
    ttm: TTMConfig = Field(default_factory=TTMConfig)
    blp_pairs: str = "default6"
    thresholds: ThresholdsConfig = Field(default_factory=ThresholdsConfig)
    mapping: MappingConfig = Field(default_factory=MappingConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    correlation: CorrelationConfig = Field(default_factory=CorrelationConfig)
    mixture: MixtureConfig = Field(default_factory=MixtureConfig)
    feedback: FeedbackConfig = Field(default_factory=FeedbackConfig)
    io: IOConfig = Field(default_factory=IOConfig)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    scenarios: dict[str, dict[str, Any]] = Field(default_factory=dict)

    @field_validator("blp_pairs")
    @classmethod
    def _known_pairs(cls, v):
        if v not in PAIR_SETS:
            raise ValueError(f"must be one of {sorted(PAIR_SETS)}")
        return v

    @model_validator(mode="after")
    def _grids(self):
        q = self.quantum
        ratio = self.ttm.dt_map / q.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ValueError("ttm.dt_map must be an integer multiple of quantum.dt")
        return self

    def effective(self) -> dict:
        """JSON-ready dump without scenario overrides."""
        d = self.model_dump(mode="json")
        d["scenarios"] = {}
        return d

    def digest(self) -> str:
        blob = json.dumps(self.effective(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# -- error formatting ------------------------------------------------------

_OPS = {"greater_than": (">", "gt"), "greater_than_equal": (">=", "ge"),
        "less_than": ("<", "lt"), "less_than_equal": ("<=", "le")}


def _dotted(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out


def _model_at(loc) -> type[BaseModel] | None:
    model: Any = RunConfig
    for part in loc:
        if isinstance(part, int):
            continue
        if not (isinstance(model, type) and issubclass(model, BaseModel)):
            return None
        f = model.model_fields.get(part)
        if f is None:
            return None
        model = _unwrap(f.annotation)
    return model if isinstance(model, type) and issubclass(model, BaseModel) else None


def _unwrap(tp):
    args = getattr(tp, "__args__", None)
    if args:
        for a in args:
            inner = _unwrap(a)
            if isinstance(inner, type) and issubclass(inner, BaseModel):
                return inner
    return tp


def _message(err: dict, prefix: str) -> tuple[str, str]:
    loc = tuple(err["loc"])
    path = prefix + _dotted(loc)
    kind = err["type"]
    if kind == "extra_forbidden":
        key = str(loc[-1])
        parent = _model_at(loc[:-1])
        where = _dotted(loc[:-1]) or "top level"
        msg = f"unknown key {key!r} in {prefix + where if loc[:-1] else where}"
        if parent is not None:
            near = difflib.get_close_matches(key, list(parent.model_fields), n=1, cutoff=0.5)
            if near:
                msg += f"; did you mean {near[0]!r}?"
        return msg, path
    if kind in _OPS:
        sym, k = _OPS[kind]
        bound = err["ctx"][k]
        if isinstance(bound, float) and bound.is_integer():
            bound = int(bound)
        return f"{path} must be {sym} {bound}", path
    if kind == "missing":
        return f"{path} is required", path
    text = err["msg"].removeprefix("Value error, ")
    return (f"{path} {text}" if path else text), path


def _raise_validation(exc: ValidationError, prefix: str = ""):
    msgs = [_message(e, prefix) for e in exc.errors()]
    raise ConfigValidationError("; ".join(m for m, _ in msgs), msgs[0][1]) from None


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(data: dict, prefix: str = "") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigValidationError("configuration must be a JSON object", prefix.rstrip(".") or None)
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        _raise_validation(exc, prefix)
    for name, override in cfg.scenarios.items():
        if "scenarios" in override:
            raise ConfigValidationError(f"scenarios.{name} cannot nest scenarios", f"scenarios.{name}")
        scenario_config(cfg, name, _raw=data)
    return cfg


def scenario_config(cfg: RunConfig, name: str, _raw: dict | None = None) -> RunConfig:
    """Base config with scenario ``name`` deep-merged over it."""
    if name not in cfg.scenarios:
        raise ConfigValidationError(
            f"unknown scenario {name!r}; available: {sorted(cfg.scenarios) or 'none'}", "scenarios")
    base = dict(_raw) if _raw is not None else cfg.model_dump(mode="json")
    base.pop("scenarios", None)
    merged = deep_merge(base, cfg.scenarios[name])
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        _raise_validation(exc, f"scenarios.{name}.")


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigFileNotFound(f"config file not found: {path}", str(path)) from None
    except OSError as exc:
        raise ConfigFileNotFound(f"cannot read config file {path}: {exc}", str(path)) from None
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", str(path)) from None
    except ValueError as exc:
        raise ConfigSyntaxError(f"{path}: {exc}", str(path)) from None
    return validate_config(data)


def _reject_constant(name: str):
    raise ValueError(f"non-standard JSON constant {name}")


def reference_config_path() -> Path:
    return Path(__file__).with_name("configs") / "reference.json"
