"""Pipeline configuration: defaults, file loading, overrides and hashing."""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .artifacts import sha256_text
from .curvature import CurvatureKind
from .errors import ConfigError
from .rca import RcaParams
from .ricci_flow import FlowConfig

INPUT_KEYS = ("prices", "sentiment", "macro", "knowledge", "embeddings", "comention")


@dataclass(frozen=True)
class ShockConfig:
    multiplier: float = 3.0
    sentiment_delta: float = -0.5
    n_targets: int = 1
    targets: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(sorted(str(t) for t in self.targets)))
        if not self.multiplier > 1.0:
            raise ConfigError("shock multiplier must be > 1")
        if self.sentiment_delta > 0:
            raise ConfigError("shock sentiment_delta must be <= 0")
        if self.n_targets < 1:
            raise ConfigError("shock n_targets must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    # inputs, paths relative to ``base_dir``
    prices: str | None = None
    sentiment: str | None = None
    macro: str | None = None
    knowledge: str | None = None
    embeddings: str | None = None
    comention: str | None = None
    universe: tuple[str, ...] | None = None
    # dates
    start: dt.date | None = None
    end: dt.date | None = None
    train_end: dt.date | None = None
    # market data
    window: int = 252
    corr_window: int = 30
    vol_window: int = 30
    ffill_limit: int = 5
    # graph
    top_k: int = 10
    weight_floor: float | None = None
    stress_gamma: float = 0.5
    # curvature and flow
    curvature: str = "ollivier"
    forman_variant: str = "1d"
    p_idle: float = 0.5
    flow_iters: int = 50
    eta: float = 0.1
    renormalize: bool = True
    frozen_curvature: bool = False
    shift_source: str = "flow"
    cross_day_lag: int = 5
    # scoring
    horizon: int = 5
    alpha: float = 0.7
    score_form: str = "alpha"
    lam: float = 1.0
    K: int = 10
    # rca
    theta: float = -0.05
    h_max: int = 6
    epsilon: float = 0.01
    perturbed: tuple[str, ...] = ()
    # evaluation harness
    trials: int = 20
    seed: int = 0
    eval_dates: tuple[dt.date, ...] | None = None
    shock: ShockConfig = field(default_factory=ShockConfig)
    control: bool = False

    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def __post_init__(self):
        try:
            CurvatureKind(self.curvature)
        except ValueError:
            raise ConfigError(f"curvature must be one of {[k.value for k in CurvatureKind]}") from None
        checks = [
            (self.window >= 1, "window must be >= 1"),
            (self.corr_window >= 2, "corr_window must be >= 2"),
            (self.vol_window >= 2, "vol_window must be >= 2"),
            (self.ffill_limit >= 0, "ffill_limit must be >= 0"),
            (self.top_k >= 1, "top_k must be >= 1"),
            (self.stress_gamma >= 0, "stress_gamma must be >= 0"),
            (self.forman_variant in ("1d", "augmented"), "forman_variant must be 1d or augmented"),
            (0.0 <= self.p_idle < 1.0, "p_idle must lie in [0, 1)"),
            (self.flow_iters >= 0, "flow_iters must be >= 0"),
            (self.eta > 0, "eta must be > 0"),
            (self.shift_source in ("flow", "cross_day"), "shift_source must be flow or cross_day"),
            (self.cross_day_lag >= 0, "cross_day_lag must be >= 0"),
            (self.horizon >= 1, "horizon must be >= 1"),
            (0.0 <= self.alpha <= 1.0, "alpha must lie in [0, 1]"),
            (self.score_form in ("alpha", "lambda"), "score_form must be alpha or lambda"),
            (self.lam > 0, "lam must be > 0"),
            (self.K >= 1, "K must be >= 1"),
            (self.h_max >= 1, "h_max must be >= 1"),
            (self.epsilon > 0, "epsilon must be > 0"),
            (self.trials >= 1, "trials must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        if self.shift_source == "cross_day" and self.cross_day_lag < 1:
            raise ConfigError("cross_day shift needs cross_day_lag >= 1")

    @property
    def flow(self) -> FlowConfig:
        return FlowConfig(eta=self.eta, iterations=self.flow_iters, renormalize=self.renormalize,
                          kind=CurvatureKind(self.curvature), p_idle=self.p_idle,
                          frozen_curvature=self.frozen_curvature, forman_variant=self.forman_variant)

    @property
    def rca(self) -> RcaParams:
        return RcaParams(theta=self.theta, h_max=self.h_max, epsilon=self.epsilon)

    @property
    def warmup(self) -> int:
        """Index of the first usable trading day.

        Volatility exists from day ``vol_window``; correlation and momentum then
        need ``corr_window`` / ``horizon`` consecutive feature days on top.
        """
        return max(self.window, self.vol_window + max(self.corr_window, self.horizon) - 1)

    def input_path(self, key: str) -> Path | None:
        value = getattr(self, key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "base_dir":
                continue
            out[f.name] = _plain(getattr(self, f.name))
        return out

    def hash(self) -> str:
        return sha256_text(json.dumps(self.to_dict(), sort_keys=True))[:16]

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def _plain(value):
    if isinstance(value, (dt.date,)):
        return value.isoformat()
    if isinstance(value, ShockConfig):
        return {k: _plain(v) for k, v in dataclasses.asdict(value).items()}
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    return value


def _to_date(key: str, value) -> dt.date:
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise ConfigError(f"{key}: bad date {value!r}") from None


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(PipelineConfig)}
_DATE_KEYS = {"start", "end", "train_end"}
_INT_KEYS = {"window", "corr_window", "vol_window", "ffill_limit", "top_k", "flow_iters", "cross_day_lag",
             "horizon", "K", "h_max", "trials", "seed"}
_FLOAT_KEYS = {"weight_floor", "stress_gamma", "p_idle", "eta", "alpha", "lam", "theta", "epsilon"}
_BOOL_KEYS = {"renormalize", "frozen_curvature", "control"}
_LIST_KEYS = {"universe", "perturbed"}


def coerce(key: str, value: Any):
    """Convert a raw config value (YAML or CLI string) to the field's type."""
    if key not in _FIELD_TYPES or key == "base_dir":
        raise ConfigError(f"unknown config key {key!r}")
    if value is None:
        return None
    try:
        if key in _DATE_KEYS:
            return _to_date(key, value)
        if key in _INT_KEYS:
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            if isinstance(value, str):
                low = value.strip().lower()
                if low in ("1", "true", "yes", "on"):
                    return True
                if low in ("0", "false", "no", "off"):
                    return False
                raise ValueError
            return bool(value)
        if key in _LIST_KEYS:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return tuple(str(v).strip() for v in value)
        if key == "eval_dates":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return tuple(_to_date(key, v) for v in value)
        if key == "shock":
            if isinstance(value, ShockConfig):
                return value
            if not isinstance(value, Mapping):
                raise ValueError
            unknown = set(value) - {"multiplier", "sentiment_delta", "n_targets", "targets"}
            if unknown:
                raise ConfigError(f"unknown shock keys {sorted(unknown)}")
            return ShockConfig(**value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: invalid value {value!r}") from None


def config_from_mapping(data: Mapping[str, Any], base_dir: Path | str = ".") -> PipelineConfig:
    kwargs = {k: coerce(k, v) for k, v in data.items()}
    try:
        return PipelineConfig(**kwargs, base_dir=Path(base_dir))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """Defaults, then the YAML/JSON config file, then ``overrides`` (CLI flags)."""
    data: dict[str, Any] = {}
    base = Path(".")
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        data.update(loaded)
        base = path.parent
    if overrides:
        for k, v in overrides.items():
            if k == "shock" and isinstance(v, Mapping) and isinstance(data.get("shock"), Mapping):
                data["shock"] = {**data["shock"], **v}
            else:
                data[k] = v
    return config_from_mapping(data, base)
