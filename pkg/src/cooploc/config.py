"""Scenario configuration: dataclasses, defaults, YAML parsing, validation.

A scenario file is a YAML mapping in which every field is optional; omitted
fields take the defaults below (five robots, 1000 steps of 0.05 s, constant
0.2 m/s speed with 0.5*randn rad/s turn rate, 0.01 m / 0.01 rad sensing
noise, 0.01/0.01/0.01 initial-belief sigmas, full measurement availability,
20-step seeded-random epochs). Validation reports the offending field by
name so the CLI can exit with a precise message.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import yaml

from .coordination import EpochPolicy
from .errors import ConfigError
from .models import MeasurementNoiseParams, MotionNoiseParams

KNOWN_ESTIMATORS = ("dr", "de_ekf", "l_ekf")

DEFAULT_LANDMARKS = ((-5.0, -5.0), (-5.0, 5.0), (5.0, -5.0), (5.0, 5.0))


@dataclass(frozen=True, slots=True)
class ControlPolicy:
    """Per-robot control generation: constant speed, fresh turn rate per step."""

    speed: float = 0.2
    omega_scale: float = 0.5


@dataclass(frozen=True, slots=True)
class ProcessNoiseParams:
    """Additive per-step state-space noise sigmas for the true motion.

    The primary truth noise is control-space (``motion_noise`` executed with
    the commanded controls); this diagonal term is an extra stress knob and
    defaults to zero.
    """

    sigma_x: float = 0.0
    sigma_y: float = 0.0
    sigma_theta: float = 0.0


@dataclass(frozen=True, slots=True)
class SensorParams:
    """Relative-measurement sensing: reach, availability, and noise.

    ``availability`` is the probability that a given ordered robot pair
    produces a measurement at a given step (the dropout sweep's x-axis).
    """

    max_range: float = math.inf
    availability: float = 1.0
    noise: MeasurementNoiseParams = field(
        default_factory=lambda: MeasurementNoiseParams(0.01, 0.01)
    )


@dataclass(frozen=True, slots=True)
class InitialConditions:
    """Initial true-pose distribution and initial belief noise."""

    sigma_x: float = 0.01
    sigma_y: float = 0.01
    sigma_theta: float = 0.01
    position_scale: float = 5.0
    heading_scale: float = 2.0
    clamp_to_arena: bool = True
    arena_half_extent: float = 5.0
    # Explicit initial true poses; overrides the random draw when given.
    # Needed for replaying logs that carry no ground truth.
    poses: tuple[tuple[float, float, float], ...] | None = None


@dataclass(frozen=True, slots=True)
class ScenarioConfig:
    """Everything a run needs; one master seed derives every noise stream."""

    n_robots: int = 5
    n_steps: int = 1000
    dt: float = 0.05
    seed: int = 0
    estimators: tuple[str, ...] = ("dr", "de_ekf")
    control: ControlPolicy = field(default_factory=ControlPolicy)
    # Odometry noise is not pinned by the reference setting; these values are
    # calibrated so dead reckoning visibly diverges while the decentralized
    # filter reproduces the reference dropout behavior (see presets).
    motion_noise: MotionNoiseParams = field(
        default_factory=lambda: MotionNoiseParams(0.4, 0.25)
    )
    # Extra additive state-space truth noise; None means zero (truth noise
    # is the control-space motion_noise executed through the motion model,
    # which is exactly what the filter's V M V^T linearizes).
    process_noise: ProcessNoiseParams | None = None
    sensor: SensorParams = field(default_factory=SensorParams)
    initial: InitialConditions = field(default_factory=InitialConditions)
    epoch: EpochPolicy = field(default_factory=EpochPolicy)
    landmarks: tuple[tuple[float, float], ...] = DEFAULT_LANDMARKS
    gate_enabled: bool = False
    gate_threshold: float = 13.8
    joseph_form: bool = False
    covariance_symmetry_atol: float = 1e-9
    covariance_eigenvalue_tol: float = 1e-9

    def resolved_process_noise(self) -> ProcessNoiseParams:
        if self.process_noise is not None:
            return self.process_noise
        return ProcessNoiseParams()

    def gate(self) -> float | None:
        return self.gate_threshold if self.gate_enabled else None

    def fleet(self) -> list[int]:
        return list(range(self.n_robots))

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        """Copy with top-level fields replaced (seed, sensor, estimators...)."""
        return replace(self, **kwargs)


def _require(condition: bool, field_name: str, message: str) -> None:
    if not condition:
        raise ConfigError(field_name, message)


def _number(raw, field_name: str, *, allow_inf: bool = False) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(field_name, f"expected a number, got {raw!r}")
    value = float(raw)
    if math.isnan(value) or (not allow_inf and math.isinf(value)):
        raise ConfigError(field_name, f"expected a finite number, got {raw!r}")
    return value


def _integer(raw, field_name: str) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigError(field_name, f"expected an integer, got {raw!r}")
    return raw


def _boolean(raw, field_name: str) -> bool:
    if not isinstance(raw, bool):
        raise ConfigError(field_name, f"expected true/false, got {raw!r}")
    return raw


def validate_config(config: ScenarioConfig) -> ScenarioConfig:
    """Check every invariant; returns the config for chaining."""
    _require(config.n_robots >= 1, "n_robots", f"must be >= 1, got {config.n_robots}")
    _require(config.n_steps >= 1, "n_steps", f"must be >= 1, got {config.n_steps}")
    _require(
        math.isfinite(config.dt) and config.dt > 0,
        "dt",
        f"must be a positive number, got {config.dt}",
    )
    for name in config.estimators:
        _require(
            name in KNOWN_ESTIMATORS,
            "estimators",
            f"unknown estimator {name!r}, expected subset of {KNOWN_ESTIMATORS}",
        )
    _require(len(config.estimators) >= 1, "estimators", "must list at least one estimator")
    _require(config.control.speed >= 0, "control.speed", "must be >= 0")
    _require(config.control.omega_scale >= 0, "control.omega_scale", "must be >= 0")
    _require(config.motion_noise.sigma_v >= 0, "motion_noise.sigma_v", "must be >= 0")
    _require(
        config.motion_noise.sigma_omega >= 0, "motion_noise.sigma_omega", "must be >= 0"
    )
    noise = config.resolved_process_noise()
    for label, value in (
        ("process_noise.sigma_x", noise.sigma_x),
        ("process_noise.sigma_y", noise.sigma_y),
        ("process_noise.sigma_theta", noise.sigma_theta),
    ):
        _require(value >= 0, label, "must be >= 0")
    _require(config.sensor.max_range > 0, "sensor.max_range", "must be > 0")
    _require(
        0.0 <= config.sensor.availability <= 1.0,
        "sensor.availability",
        f"must lie in [0, 1], got {config.sensor.availability}",
    )
    _require(config.sensor.noise.sigma_range >= 0, "sensor.sigma_range", "must be >= 0")
    _require(
        config.sensor.noise.sigma_bearing >= 0, "sensor.sigma_bearing", "must be >= 0"
    )
    for sig, label in (
        (config.initial.sigma_x, "initial.sigma_x"),
        (config.initial.sigma_y, "initial.sigma_y"),
        (config.initial.sigma_theta, "initial.sigma_theta"),
    ):
        _require(sig >= 0, label, "must be >= 0")
    _require(
        config.initial.arena_half_extent > 0, "initial.arena_half_extent", "must be > 0"
    )
    if config.initial.poses is not None:
        _require(
            len(config.initial.poses) == config.n_robots,
            "initial.poses",
            f"expected {config.n_robots} poses, got {len(config.initial.poses)}",
        )
    _require(config.epoch.epoch_length >= 1, "epoch.length", "must be >= 1")
    _require(config.gate_threshold > 0, "gate_threshold", "must be > 0")
    _require(
        config.covariance_symmetry_atol >= 0, "covariance_symmetry_atol", "must be >= 0"
    )
    _require(
        config.covariance_eigenvalue_tol >= 0,
        "covariance_eigenvalue_tol",
        "must be >= 0",
    )
    for i, lm in enumerate(config.landmarks):
        _require(
            len(lm) == 2 and all(math.isfinite(c) for c in lm),
            f"landmarks[{i}]",
            f"expected a finite [x, y] pair, got {lm!r}",
        )
    return config


_TOP_LEVEL_KEYS = {
    "n_robots",
    "n_steps",
    "dt",
    "seed",
    "estimators",
    "control",
    "motion_noise",
    "process_noise",
    "sensor",
    "initial",
    "epoch",
    "landmarks",
    "gate_enabled",
    "gate_threshold",
    "joseph_form",
    "covariance_symmetry_atol",
    "covariance_eigenvalue_tol",
}


def _section(data: dict, key: str) -> dict:
    raw = data.get(key)
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(key, f"expected a mapping, got {raw!r}")
    return raw


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from a parsed mapping, applying defaults."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", f"expected a mapping at top level, got {type(data).__name__}")
    unknown = set(data) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown configuration field")

    defaults = ScenarioConfig()
    kwargs: dict = {}
    if "n_robots" in data:
        kwargs["n_robots"] = _integer(data["n_robots"], "n_robots")
    if "n_steps" in data:
        kwargs["n_steps"] = _integer(data["n_steps"], "n_steps")
    if "dt" in data:
        kwargs["dt"] = _number(data["dt"], "dt")
    if "seed" in data:
        kwargs["seed"] = _integer(data["seed"], "seed")
    if "estimators" in data:
        raw = data["estimators"]
        if not isinstance(raw, (list, tuple)) or not all(isinstance(e, str) for e in raw):
            raise ConfigError("estimators", f"expected a list of names, got {raw!r}")
        kwargs["estimators"] = tuple(raw)

    control = _section(data, "control")
    kwargs["control"] = ControlPolicy(
        speed=_number(control.get("speed", defaults.control.speed), "control.speed"),
        omega_scale=_number(
            control.get("omega_scale", defaults.control.omega_scale),
            "control.omega_scale",
        ),
    )

    motion = _section(data, "motion_noise")
    kwargs["motion_noise"] = MotionNoiseParams(
        sigma_v=_number(
            motion.get("sigma_v", defaults.motion_noise.sigma_v), "motion_noise.sigma_v"
        ),
        sigma_omega=_number(
            motion.get("sigma_omega", defaults.motion_noise.sigma_omega),
            "motion_noise.sigma_omega",
        ),
    )

    if data.get("process_noise") is not None:
        process = _section(data, "process_noise")
        kwargs["process_noise"] = ProcessNoiseParams(
            sigma_x=_number(process.get("sigma_x", 0.0), "process_noise.sigma_x"),
            sigma_y=_number(process.get("sigma_y", 0.0), "process_noise.sigma_y"),
            sigma_theta=_number(
                process.get("sigma_theta", 0.0), "process_noise.sigma_theta"
            ),
        )

    sensor = _section(data, "sensor")
    raw_max_range = sensor.get("max_range", defaults.sensor.max_range)
    if raw_max_range is None:
        raw_max_range = math.inf
    kwargs["sensor"] = SensorParams(
        max_range=_number(raw_max_range, "sensor.max_range", allow_inf=True),
        availability=_number(
            sensor.get("availability", defaults.sensor.availability), "sensor.availability"
        ),
        noise=MeasurementNoiseParams(
            sigma_range=_number(
                sensor.get("sigma_range", defaults.sensor.noise.sigma_range),
                "sensor.sigma_range",
            ),
            sigma_bearing=_number(
                sensor.get("sigma_bearing", defaults.sensor.noise.sigma_bearing),
                "sensor.sigma_bearing",
            ),
        ),
    )

    initial = _section(data, "initial")
    poses = initial.get("poses")
    if poses is not None:
        if not isinstance(poses, (list, tuple)):
            raise ConfigError("initial.poses", f"expected a list of [x, y, theta], got {poses!r}")
        parsed = []
        for i, p in enumerate(poses):
            if not isinstance(p, (list, tuple)) or len(p) != 3:
                raise ConfigError(
                    f"initial.poses[{i}]", f"expected [x, y, theta], got {p!r}"
                )
            parsed.append(tuple(_number(c, f"initial.poses[{i}]") for c in p))
        poses = tuple(parsed)
    kwargs["initial"] = InitialConditions(
        sigma_x=_number(initial.get("sigma_x", defaults.initial.sigma_x), "initial.sigma_x"),
        sigma_y=_number(initial.get("sigma_y", defaults.initial.sigma_y), "initial.sigma_y"),
        sigma_theta=_number(
            initial.get("sigma_theta", defaults.initial.sigma_theta), "initial.sigma_theta"
        ),
        position_scale=_number(
            initial.get("position_scale", defaults.initial.position_scale),
            "initial.position_scale",
        ),
        heading_scale=_number(
            initial.get("heading_scale", defaults.initial.heading_scale),
            "initial.heading_scale",
        ),
        clamp_to_arena=_boolean(
            initial.get("clamp_to_arena", defaults.initial.clamp_to_arena),
            "initial.clamp_to_arena",
        ),
        arena_half_extent=_number(
            initial.get("arena_half_extent", defaults.initial.arena_half_extent),
            "initial.arena_half_extent",
        ),
        poses=poses,
    )

    epoch = _section(data, "epoch")
    mode = epoch.get("policy", defaults.epoch.mode)
    if not isinstance(mode, str) or mode not in ("seeded-random", "round-robin"):
        raise ConfigError(
            "epoch.policy", f"expected 'seeded-random' or 'round-robin', got {mode!r}"
        )
    length = _integer(epoch.get("length", defaults.epoch.epoch_length), "epoch.length")
    if length < 1:
        raise ConfigError("epoch.length", f"must be >= 1, got {length}")
    kwargs["epoch"] = EpochPolicy(mode=mode, epoch_length=length)

    if "landmarks" in data:
        raw = data["landmarks"]
        if raw is None:
            raw = []
        if not isinstance(raw, (list, tuple)):
            raise ConfigError("landmarks", f"expected a list of [x, y] pairs, got {raw!r}")
        landmarks = []
        for i, lm in enumerate(raw):
            if not isinstance(lm, (list, tuple)) or len(lm) != 2:
                raise ConfigError(f"landmarks[{i}]", f"expected an [x, y] pair, got {lm!r}")
            landmarks.append(
                (_number(lm[0], f"landmarks[{i}]"), _number(lm[1], f"landmarks[{i}]"))
            )
        kwargs["landmarks"] = tuple(landmarks)

    if "gate_enabled" in data:
        kwargs["gate_enabled"] = _boolean(data["gate_enabled"], "gate_enabled")
    if "gate_threshold" in data:
        kwargs["gate_threshold"] = _number(data["gate_threshold"], "gate_threshold")
    if "joseph_form" in data:
        kwargs["joseph_form"] = _boolean(data["joseph_form"], "joseph_form")
    if "covariance_symmetry_atol" in data:
        kwargs["covariance_symmetry_atol"] = _number(
            data["covariance_symmetry_atol"], "covariance_symmetry_atol"
        )
    if "covariance_eigenvalue_tol" in data:
        kwargs["covariance_eigenvalue_tol"] = _number(
            data["covariance_eigenvalue_tol"], "covariance_eigenvalue_tol"
        )

    return validate_config(ScenarioConfig(**kwargs))


def load_config(path: str) -> ScenarioConfig:
    """Parse and validate a YAML scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"not valid YAML: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(config: ScenarioConfig) -> dict:
    """Effective configuration as plain data, suitable for YAML or JSON.

    Derived fields (process noise) are resolved so the dump alone is enough
    to reproduce the run.
    """
    out = {
        "n_robots": config.n_robots,
        "n_steps": config.n_steps,
        "dt": config.dt,
        "seed": config.seed,
        "estimators": list(config.estimators),
        "control": asdict(config.control),
        "motion_noise": {
            "sigma_v": config.motion_noise.sigma_v,
            "sigma_omega": config.motion_noise.sigma_omega,
        },
        "process_noise": asdict(config.resolved_process_noise()),
        "sensor": {
            # None encodes an unlimited range; plain JSON has no infinity.
            "max_range": None if math.isinf(config.sensor.max_range) else config.sensor.max_range,
            "availability": config.sensor.availability,
            "sigma_range": config.sensor.noise.sigma_range,
            "sigma_bearing": config.sensor.noise.sigma_bearing,
        },
        "initial": {
            "sigma_x": config.initial.sigma_x,
            "sigma_y": config.initial.sigma_y,
            "sigma_theta": config.initial.sigma_theta,
            "position_scale": config.initial.position_scale,
            "heading_scale": config.initial.heading_scale,
            "clamp_to_arena": config.initial.clamp_to_arena,
            "arena_half_extent": config.initial.arena_half_extent,
        },
        "epoch": {"policy": config.epoch.mode, "length": config.epoch.epoch_length},
        "landmarks": [list(lm) for lm in config.landmarks],
        "gate_enabled": config.gate_enabled,
        "gate_threshold": config.gate_threshold,
        "joseph_form": config.joseph_form,
        "covariance_symmetry_atol": config.covariance_symmetry_atol,
        "covariance_eigenvalue_tol": config.covariance_eigenvalue_tol,
    }
    if config.initial.poses is not None:
        out["initial"]["poses"] = [list(p) for p in config.initial.poses]
    return out


def dump_effective_config(config: ScenarioConfig) -> str:
    """Normalized YAML text of the effective configuration."""
    return yaml.safe_dump(config_to_dict(config), sort_keys=True, default_flow_style=None)
