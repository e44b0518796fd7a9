"""Run configuration: validation, JSON round-trip and command-line overrides."""

import json
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError
from .estimators import AGGREGATE_RULES, CHILDREN
from .mortar import FINER_SIDE, MORTAR_RULES
from .problems import BUILTIN

MODES = ("adaptive", "uniform")
ESTIMATORS = ("eta1", "eta2")


@dataclass
class RunConfig:
    problem: str = "example1"
    k: int = 1
    theta: float = 0.5
    mode: str = "adaptive"
    estimator: str = "eta2"
    max_levels: int = 10
    max_dofs: int = 100000
    grid: object = None
    output_dir: str = "run"
    mortar_rule: str = FINER_SIDE
    aggregate_rule: str = CHILDREN

    def validate(self):
        _choice(self.problem, sorted(BUILTIN), "problem")
        _int(self.k, "k", 1)
        if isinstance(self.theta, bool) or not isinstance(self.theta, (int, float)):
            raise ConfigError("must be a number", "theta")
        if not 0.0 < float(self.theta) < 1.0:
            raise ConfigError("must lie in (0, 1)", "theta")
        _choice(self.mode, MODES, "mode")
        _choice(self.estimator, ESTIMATORS, "estimator")
        _int(self.max_levels, "max_levels", 1)
        _int(self.max_dofs, "max_dofs", 1)
        if self.grid is not None:
            if isinstance(self.grid, list):
                if not self.grid:
                    raise ConfigError("must not be empty", "grid")
                for i, g in enumerate(self.grid):
                    _int(g, f"grid[{i}]", 1)
            else:
                _int(self.grid, "grid", 1)
        if not isinstance(self.output_dir, str) or not self.output_dir:
            raise ConfigError("must be a non-empty string", "output_dir")
        _choice(self.mortar_rule, MORTAR_RULES, "mortar_rule")
        _choice(self.aggregate_rule, AGGREGATE_RULES, "aggregate_rule")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be an object", "<root>")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError("unknown key", str(key))
        return cls(**data).validate()

    def with_overrides(self, **kw):
        data = self.to_dict()
        data.update({k: v for k, v in kw.items() if v is not None})
        return RunConfig.from_dict(data)


def _choice(value, options, key):
    if value not in options:
        raise ConfigError(f"must be one of {list(options)}, got {value!r}", key)


def _int(value, key, lo):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"must be an integer, got {value!r}", key)
    if value < lo:
        raise ConfigError(f"must be >= {lo}", key)


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} at line {exc.lineno}", "<root>") from exc
    return RunConfig.from_dict(data)


def dump_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def dumps_config(cfg):
    return json.dumps(cfg.to_dict(), sort_keys=True)
