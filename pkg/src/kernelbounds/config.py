"""JSON run configuration with sections problem / optimizer / experiment / io."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from .bounds import SigmaOptimizerConfig
from .errors import InvalidInput
from .experiments._runner import dataclass_from_dict
from .experiments.area import AreaConfig
from .experiments.control import ControlConfig, ControlProblem
from .experiments.oracle_check import OracleCheckConfig
from .kernels import KernelSpec, kernel_from_config, kernel_to_config

SECTIONS = ("problem", "optimizer", "experiment", "io")


def _check_keys(name: str, d, allowed) -> dict:
    if not isinstance(d, dict):
        raise InvalidInput(f"section {name!r} must be an object", got=type(d).__name__)
    extra = set(d) - set(allowed)
    if extra:
        raise InvalidInput(f"unknown keys in {name!r}", keys=sorted(extra))
    return d


@dataclass(frozen=True)
class ProblemConfig:
    kf: KernelSpec = field(default_factory=lambda: kernel_from_config({"kind": "se", "lengthscale": 1.0}))
    kw: KernelSpec = field(default_factory=lambda: kernel_from_config({"kind": "dirac"}))
    gamma_f_sq: float = 1.0
    gamma_w_sq: float = 1.0

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemConfig":
        _check_keys("problem", d, ("kf", "kw", "gamma_f_sq", "gamma_w_sq"))
        kw = dict(d)
        for k in ("kf", "kw"):
            if k in kw:
                kw[k] = kernel_from_config(kw[k])
        for k in ("gamma_f_sq", "gamma_w_sq"):
            if k in kw and not (isinstance(kw[k], (int, float)) and kw[k] > 0):
                raise InvalidInput(f"problem.{k} must be a positive number", value=kw[k])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "kf": kernel_to_config(self.kf),
            "kw": kernel_to_config(self.kw),
            "gamma_f_sq": self.gamma_f_sq,
            "gamma_w_sq": self.gamma_w_sq,
        }


def _without_seed(cls, name, d):
    if "master_seed" in d:
        raise InvalidInput(f"set the seed in experiment.master_seed, not in experiment.{name}")
    return cls.from_dict(d)


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 0
    area: AreaConfig = AreaConfig()
    control: ControlConfig = ControlConfig()
    control_problem: ControlProblem = ControlProblem()
    oracle: OracleCheckConfig = OracleCheckConfig()

    def __post_init__(self):
        # One master seed drives every study.
        for name in ("area", "control", "oracle"):
            sub = getattr(self, name)
            if sub.master_seed != self.master_seed:
                object.__setattr__(self, name, dataclasses.replace(sub, master_seed=self.master_seed))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _check_keys("experiment", d, ("master_seed", "area", "control", "control_problem", "oracle"))
        seed = d.get("master_seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise InvalidInput("experiment.master_seed must be a non-negative integer", value=seed)
        return cls(
            master_seed=seed,
            area=_without_seed(AreaConfig, "area", d.get("area", {})),
            control=_without_seed(ControlConfig, "control", d.get("control", {})),
            control_problem=ControlProblem.from_dict(d.get("control_problem", {})),
            oracle=_without_seed(OracleCheckConfig, "oracle", d.get("oracle", {})),
        )

    def to_dict(self) -> dict:
        def strip(c):
            out = c.to_dict()
            out.pop("master_seed", None)
            return out

        return {
            "master_seed": self.master_seed,
            "area": strip(self.area),
            "control": strip(self.control),
            "control_problem": self.control_problem.to_dict(),
            "oracle": strip(self.oracle),
        }


@dataclass(frozen=True)
class IoConfig:
    out_dir: Optional[str] = None
    json: bool = False
    threads: int = 1
    timing: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "IoConfig":
        cfg = dataclass_from_dict(cls, _check_keys("io", d, [f.name for f in dataclasses.fields(cls)]))
        if not isinstance(cfg.threads, int) or cfg.threads < 1:
            raise InvalidInput("io.threads must be a positive integer", value=cfg.threads)
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig = ProblemConfig()
    optimizer: SigmaOptimizerConfig = SigmaOptimizerConfig()
    experiment: ExperimentConfig = ExperimentConfig()
    io: IoConfig = IoConfig()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _check_keys("config", d, SECTIONS)
        return cls(
            ProblemConfig.from_dict(d.get("problem", {})),
            SigmaOptimizerConfig.from_dict(d.get("optimizer", {})),
            ExperimentConfig.from_dict(d.get("experiment", {})),
            IoConfig.from_dict(d.get("io", {})),
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"config is not valid JSON: {exc.msg} at line {exc.lineno}", path=str(path)) from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "experiment": self.experiment.to_dict(),
            "io": self.io.to_dict(),
        }

    def with_overrides(self, seed=None, threads=None, out_dir=None, json_out=None) -> "RunConfig":
        exp, io = self.experiment, self.io
        if seed is not None:
            exp = dataclasses.replace(exp, master_seed=int(seed))
        changes = {k: v for k, v in (("threads", threads), ("out_dir", out_dir), ("json", json_out)) if v is not None}
        if changes:
            io = dataclasses.replace(io, **changes)
        return dataclasses.replace(self, experiment=exp, io=io)


def default_config_json() -> str:
    return json.dumps(RunConfig().to_dict(), indent=2, sort_keys=False) + "\n"
