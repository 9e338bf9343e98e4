"""Run configuration schema shared by the HTTP service and the CLI.

The on-disk dialect is TOML (JSON manifests re-validate through the same
models). Field names below are the contract for both.
"""

from __future__ import annotations

import json
import sys
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .aging import AgingRule
from .errors import ConfigError
from .fluid import InstantaneousArrival, ServiceProfile
from .oracles import EXAMPLES

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

EXAMPLE_NAMES = tuple(EXAMPLES.keys())


class AgingSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    kind: Literal["linear", "exponential"]
    c: Optional[float] = None
    lam: Optional[float] = Field(default=None, alias="lambda")

    @model_validator(mode="after")
    def _check_params(self):
        if self.kind == "linear":
            if self.c is None or self.c <= 0:
                raise ValueError("linear aging needs c > 0")
        else:
            if self.lam is None or self.lam <= 0:
                raise ValueError("exponential aging needs lambda > 0")
        return self

    def to_rule(self) -> AgingRule:
        if self.kind == "linear":
            return AgingRule.linear(self.c)
        return AgingRule.exponential(self.lam)


class ArrivalTable(BaseModel):
    """Tabulated instantaneous arrival distribution.

    cum[i][j] is the cumulative workload rate at time s[i] up to value x[j];
    piecewise linear in x (atomless), held constant between s grid points.
    """

    model_config = ConfigDict(extra="forbid")

    s: list[float]
    x: list[float]
    cum: list[list[float]]

    @model_validator(mode="after")
    def _check(self):
        if len(self.s) < 1 or len(self.x) < 2:
            raise ValueError("arrival table needs >= 1 time and >= 2 value points")
        if any(b <= a for a, b in zip(self.s, self.s[1:])):
            raise ValueError("arrival table times must increase")
        if any(b <= a for a, b in zip(self.x, self.x[1:])):
            raise ValueError("arrival table values must increase")
        if len(self.cum) != len(self.s) or any(len(r) != len(self.x) for r in self.cum):
            raise ValueError("arrival table cum must be len(s) rows of len(x)")
        for row in self.cum:
            if any(b < a for a, b in zip(row, row[1:])) or row[0] < 0:
                raise ValueError("arrival table rows must be nonnegative and nondecreasing")
        return self

    def to_arrival(self) -> InstantaneousArrival:
        s = np.asarray(self.s, dtype=float)
        x = np.asarray(self.x, dtype=float)
        cum = np.asarray(self.cum, dtype=float)

        def pi(t, xs):
            i = int(np.clip(np.searchsorted(s, t, side="right") - 1, 0, len(s) - 1))
            return np.interp(np.asarray(xs, dtype=float), x, cum[i],
                             left=0.0, right=float(cum[i][-1]))

        return InstantaneousArrival(
            pi=pi,
            rate=lambda t: float(cum[int(np.clip(np.searchsorted(s, t, side='right') - 1,
                                                 0, len(s) - 1))][-1]),
            support=lambda t: (float(x[0]), float(x[-1])),
            rate_bound=float(cum[:, -1].max()) * (1 + 1e-9),
            time_invariant=len(self.s) == 1,
            label="table",
        )


class ArrivalSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    example: Optional[Literal["uniform_linear", "triangular_linear",
                              "pareto_linear", "pareto_exponential"]] = None
    eta: Optional[float] = None
    lam: Optional[float] = Field(default=None, alias="lambda")
    table: Optional[ArrivalTable] = None

    @model_validator(mode="after")
    def _check(self):
        if (self.example is None) == (self.table is None):
            raise ValueError("arrival needs exactly one of: example, table")
        if self.eta is not None and self.eta <= 1:
            raise ValueError("pareto eta must exceed 1")
        return self

    def params(self) -> dict:
        out = {}
        if self.eta is not None:
            out["eta"] = self.eta
        if self.lam is not None:
            out["lambda"] = self.lam
        return out

    def to_arrival(self) -> InstantaneousArrival:
        if self.table is not None:
            return self.table.to_arrival()
        ex = EXAMPLES[self.example]
        p = self.params()
        return InstantaneousArrival(
            pi=ex.pi(p),
            rate=lambda s, _r=ex.rate(p): float(np.atleast_1d(_r(s))[0]),
            support=ex.support(p),
            rate_bound=1.0 + 1e-9,  # all named examples have unit-bounded rate
            time_invariant=ex.time_invariant,
            label=self.example,
        )


class ServiceSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rate: float | list[list[float]]

    @model_validator(mode="after")
    def _check(self):
        if isinstance(self.rate, float):
            if self.rate <= 0:
                raise ValueError("service rate must be > 0")
        else:
            if not self.rate or any(len(row) != 2 for row in self.rate):
                raise ValueError("service rate table rows must be [s, m] pairs")
        return self

    def to_profile(self) -> ServiceProfile:
        if isinstance(self.rate, float):
            return ServiceProfile.constant(self.rate)
        rows = sorted(self.rate)
        return ServiceProfile.from_table([r[0] for r in rows], [r[1] for r in rows])


class AxisSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    start: float
    stop: float
    n: int

    @model_validator(mode="after")
    def _check(self):
        if self.n < 2 or self.stop <= self.start:
            raise ValueError("axis needs n >= 2 and stop > start")
        return self

    def grid(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.n)


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t: AxisSpec
    x: AxisSpec
    levels: int = 512
    s_points: int = 1001

    @field_validator("levels", "s_points")
    @classmethod
    def _pos(cls, v):
        if v < 8:
            raise ValueError("grid resolution too small")
        return v


class TraceJob(BaseModel):
    model_config = ConfigDict(extra="ignore")

    tau: float
    size: float

    @model_validator(mode="after")
    def _check(self):
        if self.tau < 0 or self.size <= 0:
            raise ValueError("trace rows need tau >= 0 and size > 0")
        return self


class SimulateSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_scale: int = 1
    horizon: float = 1.0
    trace: Optional[list[TraceJob]] = None
    size_floor: Optional[float] = None

    @model_validator(mode="after")
    def _check(self):
        if self.n_scale < 1:
            raise ValueError("n_scale must be >= 1")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        return self


class CompareSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_list: list[int]
    replications: int = 1
    horizon: float = 1.0
    threads: int = 1
    size_floor: Optional[float] = None

    @model_validator(mode="after")
    def _check(self):
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ValueError("n_list must contain scales >= 1")
        if sorted(set(self.n_list)) != self.n_list:
            raise ValueError("n_list must be strictly increasing")
        if self.replications < 1 or self.threads < 1:
            raise ValueError("replications and threads must be >= 1")
        return self


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["fluid", "simulate", "compare"]
    seed: int = 0
    arrival: Optional[ArrivalSpec] = None
    aging: AgingSpec
    service: ServiceSpec
    grid: GridSpec
    simulate: Optional[SimulateSpec] = None
    compare: Optional[CompareSpec] = None

    @model_validator(mode="after")
    def _mode_keys(self):
        if self.mode == "simulate":
            if self.simulate is None:
                raise ValueError('mode "simulate" needs a [simulate] section')
            if self.arrival is None and self.simulate.trace is None:
                raise ValueError("simulate needs an arrival spec or a trace")
        elif self.mode == "compare":
            if self.compare is None:
                raise ValueError('mode "compare" needs a [compare] section')
            if self.arrival is None:
                raise ValueError("compare needs an arrival spec")
        else:
            if self.arrival is None:
                raise ValueError("fluid needs an arrival spec")
        return self

    def canonical(self) -> dict:
        return json.loads(self.model_dump_json(by_alias=True, exclude_none=True))


def load_config_text(text: str, fmt: str) -> RunConfig:
    """Parse TOML or JSON config text; JSON manifests unwrap their config key."""
    try:
        if fmt == "toml":
            data = _toml.loads(text)
        else:
            data = json.loads(text)
    except (_toml.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {fmt} config: {exc}") from exc
    if isinstance(data, dict) and "config" in data and "mode" not in data:
        data = data["config"]
    try:
        return RunConfig.model_validate(data)
    except Exception as exc:
        raise ConfigError(str(exc)) from exc


def load_config_file(path: str) -> RunConfig:
    fmt = "json" if path.endswith(".json") else "toml"
    with open(path, "r", encoding="utf-8") as fh:
        return load_config_text(fh.read(), fmt)
