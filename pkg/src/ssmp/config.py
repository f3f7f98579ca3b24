"""Experiment configuration: a strict YAML schema validated with pydantic.

Every block rejects unknown keys. Validation errors are reported with the
dotted field location and, when available, the line in the source document.
"""
from __future__ import annotations

import math
from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import kernel, processes
from .maps import MapSpec
from . import veritas

KINDS = (
    "simulate",
    "lamperti-forward",
    "lamperti-inverse",
    "invert",
    "embed",
    "exponent",
    "check-duality",
    "check-h",
    "check-moment",
    "check-isotropy",
    "check-reversibility",
    "check-self-duality",
)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# Lévy and MAP blocks


class DiracCfg(Strict):
    type: Literal["dirac"]
    value: float = 0.0


class GaussianCfg(Strict):
    type: Literal["gaussian"]
    mean: float = 0.0
    sd: float = 1.0


class TwoPointCfg(Strict):
    type: Literal["two_point"]
    a: float
    b: float
    p: float = 0.5


class UniformCfg(Strict):
    type: Literal["uniform"]
    lo: float
    hi: float


JumpCfg = Annotated[Union[DiracCfg, GaussianCfg, TwoPointCfg, UniformCfg], Field(discriminator="type")]


def build_jump(cfg) -> kernel.JumpLaw:
    return {
        "dirac": lambda c: kernel.Dirac(c.value),
        "gaussian": lambda c: kernel.Gaussian(c.mean, c.sd),
        "two_point": lambda c: kernel.TwoPoint(c.a, c.b, c.p),
        "uniform": lambda c: kernel.Uniform(c.lo, c.hi),
    }[cfg.type](cfg)


class StableCfg(Strict):
    alpha: float
    rho: float = 0.5


class CompoundPoissonCfg(Strict):
    rate: float
    jump: JumpCfg


class LevyCfg(Strict):
    drift: float = 0.0
    sigma: float = 0.0
    stable: StableCfg | None = None
    cpois: CompoundPoissonCfg | None = None
    kill_rate: float = 0.0

    @model_validator(mode="after")
    def _build(self):
        self.build()
        return self

    def build(self) -> kernel.LevySpec:
        st = None if self.stable is None else kernel.StablePart(self.stable.alpha, self.stable.rho)
        cp = None if self.cpois is None else kernel.CompoundPoisson(self.cpois.rate, build_jump(self.cpois.jump))
        return kernel.LevySpec(self.drift, self.sigma, st, cp, self.kill_rate)


class MapCfg(Strict):
    states: list[list[float]]
    Q: list[list[float]]
    levy: list[LevyCfg]
    delta: list[list[JumpCfg]] | None = None

    @model_validator(mode="after")
    def _build(self):
        self.build()
        return self

    def build(self) -> MapSpec:
        delta = None if self.delta is None else [[build_jump(c) for c in row] for row in self.delta]
        return MapSpec(self.states, self.Q, [lv.build() for lv in self.levy], delta)


# ---------------------------------------------------------------------------
# processes


class _ProcBase(Strict):
    horizon: float = 1.0
    step: float = 1e-3

    @model_validator(mode="after")
    def _build(self):
        self.build()
        return self


class BrownianAbsCfg(_ProcBase):
    type: Literal["brownian_abs"]
    x0: float = 1.0

    def build(self):
        return processes.BrownianAbs1D(self.horizon, self.step, self.x0)


class BesselCfg(_ProcBase):
    type: Literal["bessel"]
    delta: float = 3.0
    x0: float = 1.0

    def build(self):
        return processes.Bessel(self.horizon, self.step, self.delta, self.x0)


class Bes3Cfg(_ProcBase):
    type: Literal["bes3"]
    x0: float = 1.0

    def build(self):
        return processes.Bes3(self.horizon, self.step, self.x0)


class Stable1DCfg(_ProcBase):
    type: Literal["stable1d"]
    alpha: float = 1.5
    rho: float = 0.5
    x0: float = 1.0
    absorb_at_zero: bool = False
    eps: float = 1e-4

    def build(self):
        return processes.Stable1D(self.horizon, self.step, self.alpha, self.rho, self.x0,
                                  self.absorb_at_zero, self.eps)


class IsotropicStableCfg(_ProcBase):
    type: Literal["isotropic_stable"]
    d: int = 2
    alpha: float = 1.0
    x0: list[float] = [1.0, 0.0]

    def build(self):
        return processes.IsotropicStable(self.horizon, self.step, self.d, self.alpha, tuple(self.x0))


class FreeBesselCfg(_ProcBase):
    type: Literal["free_bessel"]
    d: int = 2
    delta: float = 3.0
    x0: list[float] = [1.0, 1.0]

    def build(self):
        return processes.FreeBessel(self.horizon, self.step, self.d, self.delta, tuple(self.x0))


ProcessCfg = Annotated[
    Union[BrownianAbsCfg, BesselCfg, Bes3Cfg, Stable1DCfg, IsotropicStableCfg, FreeBesselCfg],
    Field(discriminator="type"),
]


class SamplerCfg(Strict):
    """A marginal sampler: a catalog process, its spatial inversion, or a Lévy process on R."""

    process: ProcessCfg | None = None
    levy: LevyCfg | None = None
    inverted: bool = False
    clock: float = Field(1e-3, gt=0)
    r_stop: float = Field(1e4, gt=1)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.process is None) == (self.levy is None):
            raise ValueError("give exactly one of 'process' or 'levy'")
        if self.levy is not None and self.inverted:
            raise ValueError("'inverted' applies to catalog processes only")
        return self

    def build(self):
        if self.levy is not None:
            return veritas.LevySampler(self.levy.build())
        proc = self.process.build()
        if self.inverted:
            return veritas.InversionSampler(proc, self.clock, self.r_stop)
        return veritas.ProcessSampler(proc)


# ---------------------------------------------------------------------------
# test functions, measures, harmonic functions


class BumpCfg(Strict):
    type: Literal["gaussian_bump"]
    center: list[float]
    width: float = Field(gt=0)

    def build(self):
        return veritas.GaussianBump(tuple(self.center), self.width)


class AnnulusCfg(Strict):
    type: Literal["indicator_annulus"]
    r_lo: float = Field(gt=0)
    r_hi: float

    def build(self):
        return veritas.IndicatorAnnulus(self.r_lo, self.r_hi)


class CoordPowerCfg(Strict):
    type: Literal["coordinate_power"]
    exponent: float
    cap: float = Field(gt=0)
    coord: int = 0

    def build(self):
        return veritas.CoordinatePower(self.exponent, self.cap, self.coord)


TestFnCfg = Annotated[Union[BumpCfg, AnnulusCfg, CoordPowerCfg], Field(discriminator="type")]


class AngularCfg(Strict):
    type: Literal["uniform", "sign_weights", "coordinate_product"] = "uniform"
    pi_minus: float | None = None
    pi_plus: float | None = None
    exponent: float | None = None

    @model_validator(mode="after")
    def _build(self):
        self.build()
        return self

    def build(self):
        if self.type == "uniform":
            return veritas.UniformAngular()
        if self.type == "sign_weights":
            if self.pi_minus is None or self.pi_plus is None:
                raise ValueError("sign_weights needs pi_minus and pi_plus")
            return veritas.SignWeights(self.pi_minus, self.pi_plus)
        if self.exponent is None:
            raise ValueError("coordinate_product needs exponent")
        return veritas.CoordinateProduct(self.exponent)


class MeasureCfg(Strict):
    d: int
    radial_exponent: float
    r_lo: float
    r_hi: float
    angular: AngularCfg = AngularCfg()
    cone: Literal["full", "positive"] = "full"

    @model_validator(mode="after")
    def _build(self):
        self.build()
        return self

    def build(self):
        return veritas.MeasureSpec(self.d, self.radial_exponent, self.r_lo, self.r_hi, self.angular.build(),
                                   self.cone)


class HarmonicCfg(Strict):
    type: Literal["power_norm", "power_coord", "angular_weighted"]
    exponent: float
    pi_minus: float | None = None
    pi_plus: float | None = None

    @model_validator(mode="after")
    def _build(self):
        self.build()
        return self

    def build(self):
        if self.type == "power_norm":
            return processes.PowerNorm(self.exponent)
        if self.type == "power_coord":
            return processes.PowerCoord(self.exponent)
        if self.pi_minus is None or self.pi_plus is None:
            raise ValueError("angular_weighted needs pi_minus and pi_plus")
        return processes.AngularWeighted(self.pi_minus, self.pi_plus, self.exponent)


# ---------------------------------------------------------------------------
# experiments


class OutputCfg(Strict):
    format: Literal["csv", "binary"] = "csv"
    prefix: str = "path"


class _Exp(Strict):
    kind: str
    seed: int = 0
    output: OutputCfg = OutputCfg()


class SimulateExp(_Exp):
    kind: Literal["simulate"]
    process: ProcessCfg
    n_paths: int = Field(1, ge=1)


class ForwardExp(_Exp):
    kind: Literal["lamperti-forward"]
    map: MapCfg
    alpha: float = Field(gt=0)
    start_state: int = 0
    xi0: float = 0.0
    horizon: float = Field(gt=0)
    step: float = Field(gt=0)
    n_paths: int = Field(1, ge=1)


class InverseExp(_Exp):
    kind: Literal["lamperti-inverse"]
    process: ProcessCfg
    n_paths: int = Field(1, ge=1)


class InvertExp(_Exp):
    kind: Literal["invert"]
    process: ProcessCfg
    n_paths: int = Field(1, ge=1)


class EmbedExp(_Exp):
    kind: Literal["embed"]
    process: ProcessCfg
    n_paths: int = Field(1, ge=1)


class ExponentExp(_Exp):
    kind: Literal["exponent"]
    map: MapCfg
    u_re: float = 0.0
    u_im: float = 1.0
    t: float | None = None


class DualityExp(_Exp):
    kind: Literal["check-duality"]
    proc_a: SamplerCfg
    proc_b: SamplerCfg
    measure: MeasureCfg
    t: float = Field(gt=0)
    f: TestFnCfg
    g: TestFnCfg
    n: int = Field(100_000, ge=2)
    n_se: float = Field(3.0, gt=0)


class SelfDualityExp(_Exp):
    kind: Literal["check-self-duality"]
    sampler: SamplerCfg
    measure: MeasureCfg
    t: float = Field(gt=0)
    f: TestFnCfg
    g: TestFnCfg
    n: int = Field(100_000, ge=2)
    n_se: float = Field(3.0, gt=0)


class HTransformExp(_Exp):
    kind: Literal["check-h"]
    base: SamplerCfg
    candidate: SamplerCfg
    h: HarmonicCfg
    x: list[float]
    t: float = Field(gt=0)
    g: TestFnCfg
    n: int = Field(100_000, ge=2)
    n_se: float = Field(3.0, gt=0)


class MomentExp(_Exp):
    kind: Literal["check-moment"]
    map: MapCfg
    lambdas: list[float] = [1.0]
    t: float = Field(1.0, gt=0)
    n: int = Field(100_000, ge=2)
    n_se: float = Field(3.0, gt=0)


class IsotropyExp(_Exp):
    kind: Literal["check-isotropy"]
    sampler: SamplerCfg
    x0: list[float]
    t: float = Field(gt=0)
    angles: list[float] = Field(default_factory=lambda: [math.pi / 3])
    n: int = Field(10_000, ge=2)
    level: float = Field(0.01, gt=0, lt=1)

    def rotations(self):
        if len(self.x0) != 2:
            raise ConfigError("check-isotropy angles are planar rotations; x0 must be 2-dimensional")
        return [veritas.rotation_2d(a) for a in self.angles]


class ReversibilityExp(_Exp):
    kind: Literal["check-reversibility"]
    map: MapCfg
    pi: list[float] | None = None
    tol: float = Field(1e-10, gt=0)


Experiment = Annotated[
    Union[SimulateExp, ForwardExp, InverseExp, InvertExp, EmbedExp, ExponentExp, DualityExp, SelfDualityExp,
          HTransformExp, MomentExp, IsotropyExp, ReversibilityExp],
    Field(discriminator="kind"),
]


class _Root(Strict):
    experiment: Experiment


# ---------------------------------------------------------------------------
# parsing


def _locate(node, loc) -> tuple[int | None, str]:
    """Line and dotted path of a pydantic error location in the composed YAML tree.

    Location parts that do not appear in the document (union tags) are skipped.
    """
    line = node.start_mark.line + 1 if node is not None else None
    path = []
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == str(key):
                    line, node = k.start_mark.line + 1, v
                    path.append(str(key))
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
            path.append(str(key))
        elif isinstance(key, (int, str)) and not isinstance(node, yaml.ScalarNode):
            path.append(str(key))
    return line, ".".join(path)


def parse_config(text: str, kind: str | None = None):
    """Parse and validate an experiment document.

    ``kind`` (the CLI subcommand) fills in or must agree with the document's
    ``kind`` field.
    """
    try:
        data = yaml.safe_load(text)
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML syntax error: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("the config document must be a mapping")
    if kind is not None:
        if kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}")
        if data.get("kind", kind) != kind:
            raise ConfigError(f"config kind {data['kind']!r} does not match subcommand {kind!r}")
        data = {**data, "kind": kind}
    try:
        return _Root(experiment=data).experiment
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = list(err["loc"][1:])
            line, shown = _locate(node, loc)
            if err["type"] in ("missing", "extra_forbidden") and loc and str(loc[-1]) not in shown.split("."):
                shown = ".".join([shown, str(loc[-1])]) if shown else str(loc[-1])
            shown = shown or "<root>"
            where = f" (line {line})" if line is not None else ""
            msg = err["msg"]
            if err["type"] == "extra_forbidden":
                msg = f"unknown key {loc[-1]!r}"
            msgs.append(f"{shown}{where}: {msg}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(msgs)) from None


def serialize_config(cfg) -> str:
    """Resolved config (defaults filled in) as a YAML document."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)
