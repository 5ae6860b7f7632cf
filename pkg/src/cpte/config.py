"""Strict run configuration (YAML) shared by the CLI commands."""

from typing import List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import synthgen
from .distest.registry import ESTIMATORS, EstimatorSpec
from .evalharness import METHODS, ExperimentConfig
from .preference import PreferenceFunction

MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    """Configuration file is unreadable or violates the schema."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConstantsModel(_Strict):
    sigma: float = 0.2
    mu_s: float = 0.3
    mu_low: float = 0.0
    mu_high: float = 3.0
    b: float = Field(0.85, gt=0, lt=1)


class DgpModel(_Strict):
    kind: Literal["synthetic", "hierarchical"] = "synthetic"
    n: int = Field(1000, ge=2)
    heterogeneous: bool = False
    observational: bool = False
    correlation_target: float = Field(0.0, gt=-1, lt=1)
    beta_seed: Optional[int] = Field(None, ge=0, le=MAX_SEED)
    constants: ConstantsModel = Field(default_factory=ConstantsModel)
    primary_coef_scale: float = 0.3
    primary_intercepts: Tuple[float, float] = (1.2, 1.4)
    secondary_coef_scale: float = 0.3
    secondary_intercepts: Tuple[float, float] = (0.0, 0.2)
    secondary_sd: float = Field(1.0, gt=0)

    def build(self, seed, n=None):
        n = self.n if n is None else n
        if self.kind == "hierarchical":
            return synthgen.HierarchicalConfig(
                n=n, observational=self.observational, seed=seed, beta_seed=self.beta_seed,
                primary_coef_scale=self.primary_coef_scale, primary_intercepts=tuple(self.primary_intercepts),
                secondary_coef_scale=self.secondary_coef_scale,
                secondary_intercepts=tuple(self.secondary_intercepts), secondary_sd=self.secondary_sd)
        return synthgen.SyntheticConfig(
            n=n, heterogeneous=self.heterogeneous, observational=self.observational,
            correlation_target=self.correlation_target, seed=seed, beta_seed=self.beta_seed,
            constants=synthgen.NoiseConstants(**self.constants.model_dump()))


class PreferenceModel(_Strict):
    kind: str = "pns_indicator"
    orientation: List[int] = Field(default_factory=lambda: [1])

    @model_validator(mode="after")
    def _valid(self):
        self.build()
        return self

    def build(self):
        return PreferenceFunction(self.kind, tuple(self.orientation))


class EstimatorModel(_Strict):
    kind: str = "knn"
    k: Optional[int] = Field(None, ge=1)
    k_rule: Literal["one", "log", "2log"] = "log"
    grid_size: int = Field(256, ge=2)
    samples: int = Field(1000, ge=1)
    quantile_step: float = Field(0.025, gt=0, lt=0.5)
    forest: Optional[dict] = None
    primary_k: int = Field(11, ge=1)
    secondary: Literal["linear_quantile", "qrf"] = "linear_quantile"

    @field_validator("kind")
    @classmethod
    def _known(cls, v):
        if v not in ESTIMATORS:
            raise ValueError(f"unknown estimator {v!r}; expected one of {ESTIMATORS}")
        return v

    def build(self):
        return EstimatorSpec(**self.model_dump())


class PolicyModel(_Strict):
    methods: List[Literal[METHODS]] = Field(default_factory=lambda: ["otr_plugin"])
    learn_method: Literal[METHODS] = "one_step_optim"
    policy_class: Literal["tree", "linear"] = "tree"
    tree_depth: Literal[1, 2] = 1
    crossfit_k: int = Field(5, ge=2)
    propensity: Literal["fit", "fixed", "oracle"] = "fit"


class ExperimentModel(_Strict):
    n_grid: List[int] = Field(default_factory=lambda: [30, 100, 1000, 10000])
    repetitions: int = Field(50, ge=1)
    eval_n: int = Field(10000, ge=1)
    bootstrap_b: int = Field(1000, ge=1)
    evaluate_one_step: bool = False


class IngestModel(_Strict):
    treatment: str = "t"
    outcomes: List[str] = Field(default_factory=list)
    orientation: Optional[List[int]] = None
    categorical: List[str] = Field(default_factory=list)
    continuous: List[str] = Field(default_factory=list)


class RunConfig(_Strict):
    seed: int = Field(0, ge=0, le=MAX_SEED)
    threads: int = Field(1, ge=1)
    dgp: DgpModel = Field(default_factory=DgpModel)
    preference: PreferenceModel = Field(default_factory=PreferenceModel)
    estimators: List[EstimatorModel] = Field(default_factory=lambda: [EstimatorModel()])
    policy: PolicyModel = Field(default_factory=PolicyModel)
    experiment: ExperimentModel = Field(default_factory=ExperimentModel)
    ingest: IngestModel = Field(default_factory=IngestModel)

    def experiment_config(self):
        return ExperimentConfig(
            dgp=self.dgp.build(self.seed), estimators=[e.build() for e in self.estimators],
            methods=list(self.policy.methods), n_grid=list(self.experiment.n_grid),
            repetitions=self.experiment.repetitions, eval_n=self.experiment.eval_n, master_seed=self.seed,
            bootstrap_b=self.experiment.bootstrap_b, policy_class=self.policy.policy_class,
            tree_depth=self.policy.tree_depth, crossfit_k=self.policy.crossfit_k,
            propensity=self.policy.propensity, preference=self.preference.build(),
            evaluate_one_step=self.experiment.evaluate_one_step, threads=self.threads)

    def to_yaml(self):
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=True)


def _format_errors(exc):
    parts = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{path}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data):
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_format_errors(exc)}") from None


def load_config(path=None):
    """Read and validate a YAML config; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    return parse_config(data)


def write_echo(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cfg.to_yaml())

