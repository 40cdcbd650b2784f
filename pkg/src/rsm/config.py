"""JSON run configuration.

One flat document holds the inference/ranking hyperparameters, with the
baseline solver, synthetic generator and experiment settings nested under
``baseline``, ``generator`` and ``experiment``. Unknown keys are rejected
at every level.
"""

import hashlib
import json
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .baselines import L1Config
from .errors import InvalidInputError
from .inference import Hyperparams, InferenceConfig
from .ranking import RankingConfig
from .synth import ExperimentSpec, GeneratorConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class BaselineSection(_Strict):
    lambda_l1: Optional[float] = None
    lambda_rel: float = 1e-2
    max_iters: int = 500
    tol: float = 1e-6
    epsilon: float = 1e-2
    reweight_rounds: int = 4


class GeneratorSection(_Strict):
    C: int = 10
    block_size: int = 4
    d: int = 60
    L: int = 5
    k: int = 3
    sigma_v: float = 0.0
    outlier_prob: float = 0.0
    outlier_scale: float = 1.0


class ExperimentSection(_Strict):
    methods: List[Literal["RSM", "ISR", "SRC"]] = ["RSM"]
    trials: int = 10
    sweep_L: Optional[List[int]] = None
    lambda_grid: Optional[List[float]] = None


class RunConfig(_Strict):
    lam: float = Field(1.0, alias="lambda")
    alpha_gamma: float = 0.0
    beta_gamma: float = 0.0
    alpha_delta: float = 0.0
    beta_delta: float = 0.0
    T: int = 100
    tol: float = 0.0
    zeta: float = 1.0
    tau: float = 1.0
    precision_floor: Optional[float] = None
    use_woodbury: Literal["auto", "always", "never"] = "auto"
    seed: int = 0
    residual_kind: Literal["SRID", "ISR-min"] = "SRID"
    max_ranks: Optional[int] = None
    normalize_columns: bool = False
    baseline: BaselineSection = BaselineSection()
    generator: GeneratorSection = GeneratorSection()
    experiment: ExperimentSection = ExperimentSection()

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(self.lam, self.alpha_gamma, self.beta_gamma, self.alpha_delta, self.beta_delta)

    def inference(self) -> InferenceConfig:
        return InferenceConfig(self.T, self.tol, self.precision_floor, self.use_woodbury)

    def ranking(self) -> RankingConfig:
        return RankingConfig(self.zeta, self.tau, self.residual_kind, self.max_ranks)

    def l1(self) -> L1Config:
        return L1Config(**self.baseline.model_dump())

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(**self.generator.model_dump(), seed=self.seed)

    def experiment_spec(self) -> ExperimentSpec:
        return ExperimentSpec(
            self.generator_config(),
            tuple(self.experiment.methods),
            self.hyperparams(),
            self.inference(),
            self.ranking(),
            self.l1(),
            self.normalize_columns,
        )

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(by_alias=True), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def parse_config(doc: dict, **overrides) -> RunConfig:
    """Validate ``doc`` (with non-None ``overrides`` applied on top)."""
    doc = dict(doc)
    for key, value in overrides.items():
        if value is None:
            continue
        if "." in key:
            section, sub = key.split(".", 1)
            doc[section] = dict(doc.get(section, {}), **{sub: value})
        else:
            doc[key] = value
    try:
        cfg = RunConfig.model_validate(doc)
        # run the dataclass invariant checks eagerly
        cfg.hyperparams(), cfg.inference(), cfg.ranking(), cfg.l1(), cfg.generator_config()
    except ValidationError as exc:
        raise InvalidInputError(f"invalid configuration: {exc}") from exc
    return cfg


def load_config(path=None, **overrides) -> RunConfig:
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise InvalidInputError("config must be a JSON object")
    return parse_config(doc, **overrides)
