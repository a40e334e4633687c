"""Data models for the DORE simulator"""

import logging
import math
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

logger = logging.getLogger(__name__)


class BiasedOperatorError(ValueError):
    """Raised when a biased compressor is configured where an unbiased operator is required"""
    pass


# Enumerations
class CompressorKind(str, Enum):
    """Compression operator family"""
    identity = "identity"
    sparsify = "sparsify"
    pnorm = "pnorm"
    topk = "topk"


class RegularizerKind(str, Enum):
    """Regularizer R(x) family"""
    none = "none"
    l2 = "l2"
    l1 = "l1"


class ProblemKind(str, Enum):
    """Objective family"""
    ridge = "ridge"
    logistic = "logistic"
    nonconvex_logistic = "nonconvex_logistic"


class Method(str, Enum):
    """Distributed optimization method"""
    psgd = "psgd"
    qsgd = "qsgd"
    memsgd = "memsgd"
    diana = "diana"
    double_squeeze = "doublesqueeze"
    double_squeeze_topk = "doublesqueeze_topk"
    dore = "dore"
    dore_smooth = "dore_smooth"


class ScheduleKind(str, Enum):
    """Learning-rate schedule"""
    constant = "constant"
    piecewise = "piecewise"


class HyperRule(str, Enum):
    """How a preset derives its hyperparameters"""
    strongly_convex = "strongly_convex"
    nonconvex = "nonconvex"
    fixed = "fixed"


class RunStatus(str, Enum):
    """Outcome of one simulation run"""
    ok = "ok"
    diverged = "diverged"
    failed = "failed"


class JobStatus(str, Enum):
    """Job status enumeration"""
    pending = "pending"
    processing = "processing"
    completed = "completed"
    failed = "failed"


# Methods that broadcast an uncompressed payload
IDENTITY_BROADCAST_METHODS = {Method.psgd, Method.qsgd, Method.memsgd, Method.diana}

# Methods whose updates need unbiased worker compressors
UNBIASED_METHODS = {Method.dore, Method.dore_smooth, Method.diana}


# Compression models
class CompressorSpec(BaseModel):
    """Declarative description of a compression operator"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: CompressorKind = Field(CompressorKind.identity, description="Operator family")
    keep_prob: Optional[float] = Field(None, gt=0, le=1, description="Keep probability p of stochastic sparsification")
    p: Union[Literal["inf"], float] = Field("inf", description="Norm order of p-norm quantization; \"inf\" selects the max-norm")
    block_size: int = Field(256, ge=1, description="Block size b of p-norm quantization")
    k: Optional[int] = Field(None, ge=1, description="Number of kept entries for top-k")
    k_ratio: Optional[float] = Field(None, gt=0, le=1, description="Top-k size as a fraction of d (used when k is unset)")
    seed_stream: int = Field(0, ge=0, description="Logical RNG stream identifier mixed into the per-node key")

    @field_validator("p", mode="before")
    @classmethod
    def _normalize_p(cls, value: Any) -> Any:
        if isinstance(value, str) and value.lower() in ("inf", "infinity", "∞"):
            return "inf"
        if isinstance(value, (int, float)) and math.isinf(value):
            return "inf"
        return value

    @model_validator(mode="after")
    def _check_kind_parameters(self) -> "CompressorSpec":
        if self.kind == CompressorKind.sparsify and self.keep_prob is None:
            raise ValueError("sparsify requires keep_prob in (0, 1]")
        if self.kind == CompressorKind.pnorm and self.p != "inf" and self.p < 1:
            raise ValueError(f"pnorm requires p >= 1, got {self.p}")
        if self.kind == CompressorKind.topk and self.k is None and self.k_ratio is None:
            raise ValueError("topk requires k or k_ratio")
        return self

    @property
    def unbiased(self) -> bool:
        """Whether E[Q(x)] = x with a finite variance constant"""
        return self.kind != CompressorKind.topk

    def resolve_k(self, d: int) -> int:
        """Number of kept entries of a top-k operator on a length-d vector"""
        if self.k is not None:
            return self.k
        return max(1, math.ceil(self.k_ratio * d))

    @classmethod
    def identity(cls) -> "CompressorSpec":
        return cls(kind=CompressorKind.identity)

    @classmethod
    def pnorm(cls, p: Union[float, str] = "inf", block_size: int = 256) -> "CompressorSpec":
        return cls(kind=CompressorKind.pnorm, p=p, block_size=block_size)

    @classmethod
    def sparsify(cls, keep_prob: float) -> "CompressorSpec":
        return cls(kind=CompressorKind.sparsify, keep_prob=keep_prob)

    @classmethod
    def topk(cls, k: Optional[int] = None, k_ratio: Optional[float] = None) -> "CompressorSpec":
        return cls(kind=CompressorKind.topk, k=k, k_ratio=k_ratio)


class Regularizer(BaseModel):
    """Regularizer R(x): none, λ‖x‖² or λ‖x‖₁"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: RegularizerKind = Field(RegularizerKind.none, description="Regularizer family")
    lam: float = Field(0.0, ge=0, description="Regularization weight λ")


# Algorithm models
class Hyperparams(BaseModel):
    """Step sizes and Lyapunov coefficient of the DORE family"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: float = Field(..., gt=0, le=1, description="Worker tracker step α")
    beta: float = Field(..., gt=0, le=1, description="Model step β")
    gamma: float = Field(..., gt=0, description="Learning rate γ")
    eta: float = Field(0.0, ge=0, description="Error-compensation weight η")
    c: float = Field(0.0, ge=0, description="Lyapunov coefficient c (validation only)")


class AlgorithmConfig(BaseModel):
    """Method plus its compressors, hyperparameters and regularizer"""
    model_config = ConfigDict(extra="forbid")

    method: Method = Field(..., description="Optimization method")
    worker_compressor: CompressorSpec = Field(default_factory=CompressorSpec, description="Uplink compressor")
    master_compressor: CompressorSpec = Field(default_factory=CompressorSpec, description="Downlink compressor")
    hyper: Hyperparams = Field(..., description="Hyperparameters")
    regularizer: Regularizer = Field(default_factory=Regularizer, description="Regularizer R(x)")

    @model_validator(mode="after")
    def _check_method_constraints(self) -> "AlgorithmConfig":
        if self.method in UNBIASED_METHODS and not self.worker_compressor.unbiased:
            raise BiasedOperatorError(f"{self.method.value} requires an unbiased worker compressor")
        if self.method in (Method.dore, Method.dore_smooth) and not self.master_compressor.unbiased:
            raise BiasedOperatorError(f"{self.method.value} requires an unbiased master compressor")
        if self.method == Method.dore_smooth and self.regularizer.kind != RegularizerKind.none:
            raise ValueError("dore_smooth requires regularizer kind 'none'")
        if self.method == Method.double_squeeze_topk and (
            self.worker_compressor.kind != CompressorKind.topk
            or self.master_compressor.kind != CompressorKind.topk
        ):
            raise ValueError("doublesqueeze_topk requires top-k compressors on both sides")

        if self.method == Method.psgd and self.worker_compressor.kind != CompressorKind.identity:
            logger.debug("psgd: forcing identity worker compressor")
            self.worker_compressor = CompressorSpec.identity()
        if self.method in IDENTITY_BROADCAST_METHODS and self.master_compressor.kind != CompressorKind.identity:
            logger.debug(f"{self.method.value}: forcing identity master compressor")
            self.master_compressor = CompressorSpec.identity()
        return self


# Problem and run models
class ProblemSpec(BaseModel):
    """Synthetic problem parameters"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ProblemKind = Field(ProblemKind.ridge, description="Objective family")
    m: int = Field(..., ge=1, description="Number of samples (rows of A)")
    d: int = Field(..., ge=1, description="Model dimension")
    noise_std: float = Field(0.0, ge=0, description="Std of the Gaussian target noise (ridge)")
    l2: float = Field(0.0, ge=0, description="Smooth ridge weight λ inside each f_i")
    lambda_nc: float = Field(0.0, ge=0, description="Weight of the nonconvex penalty Σ x²/(1+x²)")
    label_flip: float = Field(0.1, ge=0, lt=0.5, description="Label flip probability (logistic)")
    normalize: bool = Field(True, description="Average each f_i over its shard (false reproduces ‖Ax−b‖²)")
    data_seed: int = Field(0, ge=0, description="Seed of the data synthesis")


class ScheduleSpec(BaseModel):
    """Learning-rate schedule γ_k"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ScheduleKind = Field(ScheduleKind.constant, description="Schedule family")
    factor: float = Field(0.1, gt=0, lt=1, description="Decay factor applied at each milestone")
    milestones: List[int] = Field(default_factory=list, description="Iterations at which γ is multiplied by factor")

    def gamma_at(self, gamma: float, iteration: int) -> float:
        """Learning rate used by the given (0-based) iteration"""
        if self.kind == ScheduleKind.constant:
            return gamma
        passed = sum(1 for milestone in self.milestones if iteration >= milestone)
        return gamma * self.factor ** passed


class RunConfig(BaseModel):
    """Fully-resolved description of one simulation run"""
    model_config = ConfigDict(extra="forbid")

    preset: str = Field("custom", description="Preset name, used for the output layout")
    algorithm: AlgorithmConfig = Field(..., description="Method configuration")
    problem: ProblemSpec = Field(..., description="Problem synthesis parameters")
    n_workers: int = Field(..., ge=1, description="Number of workers n")
    iterations: int = Field(..., ge=1, description="Number of iterations K")
    batch_size: Optional[int] = Field(None, ge=1, description="Minibatch size; null means full gradients")
    schedule: ScheduleSpec = Field(default_factory=ScheduleSpec, description="Learning-rate schedule")
    seed: int = Field(0, ge=0, description="Global seed of the algorithm randomness")
    cadence: int = Field(1, ge=1, description="Record a trace row every `cadence` iterations")

    @model_validator(mode="after")
    def _check_partition(self) -> "RunConfig":
        if self.problem.m < self.n_workers:
            raise ValueError(f"m={self.problem.m} must be >= n_workers={self.n_workers}")
        return self


# Hyperparameter validation models
class ConditionCheck(BaseModel):
    """One convergence condition with its computed bounds"""
    name: str = Field(..., description="Condition identifier")
    satisfied: bool = Field(..., description="Whether the condition holds")
    value: Optional[float] = Field(None, description="Value being checked")
    lower: Optional[float] = Field(None, description="Lower bound, if any")
    upper: Optional[float] = Field(None, description="Upper bound, if any")
    detail: str = Field("", description="Human-readable explanation")


class ValidationReport(BaseModel):
    """Outcome of checking hyperparameters against the convergence theorems"""
    checks: List[ConditionCheck] = Field(default_factory=list, description="Individual conditions")
    rho: Optional[float] = Field(None, description="Contraction factor ρ (strongly convex case)")
    convergence_factor: Optional[float] = Field(None, description="(1−ρ)⁻¹ when ρ < 1")
    neighborhood: Optional[float] = Field(None, description="Asymptotic floor (1+η)(1+ncα)βγ²σ²/(n(1−ρ))")
    eta_window_empty: bool = Field(False, description="True when no η satisfies the η bounds")

    @computed_field
    @property
    def satisfied(self) -> bool:
        return all(check.satisfied for check in self.checks)

    @property
    def violations(self) -> List[ConditionCheck]:
        return [check for check in self.checks if not check.satisfied]


# Preset and config-file models
class HyperPolicy(BaseModel):
    """Preset rule for hyperparameters, with optional explicit values"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    rule: HyperRule = Field(HyperRule.strongly_convex, description="Derivation rule")
    alpha: Optional[float] = Field(None, gt=0, le=1, description="Explicit α")
    beta: Optional[float] = Field(None, gt=0, le=1, description="Explicit β")
    gamma: Optional[float] = Field(None, gt=0, description="Explicit γ")
    gamma_times_L: Optional[float] = Field(None, gt=0, description="γ·L; γ is derived from the estimated L")
    eta: Optional[float] = Field(None, ge=0, description="Explicit η")
    c: Optional[float] = Field(None, ge=0, description="Explicit c")


class ExperimentPreset(BaseModel):
    """Named experiment: a run template plus the methods and seeds of its comparison batch"""
    model_config = ConfigDict(extra="forbid")

    name: str = Field(..., description="Unique preset name")
    description: str = Field("", description="What the preset reproduces")
    problem: ProblemSpec = Field(..., description="Problem synthesis parameters")
    regularizer: Regularizer = Field(default_factory=Regularizer, description="Regularizer R(x)")
    n_workers: int = Field(..., ge=1, description="Number of workers")
    iterations: int = Field(..., ge=1, description="Iterations K")
    batch_size: Optional[int] = Field(None, ge=1, description="Minibatch size; null means full gradients")
    worker_compressor: CompressorSpec = Field(default_factory=CompressorSpec, description="Uplink compressor")
    master_compressor: CompressorSpec = Field(default_factory=CompressorSpec, description="Downlink compressor")
    topk_ratio: float = Field(0.25, gt=0, le=1, description="k/d used by doublesqueeze_topk")
    hyper: HyperPolicy = Field(default_factory=HyperPolicy, description="Hyperparameter rule")
    schedule: ScheduleSpec = Field(default_factory=ScheduleSpec, description="Learning-rate schedule")
    cadence: int = Field(1, ge=1, description="Metric cadence")
    methods: List[Method] = Field(default_factory=list, description="Methods of the comparison batch")
    seeds: List[int] = Field(default_factory=lambda: [0], description="Seeds of the comparison batch")


class HyperOverrides(BaseModel):
    """Hyperparameter overrides accepted in config files"""
    model_config = ConfigDict(extra="forbid")

    alpha: Optional[float] = Field(None, gt=0, le=1, description="α")
    beta: Optional[float] = Field(None, gt=0, le=1, description="β")
    gamma: Optional[float] = Field(None, gt=0, description="γ")
    eta: Optional[float] = Field(None, ge=0, description="η")
    c: Optional[float] = Field(None, ge=0, description="c")


class PresetOverrides(BaseModel):
    """Fields a config file may override on top of its preset"""
    model_config = ConfigDict(extra="forbid")

    iterations: Optional[int] = Field(None, ge=1, description="Iterations K")
    batch_size: Optional[int] = Field(None, ge=1, description="Minibatch size")
    block_size: Optional[int] = Field(None, ge=1, description="Block size of both p-norm compressors")
    worker_compressor: Optional[CompressorSpec] = Field(None, description="Uplink compressor")
    master_compressor: Optional[CompressorSpec] = Field(None, description="Downlink compressor")
    regularizer: Optional[Regularizer] = Field(None, description="Regularizer")
    schedule: Optional[ScheduleSpec] = Field(None, description="Learning-rate schedule")
    cadence: Optional[int] = Field(None, ge=1, description="Metric cadence")
    hyper: Optional[HyperOverrides] = Field(None, description="Hyperparameter overrides")


class RunFile(PresetOverrides):
    """Config file describing a single run"""
    preset: str = Field(..., description="Preset name")
    method: Method = Field(..., description="Method to run")
    seed: int = Field(0, ge=0, description="Seed")


class ComparisonFile(PresetOverrides):
    """Config file describing a comparison batch"""
    preset: str = Field(..., description="Preset name")
    methods: List[Method] = Field(..., description="Methods to compare")
    seeds: Optional[List[int]] = Field(None, description="Seeds (defaults to the preset's)")


# Run summary models
class RunSummary(BaseModel):
    """One row of a comparison summary"""
    method: Method = Field(..., description="Method")
    seed: int = Field(..., description="Seed")
    status: RunStatus = Field(..., description="ok, diverged or failed")
    final_loss: Optional[float] = Field(None, description="Training loss at the last recorded row")
    final_dist_sq: Optional[float] = Field(None, description="‖x̂ − x*‖² at the last recorded row")
    final_grad_norm_sq: Optional[float] = Field(None, description="‖∇f(x̂)‖² at the last recorded row")
    total_bits: Optional[int] = Field(None, description="bits_up + bits_down")
    reduction: Optional[float] = Field(None, description="Fraction saved versus uncompressed traffic")
    diverged_at: Optional[int] = Field(None, description="Iteration of divergence")
    trace_path: Optional[str] = Field(None, description="CSV path")
    error: Optional[str] = Field(None, description="Failure message")


class ComparisonSummary(BaseModel):
    """Result of a comparison batch"""
    preset: str = Field(..., description="Preset name")
    runs: List[RunSummary] = Field(default_factory=list, description="Per-run rows")

    @property
    def failed(self) -> List[RunSummary]:
        return [run for run in self.runs if run.status == RunStatus.failed]

    @property
    def diverged(self) -> List[RunSummary]:
        return [run for run in self.runs if run.status == RunStatus.diverged]


# Job API models
class ComparisonRequest(BaseModel):
    """Request body for launching a comparison batch"""
    model_config = ConfigDict(extra="forbid")

    preset: str = Field(..., description="Preset name")
    methods: List[Method] = Field(..., min_length=1, description="Methods to compare")
    seeds: Optional[List[int]] = Field(None, description="Seeds (defaults to the preset's)")
    iterations: Optional[int] = Field(None, ge=1, description="Override of the preset's iteration count")


class JobResponse(BaseModel):
    """Response for async job creation"""
    jobId: str = Field(..., description="Job ID for status tracking")
    status: JobStatus = Field(..., description="Initial job status")
    message: str = Field(..., description="Status message")


class JobStatusRecord(BaseModel):
    """Job status record schema"""
    jobId: str = Field(..., description="Unique job ID")
    status: JobStatus = Field(..., description="Current job status")
    preset: str = Field(..., description="Preset of the batch")
    createdAt: int = Field(..., description="Creation timestamp (ms)")
    startedAt: Optional[int] = Field(None, description="Start timestamp (ms)")
    completedAt: Optional[int] = Field(None, description="Completion timestamp (ms)")
    error: Optional[str] = Field(None, description="Error message if failed")
    result: Optional[Dict[str, Any]] = Field(None, description="Comparison summary if completed")


class JobListResponse(BaseModel):
    """Job list response"""
    jobs: List[JobStatusRecord] = Field(..., description="List of jobs")


class PresetListResponse(BaseModel):
    """Available presets"""
    presets: List[ExperimentPreset] = Field(..., description="Registered presets")
