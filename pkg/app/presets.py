"""
Experiment presets and their resolution into RunConfigs

A preset is a run template (problem, workers, compressors, hyperparameter
rule) plus the methods and seeds of its comparison batch. Every method of a
batch shares the same hyperparameters; only the compressors differ, according
to what each method compresses.
"""

import logging
from typing import Dict, List, Optional, Tuple

from app.compression import compressor_constant
from app.hyperparams import default_hyperparameters, tracker_coefficient
from app.models import (
    AlgorithmConfig,
    CompressorKind,
    CompressorSpec,
    ExperimentPreset,
    HyperPolicy,
    HyperRule,
    Hyperparams,
    Method,
    PresetOverrides,
    ProblemKind,
    ProblemSpec,
    Regularizer,
    RegularizerKind,
    RunConfig,
)
from app.problems import Problem, ProblemConstants, build_problem

logger = logging.getLogger(__name__)

ALL_METHODS = list(Method)
PROX_METHODS = [method for method in Method if method != Method.dore_smooth]
CORE_METHODS = [
    Method.psgd,
    Method.qsgd,
    Method.memsgd,
    Method.diana,
    Method.double_squeeze,
    Method.dore,
]

FIXED_ALPHA = 0.1
FIXED_BETA = 1.0
FIXED_ETA = 1.0


class UnknownPresetError(KeyError):
    """Raised when a preset name is not registered"""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown preset '{name}' (known: {', '.join(sorted(PRESETS))})")


# =============================================================================
# Registry
# =============================================================================

_RIDGE_SMALL = ProblemSpec(kind=ProblemKind.ridge, m=240, d=100, noise_std=0.1, l2=1.0, data_seed=0)

_RIDGE_LARGE = ProblemSpec(
    kind=ProblemKind.ridge, m=1200, d=500, noise_std=0.1, l2=1.0, normalize=False, data_seed=0,
)

PRESETS: Dict[str, ExperimentPreset] = {
    preset.name: preset
    for preset in [
        ExperimentPreset(
            name="ridge-small",
            description="240x100 ridge regression on 10 workers with full gradients",
            problem=_RIDGE_SMALL,
            n_workers=10,
            iterations=2000,
            worker_compressor=CompressorSpec.pnorm("inf", 256),
            master_compressor=CompressorSpec.pnorm("inf", 256),
            hyper=HyperPolicy(rule=HyperRule.strongly_convex),
            methods=ALL_METHODS,
            seeds=[1, 2, 3],
        ),
        ExperimentPreset(
            name="ridge-small-l1",
            description="ridge-small with an L1 regularizer handled by the proximal step",
            problem=_RIDGE_SMALL,
            regularizer=Regularizer(kind=RegularizerKind.l1, lam=0.01),
            n_workers=10,
            iterations=2000,
            worker_compressor=CompressorSpec.pnorm("inf", 256),
            master_compressor=CompressorSpec.pnorm("inf", 256),
            hyper=HyperPolicy(rule=HyperRule.strongly_convex),
            methods=PROX_METHODS,
            seeds=[1, 2, 3],
        ),
        ExperimentPreset(
            name="logistic-small",
            description="Strongly convex logistic regression, 600x40 on 6 workers",
            problem=ProblemSpec(kind=ProblemKind.logistic, m=600, d=40, l2=0.01, data_seed=0),
            n_workers=6,
            iterations=1000,
            worker_compressor=CompressorSpec.pnorm("inf", 256),
            master_compressor=CompressorSpec.pnorm("inf", 256),
            hyper=HyperPolicy(rule=HyperRule.strongly_convex),
            methods=CORE_METHODS,
            seeds=[1, 2, 3],
        ),
        ExperimentPreset(
            name="nonconvex-small",
            description="Nonconvex logistic surrogate, d=50 on 10 workers with minibatch 8",
            problem=ProblemSpec(
                kind=ProblemKind.nonconvex_logistic, m=2000, d=50, lambda_nc=0.1, l2=0.0, data_seed=0,
            ),
            n_workers=10,
            iterations=2000,
            batch_size=8,
            worker_compressor=CompressorSpec.pnorm("inf", 4),
            master_compressor=CompressorSpec.pnorm("inf", 4),
            hyper=HyperPolicy(rule=HyperRule.nonconvex, beta=1.0),
            cadence=10,
            methods=CORE_METHODS,
            seeds=[0, 1, 2, 3, 4],
        ),
        ExperimentPreset(
            name="ridge-large",
            description="Unnormalized 1200x500 least squares on 20 workers, alpha=0.1 beta=1 eta=1",
            problem=_RIDGE_LARGE,
            n_workers=20,
            iterations=2000,
            worker_compressor=CompressorSpec.pnorm("inf", 256),
            master_compressor=CompressorSpec.pnorm("inf", 256),
            hyper=HyperPolicy(
                rule=HyperRule.fixed, alpha=FIXED_ALPHA, beta=FIXED_BETA, eta=FIXED_ETA, gamma_times_L=0.5,
            ),
            cadence=10,
            methods=CORE_METHODS + [Method.double_squeeze_topk],
            seeds=[1],
        ),
        ExperimentPreset(
            name="ridge-large-fast",
            description="ridge-large at twice the learning rate",
            problem=_RIDGE_LARGE,
            n_workers=20,
            iterations=2000,
            worker_compressor=CompressorSpec.pnorm("inf", 256),
            master_compressor=CompressorSpec.pnorm("inf", 256),
            hyper=HyperPolicy(
                rule=HyperRule.fixed, alpha=FIXED_ALPHA, beta=FIXED_BETA, eta=FIXED_ETA, gamma_times_L=1.0,
            ),
            cadence=10,
            methods=CORE_METHODS + [Method.double_squeeze_topk],
            seeds=[1],
        ),
    ]
}


def get_preset(name: str) -> ExperimentPreset:
    """Look up a registered preset"""
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPresetError(name) from None


def list_presets() -> List[ExperimentPreset]:
    return [PRESETS[name] for name in sorted(PRESETS)]


# =============================================================================
# Overrides
# =============================================================================

def _with_block_size(spec: CompressorSpec, block_size: int) -> CompressorSpec:
    if spec.kind != CompressorKind.pnorm:
        return spec
    return spec.model_copy(update={"block_size": block_size})


def apply_overrides(preset: ExperimentPreset, overrides: Optional[PresetOverrides]) -> ExperimentPreset:
    """
    Apply config-file overrides on top of a preset.

    Args:
        preset: Base preset
        overrides: Fields set in the config file (unset fields are ignored)

    Returns:
        A new preset; the registry entry is left untouched
    """
    if overrides is None:
        return preset
    updates = {}
    for name in ("iterations", "batch_size", "worker_compressor", "master_compressor",
                 "regularizer", "schedule", "cadence"):
        value = getattr(overrides, name)
        if value is not None:
            updates[name] = value
    if overrides.hyper is not None:
        explicit = overrides.hyper.model_dump(exclude_none=True)
        updates["hyper"] = preset.hyper.model_copy(update=explicit)

    resolved = preset.model_copy(update=updates, deep=True)
    if overrides.block_size is not None:
        resolved = resolved.model_copy(update={
            "worker_compressor": _with_block_size(resolved.worker_compressor, overrides.block_size),
            "master_compressor": _with_block_size(resolved.master_compressor, overrides.block_size),
        })
    return resolved


# =============================================================================
# Resolution
# =============================================================================

def method_compressors(preset: ExperimentPreset, method: Method) -> Tuple[CompressorSpec, CompressorSpec]:
    """
    Compressors a method runs with inside a preset.

    PSGD sends everything uncompressed; QSGD, MEM-SGD and DIANA compress the
    upload only; DoubleSqueeze and DORE compress both links with the preset's
    operators; the top-k DoubleSqueeze variant keeps `topk_ratio·d` entries.
    """
    identity = CompressorSpec.identity()
    if method == Method.psgd:
        return identity, identity
    if method in (Method.qsgd, Method.memsgd, Method.diana):
        return preset.worker_compressor, identity
    if method == Method.double_squeeze_topk:
        topk = CompressorSpec.topk(k_ratio=preset.topk_ratio)
        return topk, topk
    return preset.worker_compressor, preset.master_compressor


def resolve_hyperparameters(
    policy: HyperPolicy,
    C_q: float,
    C_q_m: float,
    n: int,
    constants: ProblemConstants,
    horizon: int,
) -> Hyperparams:
    """
    Turn a preset's hyperparameter rule into concrete values.

    Args:
        policy: Rule plus explicit values (explicit values win)
        C_q: Worker compressor constant of the preset
        C_q_m: Master compressor constant of the preset
        n: Number of workers
        constants: L, μ of the problem
        horizon: Iteration count K

    Returns:
        Hyperparams shared by every method of the preset
    """
    if policy.rule == HyperRule.fixed:
        values = {
            "alpha": FIXED_ALPHA,
            "beta": FIXED_BETA,
            "eta": FIXED_ETA,
            "c": tracker_coefficient(C_q, n),
        }
    else:
        values = default_hyperparameters(C_q, C_q_m, n, constants, horizon=horizon, regime=policy.rule).model_dump()

    if policy.gamma_times_L is not None:
        values["gamma"] = policy.gamma_times_L / constants.L
    for name in ("alpha", "beta", "gamma", "eta", "c"):
        explicit = getattr(policy, name)
        if explicit is not None:
            values[name] = explicit
    if "gamma" not in values:
        raise ValueError("the fixed rule needs gamma or gamma_times_L")
    return Hyperparams(**values)


def preset_constants(preset: ExperimentPreset, problem: Problem) -> Tuple[float, float]:
    """C_q and C_q^m of the preset's own compressors"""
    for spec in (preset.worker_compressor, preset.master_compressor):
        if not spec.unbiased:
            raise ValueError(f"preset '{preset.name}' needs unbiased compressors to derive hyperparameters")
    return (
        compressor_constant(preset.worker_compressor, problem.d),
        compressor_constant(preset.master_compressor, problem.d),
    )


def preset_problem(preset: ExperimentPreset) -> Problem:
    return build_problem(preset.problem, preset.n_workers, preset.regularizer, preset.batch_size)


def resolve_run_config(preset: ExperimentPreset, method: Method, seed: int) -> RunConfig:
    """
    Fully-resolved RunConfig of one (method, seed) cell of a preset.

    Raises:
        ValueError: (pydantic ValidationError) when the method is invalid for the preset
    """
    problem = preset_problem(preset)
    C_q, C_q_m = preset_constants(preset, problem)
    hyper = resolve_hyperparameters(preset.hyper, C_q, C_q_m, preset.n_workers, problem.constants, preset.iterations)
    worker, master = method_compressors(preset, method)
    algorithm = AlgorithmConfig(
        method=method,
        worker_compressor=worker,
        master_compressor=master,
        hyper=hyper,
        regularizer=preset.regularizer,
    )
    return RunConfig(
        preset=preset.name,
        algorithm=algorithm,
        problem=preset.problem,
        n_workers=preset.n_workers,
        iterations=preset.iterations,
        batch_size=preset.batch_size,
        schedule=preset.schedule,
        seed=seed,
        cadence=preset.cadence,
    )
