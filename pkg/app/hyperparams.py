"""
Hyperparameter selection and feasibility checks for the DORE family

Strongly convex rule: α = 1/(2(C+1)), β = 1/(C_m+1), c = 4C(C+1)/n, η = 0 and
the largest step γ = 2/((μ+L)(1+2C/n)). Nonconvex rule: same α, β, c with
γ = 1/(12L(1+cα)(1+√(K/n))) for a horizon K.
"""

import logging
import math
from typing import List, Optional, Tuple

from app.models import ConditionCheck, HyperRule, Hyperparams, ValidationReport
from app.problems import ProblemConstants

logger = logging.getLogger(__name__)

RELATIVE_SLACK = 1e-12


class NeedMuError(ValueError):
    """Raised when a strongly convex rule is requested for μ = 0"""
    pass


class NeedHorizonError(ValueError):
    """Raised when the nonconvex rule is requested without an iteration horizon"""
    pass


class TheoremViolationError(ValueError):
    """Raised in strict mode when hyperparameters leave the provable region"""

    def __init__(self, report: ValidationReport):
        self.report = report
        names = ", ".join(check.name for check in report.violations)
        super().__init__(f"hyperparameters violate: {names}")


def _leq(value: float, bound: float) -> bool:
    return value <= bound + RELATIVE_SLACK * max(1.0, abs(bound))


def tracker_coefficient(C_q: float, n: int) -> float:
    """Smallest admissible Lyapunov coefficient c = 4C(C+1)/n"""
    return 4.0 * C_q * (C_q + 1.0) / n


def alpha_interval(C_q: float, n: int, c: float) -> Optional[Tuple[float, float]]:
    """
    Admissible α range [(1 − √D)/(2(C+1)), (1 + √D)/(2(C+1))] with D = 1 − 4C(C+1)/(nc).

    Returns:
        The interval, or None when D < 0 (complex-valued, infeasible)
    """
    if C_q == 0.0:
        return (0.0, 1.0)
    if c <= 0.0:
        return None
    discriminant = 1.0 - tracker_coefficient(C_q, n) / c
    if discriminant < -RELATIVE_SLACK:
        return None
    root = math.sqrt(max(discriminant, 0.0))
    return ((1.0 - root) / (2.0 * (C_q + 1.0)), (1.0 + root) / (2.0 * (C_q + 1.0)))


def default_hyperparameters(
    C_q: float,
    C_q_m: float,
    n: int,
    constants: ProblemConstants,
    horizon: Optional[int] = None,
    regime: Optional[HyperRule] = None,
) -> Hyperparams:
    """
    Default hyperparameters derived from the compressor constants.

    Args:
        C_q: Worker compressor constant
        C_q_m: Master compressor constant
        n: Number of workers
        constants: L, μ of the problem
        horizon: Iteration count K (needed by the nonconvex rule)
        regime: Force `strongly_convex` or `nonconvex`; by default μ > 0 selects strongly_convex

    Returns:
        Hyperparams with η = 0
    """
    if regime is None:
        regime = HyperRule.strongly_convex if constants.mu > 0 else HyperRule.nonconvex
    alpha = 1.0 / (2.0 * (C_q + 1.0))
    beta = 1.0 / (C_q_m + 1.0)
    c = tracker_coefficient(C_q, n)

    if regime == HyperRule.strongly_convex:
        if constants.mu <= 0:
            raise NeedMuError("the strongly convex step size needs mu > 0")
        gamma = 2.0 / ((constants.mu + constants.L) * (1.0 + 2.0 * C_q / n))
    else:
        if horizon is None or horizon < 1:
            raise NeedHorizonError("the nonconvex step size needs an iteration horizon K")
        gamma = 1.0 / (12.0 * constants.L * (1.0 + c * alpha) * (1.0 + math.sqrt(horizon / n)))

    return Hyperparams(alpha=alpha, beta=beta, gamma=gamma, eta=0.0, c=c)


def convergence_factor(C_q: float, C_q_m: float, n: int, constants: ProblemConstants) -> float:
    """(1 − ρ)⁻¹ of the strongly convex defaults: max(2(C+1), (C_m+1)(μ+L)²/(2μL)(1/2 + C/n))"""
    mu, L = constants.mu, constants.L
    if mu <= 0:
        raise NeedMuError("the convergence factor needs mu > 0")
    return max(
        2.0 * (C_q + 1.0),
        (C_q_m + 1.0) * (mu + L) ** 2 / (2.0 * mu * L) * (0.5 + C_q / n),
    )


def _model_residual_rate(hyper: Hyperparams, C_q_m: float) -> float:
    numerator = (hyper.eta ** 2 + hyper.eta) * C_q_m
    denominator = 1.0 - (C_q_m + 1.0) * hyper.beta
    if numerator == 0.0:
        return 0.0
    if denominator <= 0.0:
        return math.inf
    return numerator / denominator


def theorem_rho(hyper: Hyperparams, C_q_m: float, constants: ProblemConstants) -> float:
    """
    Contraction factor of the strongly convex Lyapunov function.

    ρ = max((η²+η)C_m/(1 − (C_m+1)β), 1 + ηβ − 2(1+η)βγμL/(μ+L), 1 − α)
    """
    mu, L = constants.mu, constants.L
    descent = 1.0 + hyper.eta * hyper.beta - (
        2.0 * (1.0 + hyper.eta) * hyper.beta * hyper.gamma * mu * L / (mu + L)
    )
    return max(_model_residual_rate(hyper, C_q_m), descent, 1.0 - hyper.alpha)


def neighborhood_radius(hyper: Hyperparams, n: int, rho: float, sigma_sq: float) -> float:
    """Asymptotic floor (1+η)(1+ncα)βγ²σ²/(n(1−ρ)) of the Lyapunov function"""
    if rho >= 1.0:
        return math.inf
    return (
        (1.0 + hyper.eta) * (1.0 + n * hyper.c * hyper.alpha) * hyper.beta
        * hyper.gamma ** 2 * sigma_sq / (n * (1.0 - rho))
    )


def nonconvex_gamma_bound(hyper: Hyperparams, C_q_m: float, L: float) -> float:
    """
    Largest γ covered by the nonconvex analysis:
    min((−1 + √(1 + 48L²β²(C_m+1)²/C_m))/(12Lβ(C_m+1)), 1/(6Lβ(1+cα)(C_m+1)))
    """
    scale = L * hyper.beta * (C_q_m + 1.0)
    second = 1.0 / (6.0 * scale * (1.0 + hyper.c * hyper.alpha))
    if C_q_m == 0.0:
        return second
    first = (-1.0 + math.sqrt(1.0 + 48.0 * scale ** 2 / C_q_m)) / (12.0 * scale)
    return min(first, second)


def lyapunov_weights(hyper: Hyperparams, C_q_m: float, n: int) -> Tuple[float, float]:
    """
    Coefficients of ‖q‖² and Σ‖h_i − ∇f_i(x*)‖² in V = w_q‖q‖² + ‖x̂ − x*‖² + w_h Σ‖h_i − h_i*‖²
    """
    w_q = hyper.beta * (1.0 - (C_q_m + 1.0) * hyper.beta)
    w_h = (1.0 + hyper.eta) * hyper.c * hyper.beta * hyper.gamma ** 2 / n
    return w_q, w_h


def _eta_bound(hyper: Hyperparams, C_q_m: float, constants: ProblemConstants) -> float:
    slack = 1.0 - (C_q_m + 1.0) * hyper.beta
    # β = 1/(C_m+1) rounds to a slack of ±1 ulp
    if abs(slack) <= RELATIVE_SLACK:
        slack = 0.0
    if C_q_m == 0.0:
        first = math.inf
    else:
        radicand = C_q_m ** 2 + 4.0 * slack
        first = (-C_q_m + math.sqrt(radicand)) / (2.0 * C_q_m) if radicand >= 0 else -math.inf
    mu, L = constants.mu, constants.L
    denominator = (mu + L) ** 2 * (1.0 + hyper.c * hyper.alpha) - 4.0 * mu * L
    second = 4.0 * mu * L / denominator if denominator > 0 else math.inf
    return min(first, second)


def validate_hyperparameters(
    hyper: Hyperparams,
    C_q: float,
    C_q_m: float,
    n: int,
    constants: ProblemConstants,
) -> ValidationReport:
    """
    Check hyperparameters against the convergence theorems.

    Report-only: violations are listed with their bounds and never raised here.
    Strongly convex problems (μ > 0) get the η bound, the γ window and ρ;
    μ = 0 gets the nonconvex step-size bound instead.

    Args:
        hyper: Hyperparameters to check
        C_q: Worker compressor constant
        C_q_m: Master compressor constant
        n: Number of workers
        constants: L, μ, σ² of the problem

    Returns:
        ValidationReport
    """
    checks: List[ConditionCheck] = []
    c_min = tracker_coefficient(C_q, n)
    checks.append(ConditionCheck(
        name="c_lower_bound",
        satisfied=_leq(c_min, hyper.c),
        value=hyper.c,
        lower=c_min,
        detail="c >= 4C(C+1)/n",
    ))

    interval = alpha_interval(C_q, n, hyper.c)
    if interval is None:
        checks.append(ConditionCheck(
            name="alpha_interval",
            satisfied=False,
            value=hyper.alpha,
            detail="alpha interval is complex-valued (1 - 4C(C+1)/(nc) < 0); infeasible",
        ))
    else:
        lower, upper = interval
        checks.append(ConditionCheck(
            name="alpha_interval",
            satisfied=_leq(lower, hyper.alpha) and _leq(hyper.alpha, upper),
            value=hyper.alpha,
            lower=lower,
            upper=upper,
            detail="(1 - sqrt(D))/(2(C+1)) <= alpha <= (1 + sqrt(D))/(2(C+1))",
        ))

    beta_max = 1.0 / (C_q_m + 1.0)
    checks.append(ConditionCheck(
        name="beta_upper_bound",
        satisfied=_leq(hyper.beta, beta_max),
        value=hyper.beta,
        lower=0.0,
        upper=beta_max,
        detail="0 < beta <= 1/(C_m+1)",
    ))

    if constants.mu <= 0:
        gamma_max = nonconvex_gamma_bound(hyper, C_q_m, constants.L)
        checks.append(ConditionCheck(
            name="gamma_nonconvex_bound",
            satisfied=_leq(hyper.gamma, gamma_max),
            value=hyper.gamma,
            upper=gamma_max,
            detail="gamma within the nonconvex step-size bound",
        ))
        return ValidationReport(checks=checks)

    mu, L = constants.mu, constants.L
    eta_max = _eta_bound(hyper, C_q_m, constants)
    window_empty = math.isnan(eta_max) or eta_max < 0
    checks.append(ConditionCheck(
        name="eta_upper_bound",
        satisfied=not window_empty and (hyper.eta < eta_max or hyper.eta == 0.0),
        value=hyper.eta,
        lower=0.0,
        upper=eta_max,
        detail="eta below both master-residual and step-window bounds",
    ))

    gamma_min = hyper.eta * (mu + L) / (2.0 * (1.0 + hyper.eta) * mu * L)
    gamma_max = 2.0 / ((1.0 + hyper.c * hyper.alpha) * (mu + L))
    checks.append(ConditionCheck(
        name="gamma_window",
        satisfied=_leq(gamma_min, hyper.gamma) and _leq(hyper.gamma, gamma_max),
        value=hyper.gamma,
        lower=gamma_min,
        upper=gamma_max,
        detail="eta(mu+L)/(2(1+eta)mu L) <= gamma <= 2/((1+c alpha)(mu+L))",
    ))

    rho = theorem_rho(hyper, C_q_m, constants)
    checks.append(ConditionCheck(
        name="rho_below_one",
        satisfied=rho < 1.0,
        value=rho,
        upper=1.0,
        detail="contraction factor rho < 1",
    ))
    return ValidationReport(
        checks=checks,
        rho=rho,
        convergence_factor=1.0 / (1.0 - rho) if rho < 1.0 else None,
        neighborhood=neighborhood_radius(hyper, n, rho, constants.sigma_sq) if rho < 1.0 else None,
        eta_window_empty=window_empty,
    )


def enforce(report: ValidationReport, strict: bool) -> None:
    """Raise in strict mode, otherwise log each violated condition"""
    if report.satisfied:
        return
    if strict:
        raise TheoremViolationError(report)
    for check in report.violations:
        logger.warning(
            f"⚠️  {check.name} violated: value={check.value} lower={check.lower} "
            f"upper={check.upper} ({check.detail})"
        )
