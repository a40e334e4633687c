"""
Synthetic finite-sum objectives f = (1/n) Σ f_i + R split across worker shards

Each worker objective is

    f_i(x) = s_i Σ_{rows r of shard i} ℓ_r(x) + l2‖x‖² + λ_nc Σ_j x_j²/(1 + x_j²)

with ℓ_r the squared residual (ridge) or the logistic loss, and s_i = 1/m_i when
the problem is normalized, n otherwise (so that (1/n) Σ f_i = ‖Ax − b‖² + ...).
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy import linalg
from scipy.special import expit

from app.compression import DenseVector
from app.models import ProblemKind, ProblemSpec, Regularizer, RegularizerKind
from app.rng import RandomStream, StreamPurpose, random_stream

logger = logging.getLogger(__name__)

EIGEN_TOLERANCE = 1e-6
EIGEN_MAX_ITER = 20_000
VARIANCE_DRAWS = 1000
FISTA_TOLERANCE = 1e-12
FISTA_MAX_ITER = 200_000
NEWTON_MAX_ITER = 100
SINGULAR_CONDITION = 1e12


class SingularSystemError(ArithmeticError):
    """Raised when the optimality system of a problem is numerically singular"""
    pass


class ConvergenceFailureError(RuntimeError):
    """Raised when an iterative solver exhausts its iteration budget"""
    pass


# =============================================================================
# Data containers
# =============================================================================

@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable design matrix and targets of one synthetic problem"""
    kind: ProblemKind
    features: NDArray[np.float64]
    targets: NDArray[np.float64]
    l2: float = 0.0
    lambda_nc: float = 0.0
    normalize: bool = True

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=np.float64)
        targets = np.array(self.targets, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise ValueError(f"features must be a non-empty m × d matrix, got shape {features.shape}")
        if targets.shape != (features.shape[0],):
            raise ValueError(f"targets must have length {features.shape[0]}, got shape {targets.shape}")
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
            raise ValueError("dataset contains NaN or Inf entries")
        if self.kind != ProblemKind.ridge and not np.all(np.isin(targets, (-1.0, 1.0))):
            raise ValueError("logistic targets must be ±1")
        if self.l2 < 0 or self.lambda_nc < 0:
            raise ValueError("l2 and lambda_nc must be nonnegative")
        features.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class Shard:
    """Contiguous row range [start, stop) of a dataset owned by one worker"""
    dataset: Dataset
    index: int
    start: int
    stop: int
    n_shards: int

    @property
    def rows(self) -> int:
        return self.stop - self.start

    @property
    def features(self) -> NDArray[np.float64]:
        return self.dataset.features[self.start:self.stop]

    @property
    def targets(self) -> NDArray[np.float64]:
        return self.dataset.targets[self.start:self.stop]

    @property
    def scale(self) -> float:
        """Weight s_i of the shard's data term"""
        if self.dataset.normalize:
            return 1.0 / self.rows
        return float(self.n_shards)


@dataclass(frozen=True)
class ProblemConstants:
    """Smoothness L, strong convexity μ and gradient-noise bound σ²"""
    L: float
    mu: float
    sigma_sq: float = 0.0

    def __post_init__(self) -> None:
        if self.L <= 0 or self.mu < 0 or self.sigma_sq < 0:
            raise ValueError(f"invalid constants L={self.L}, mu={self.mu}, sigma_sq={self.sigma_sq}")
        if self.mu > self.L * (1 + 1e-9):
            raise ValueError(f"mu={self.mu} exceeds L={self.L}")


def partition(dataset: Dataset, n_workers: int) -> Tuple[Shard, ...]:
    """
    Split rows evenly into contiguous shards whose sizes differ by at most one.

    Args:
        dataset: Dataset to split
        n_workers: Number of shards

    Returns:
        Shards in worker-index order
    """
    if n_workers < 1 or dataset.m < n_workers:
        raise ValueError(f"cannot split m={dataset.m} rows across {n_workers} workers")
    base, extra = divmod(dataset.m, n_workers)
    shards = []
    start = 0
    for index in range(n_workers):
        stop = start + base + (1 if index < extra else 0)
        shards.append(Shard(dataset, index, start, stop, n_workers))
        start = stop
    return tuple(shards)


# =============================================================================
# Synthesis
# =============================================================================

def _logistic_data(
    rng: RandomStream,
    m: int,
    d: int,
    label_flip: float,
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    features = rng.standard_normal((m, d))
    separator = rng.standard_normal(d)
    targets = np.where(features @ separator >= 0, 1.0, -1.0)
    flips = rng.random(m) < label_flip
    targets[flips] *= -1.0
    return features, targets


def synthesize_ridge(
    m: int,
    d: int,
    n_workers: int,
    noise_std: float,
    lam: float,
    seed: int,
    normalize: bool = True,
) -> Tuple[Dataset, Tuple[Shard, ...], ProblemConstants, DenseVector]:
    """
    Gaussian least squares: A, x_true ~ N(0, 1), b = A x_true + noise_std · N(0, 1).

    Returns:
        (dataset, shards, constants, x_star) with x_star the exact minimizer of
        the global objective computed by a direct solve
    """
    rng = random_stream(seed, StreamPurpose.data)
    features = rng.standard_normal((m, d))
    truth = rng.standard_normal(d)
    targets = features @ truth + noise_std * rng.standard_normal(m)
    dataset = Dataset(ProblemKind.ridge, features, targets, l2=lam, normalize=normalize)
    shards = partition(dataset, n_workers)
    constants = estimate_constants(shards, Regularizer())
    x_star = reference_optimum(shards, Regularizer())
    return dataset, shards, constants, x_star


def synthesize_logistic(
    m: int,
    d: int,
    n_workers: int,
    l2: float,
    seed: int,
    label_flip: float = 0.1,
    normalize: bool = True,
) -> Tuple[Dataset, Tuple[Shard, ...]]:
    """Logistic regression with ±1 labels from a Gaussian separator, a fraction flipped"""
    features, targets = _logistic_data(random_stream(seed, StreamPurpose.data), m, d, label_flip)
    dataset = Dataset(ProblemKind.logistic, features, targets, l2=l2, normalize=normalize)
    return dataset, partition(dataset, n_workers)


def nonconvex_surrogate(
    m: int,
    d: int,
    n_workers: int,
    lambda_nc: float,
    seed: int,
    l2: float = 0.0,
    label_flip: float = 0.1,
    normalize: bool = True,
) -> Tuple[Dataset, Tuple[Shard, ...]]:
    """Logistic loss plus λ_nc Σ x_j²/(1 + x_j²); smooth and nonconvex for λ_nc > 0"""
    features, targets = _logistic_data(random_stream(seed, StreamPurpose.data), m, d, label_flip)
    dataset = Dataset(
        ProblemKind.nonconvex_logistic, features, targets,
        l2=l2, lambda_nc=lambda_nc, normalize=normalize,
    )
    return dataset, partition(dataset, n_workers)


# =============================================================================
# Losses and gradient oracles
# =============================================================================

def _check_dimension(x: NDArray[np.float64], d: int) -> None:
    if x.shape != (d,):
        raise ValueError(f"expected a vector of length {d}, got shape {x.shape}")


def _data_loss(kind: ProblemKind, features, targets, x, weight: float) -> float:
    z = features @ x
    if kind == ProblemKind.ridge:
        residual = z - targets
        return weight * float(residual @ residual)
    return weight * float(np.sum(np.logaddexp(0.0, -targets * z)))


def _data_gradient(kind: ProblemKind, features, targets, x, weight: float) -> DenseVector:
    z = features @ x
    if kind == ProblemKind.ridge:
        return 2.0 * weight * (features.T @ (z - targets))
    return -weight * (features.T @ (targets * expit(-targets * z)))


def _penalty(dataset: Dataset, x: DenseVector) -> float:
    value = dataset.l2 * float(x @ x)
    if dataset.lambda_nc:
        squared = x * x
        value += dataset.lambda_nc * float(np.sum(squared / (1.0 + squared)))
    return value


def _penalty_gradient(dataset: Dataset, x: DenseVector) -> DenseVector:
    grad = 2.0 * dataset.l2 * x
    if dataset.lambda_nc:
        grad = grad + dataset.lambda_nc * 2.0 * x / (1.0 + x * x) ** 2
    return grad


def local_loss(shard: Shard, x: ArrayLike) -> float:
    """f_i(x) on one shard"""
    x = np.asarray(x, dtype=np.float64)
    _check_dimension(x, shard.dataset.d)
    data = _data_loss(shard.dataset.kind, shard.features, shard.targets, x, shard.scale)
    return data + _penalty(shard.dataset, x)


def full_gradient(shard: Shard, x: ArrayLike) -> DenseVector:
    """
    Exact ∇f_i(x) over the shard's rows.

    Args:
        shard: Worker shard
        x: Point of evaluation

    Returns:
        The local gradient
    """
    x = np.asarray(x, dtype=np.float64)
    dataset = shard.dataset
    _check_dimension(x, dataset.d)
    data = _data_gradient(dataset.kind, shard.features, shard.targets, x, shard.scale)
    return data + _penalty_gradient(dataset, x)


def stochastic_gradient(
    shard: Shard,
    x: ArrayLike,
    batch_size: int,
    rng: RandomStream,
) -> DenseVector:
    """
    Unbiased minibatch estimate of ∇f_i(x), rows sampled without replacement.

    A batch covering the whole shard returns `full_gradient` and draws nothing.
    """
    if not 1 <= batch_size <= shard.rows:
        raise ValueError(f"batch_size must lie in [1, {shard.rows}], got {batch_size}")
    if batch_size == shard.rows:
        return full_gradient(shard, x)
    x = np.asarray(x, dtype=np.float64)
    dataset = shard.dataset
    _check_dimension(x, dataset.d)
    rows = np.sort(rng.choice(shard.rows, size=batch_size, replace=False))
    weight = shard.scale * shard.rows / batch_size
    data = _data_gradient(dataset.kind, shard.features[rows], shard.targets[rows], x, weight)
    return data + _penalty_gradient(dataset, x)


def loss(shards: Sequence[Shard], x: ArrayLike) -> float:
    """Smooth part f(x) = (1/n) Σ f_i(x)"""
    return sum(local_loss(shard, x) for shard in shards) / len(shards)


def global_gradient(shards: Sequence[Shard], x: ArrayLike) -> DenseVector:
    """∇f(x) as the index-ordered average of the local gradients"""
    total = full_gradient(shards[0], x)
    for shard in shards[1:]:
        total = total + full_gradient(shard, x)
    return total / len(shards)


def regularizer_value(reg: Regularizer, x: ArrayLike) -> float:
    x = np.asarray(x, dtype=np.float64)
    if reg.kind == RegularizerKind.l2:
        return reg.lam * float(x @ x)
    if reg.kind == RegularizerKind.l1:
        return reg.lam * float(np.sum(np.abs(x)))
    return 0.0


def objective(shards: Sequence[Shard], reg: Regularizer, x: ArrayLike) -> float:
    """f(x) + R(x)"""
    return loss(shards, x) + regularizer_value(reg, x)


def prox(reg: Regularizer, gamma: float, v: ArrayLike) -> DenseVector:
    """
    Proximal operator of γR.

    Args:
        reg: Regularizer R
        gamma: Step size γ > 0
        v: Input point

    Returns:
        v (none), v/(1 + 2γλ) (λ‖x‖²) or the soft-threshold sign(v)·max(|v| − γλ, 0) (λ‖x‖₁)
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    v = np.asarray(v, dtype=np.float64)
    if reg.kind == RegularizerKind.l2:
        return v / (1.0 + 2.0 * gamma * reg.lam)
    if reg.kind == RegularizerKind.l1:
        return np.sign(v) * np.maximum(np.abs(v) - gamma * reg.lam, 0.0)
    return v.copy()


# =============================================================================
# Constants
# =============================================================================

def _gram(features: NDArray[np.float64]) -> NDArray[np.float64]:
    """The smaller of AᵀA and AAᵀ; both share their nonzero spectrum"""
    rows, d = features.shape
    return features.T @ features if rows >= d else features @ features.T


def _largest_eigenvalue(matrix: NDArray[np.float64]) -> float:
    """Power iteration on a symmetric PSD matrix"""
    vector = np.random.default_rng(0).standard_normal(matrix.shape[0])
    vector /= np.linalg.norm(vector)
    for _ in range(EIGEN_MAX_ITER):
        image = matrix @ vector
        norm = np.linalg.norm(image)
        if norm == 0.0:
            return 0.0
        value = float(vector @ image)
        if np.linalg.norm(image - value * vector) <= EIGEN_TOLERANCE * abs(value):
            return value
        vector = image / norm
    raise ConvergenceFailureError(f"power iteration did not converge in {EIGEN_MAX_ITER} steps")


def _smallest_eigenvalue(matrix: NDArray[np.float64], scale: float) -> float:
    """Inverse iteration with a Cholesky factor; 0 when the matrix is singular"""
    try:
        factor = linalg.cho_factor(matrix)
    except linalg.LinAlgError:
        return 0.0
    vector = np.random.default_rng(1).standard_normal(matrix.shape[0])
    vector /= np.linalg.norm(vector)
    for _ in range(EIGEN_MAX_ITER):
        image = linalg.cho_solve(factor, vector)
        vector = image / np.linalg.norm(image)
        product = matrix @ vector
        value = float(vector @ product)
        residual = np.linalg.norm(product - value * vector)
        if residual <= EIGEN_TOLERANCE * abs(value) or residual <= 1e-12 * scale:
            return value if value > 1e-12 * scale else 0.0
    raise ConvergenceFailureError(f"inverse iteration did not converge in {EIGEN_MAX_ITER} steps")


def estimate_constants(
    shards: Sequence[Shard],
    reg: Regularizer,
    sigma_sq: float = 0.0,
) -> ProblemConstants:
    """
    L and μ of the worst-case worker Hessian, plus the regularizer's curvature.

    Ridge uses the extreme eigenvalues of 2s_i A_iᵀA_i + 2·l2·I. Logistic losses
    use the bound λ_max(A_iᵀA_i)·s_i/4 for L and 2·l2 for μ; the nonconvex
    penalty adds 2λ_nc to L and forces μ = 0.

    Args:
        shards: Worker shards
        reg: Regularizer (an L2 term adds 2λ to both L and μ)
        sigma_sq: Gradient-noise bound to carry along

    Returns:
        ProblemConstants
    """
    dataset = shards[0].dataset
    curvature = 2.0 * reg.lam if reg.kind == RegularizerKind.l2 else 0.0
    smooth_l2 = 2.0 * dataset.l2
    largest: List[float] = []
    smallest: List[float] = []
    for shard in shards:
        gram = _gram(shard.features)
        top = _largest_eigenvalue(gram)
        if dataset.kind == ProblemKind.ridge:
            if shard.rows < dataset.d:
                bottom = 0.0
            else:
                bottom = _smallest_eigenvalue(gram, top)
            largest.append(2.0 * shard.scale * top + smooth_l2)
            smallest.append(2.0 * shard.scale * bottom + smooth_l2)
        else:
            largest.append(shard.scale * top / 4.0 + smooth_l2 + 2.0 * dataset.lambda_nc)
            smallest.append(smooth_l2)

    L = max(largest) + curvature
    if dataset.kind == ProblemKind.nonconvex_logistic and dataset.lambda_nc > 0:
        mu = 0.0
    else:
        mu = min(smallest) + curvature
    logger.debug(f"estimated constants L={L:.6g}, mu={mu:.6g}")
    return ProblemConstants(L=L, mu=mu, sigma_sq=sigma_sq)


def estimate_gradient_variance(
    shards: Sequence[Shard],
    x: ArrayLike,
    batch_size: int,
    seed: int,
    draws: int = VARIANCE_DRAWS,
) -> float:
    """
    Empirical σ² = (1/n) Σ_i E‖g_i − ∇f_i(x)‖² over `draws` minibatches per worker.

    Full-batch workers contribute 0.
    """
    total = 0.0
    for shard in shards:
        if batch_size >= shard.rows:
            continue
        exact = full_gradient(shard, x)
        rng = random_stream(seed, StreamPurpose.variance, node=shard.index)
        for _ in range(draws):
            deviation = stochastic_gradient(shard, x, batch_size, rng) - exact
            total += float(deviation @ deviation)
    return total / (draws * len(shards))


# =============================================================================
# Reference optima
# =============================================================================

def _ridge_solve(shards: Sequence[Shard], reg: Regularizer) -> DenseVector:
    dataset = shards[0].dataset
    ridge = dataset.l2 + (reg.lam if reg.kind == RegularizerKind.l2 else 0.0)
    lhs = len(shards) * ridge * np.eye(dataset.d)
    rhs = np.zeros(dataset.d)
    for shard in shards:
        lhs += shard.scale * (shard.features.T @ shard.features)
        rhs += shard.scale * (shard.features.T @ shard.targets)
    if np.linalg.cond(lhs) > SINGULAR_CONDITION:
        raise SingularSystemError("normal equations are numerically singular")
    try:
        factor = linalg.cho_factor(lhs)
    except linalg.LinAlgError as exc:
        raise SingularSystemError(f"normal equations are not positive definite: {exc}") from exc
    return linalg.cho_solve(factor, rhs)


def _fista(shards: Sequence[Shard], reg: Regularizer) -> DenseVector:
    """Accelerated proximal gradient with adaptive restart, to a fixed-point residual of 1e-12"""
    step = 1.0 / estimate_constants(shards, Regularizer()).L
    x = np.zeros(shards[0].dataset.d)
    y = x.copy()
    momentum = 1.0
    for _ in range(FISTA_MAX_ITER):
        x_next = prox(reg, step, y - step * global_gradient(shards, y))
        fixed_point = x_next - prox(reg, step, x_next - step * global_gradient(shards, x_next))
        if np.linalg.norm(fixed_point) <= FISTA_TOLERANCE * max(1.0, np.linalg.norm(x_next)):
            return x_next
        if (y - x_next) @ (x_next - x) > 0:
            momentum = 1.0
            y = x_next.copy()
        else:
            momentum_next = (1.0 + np.sqrt(1.0 + 4.0 * momentum ** 2)) / 2.0
            y = x_next + ((momentum - 1.0) / momentum_next) * (x_next - x)
            momentum = momentum_next
        x = x_next
    raise ConvergenceFailureError(f"FISTA did not converge in {FISTA_MAX_ITER} iterations")


def _logistic_hessian(shards: Sequence[Shard], x: DenseVector, ridge: float) -> NDArray[np.float64]:
    dataset = shards[0].dataset
    hessian = 2.0 * ridge * np.eye(dataset.d)
    for shard in shards:
        z = shard.targets * (shard.features @ x)
        weights = expit(z) * expit(-z)
        hessian += shard.scale * (shard.features.T * weights) @ shard.features / len(shards)
    return hessian


def _newton(shards: Sequence[Shard], reg: Regularizer) -> DenseVector:
    """Damped Newton's method for strongly convex logistic objectives"""
    dataset = shards[0].dataset
    ridge = dataset.l2 + (reg.lam if reg.kind == RegularizerKind.l2 else 0.0)
    x = np.zeros(dataset.d)
    for _ in range(NEWTON_MAX_ITER):
        grad = global_gradient(shards, x) + (2.0 * reg.lam * x if reg.kind == RegularizerKind.l2 else 0.0)
        if np.linalg.norm(grad) <= 1e-12 * max(1.0, np.linalg.norm(x)):
            return x
        try:
            direction = linalg.solve(_logistic_hessian(shards, x, ridge), grad, assume_a="pos")
        except linalg.LinAlgError as exc:
            raise SingularSystemError(f"logistic Hessian is singular: {exc}") from exc
        current = objective(shards, reg, x)
        step = 1.0
        while objective(shards, reg, x - step * direction) > current - 1e-4 * step * float(grad @ direction):
            step /= 2.0
            if step < 1e-10:
                break
        x_next = x - step * direction
        if np.linalg.norm(x_next - x) <= 1e-15 * max(1.0, np.linalg.norm(x)):
            return x_next
        x = x_next
    raise ConvergenceFailureError(f"Newton's method did not converge in {NEWTON_MAX_ITER} iterations")


def reference_optimum(shards: Sequence[Shard], reg: Regularizer) -> Optional[DenseVector]:
    """
    High-precision minimizer of f + R.

    Returns:
        The direct ridge solution, a FISTA solution under an L1 regularizer, a
        Newton solution for logistic regression, or None for the nonconvex surrogate
    """
    dataset = shards[0].dataset
    if dataset.kind == ProblemKind.nonconvex_logistic and dataset.lambda_nc > 0:
        return None
    if reg.kind == RegularizerKind.l1 and reg.lam > 0:
        return _fista(shards, reg)
    if dataset.kind == ProblemKind.ridge:
        return _ridge_solve(shards, reg)
    return _newton(shards, reg)


# =============================================================================
# Problem bundle
# =============================================================================

@dataclass(frozen=True, eq=False)
class Problem:
    """Everything the simulator needs about one objective"""
    spec: ProblemSpec
    dataset: Dataset
    shards: Tuple[Shard, ...]
    regularizer: Regularizer
    constants: ProblemConstants
    x_star: Optional[DenseVector]
    grad_star: Optional[Tuple[DenseVector, ...]]

    @property
    def d(self) -> int:
        return self.dataset.d

    @property
    def n_workers(self) -> int:
        return len(self.shards)


def synthesize_dataset(spec: ProblemSpec) -> Dataset:
    """Draw the dataset a ProblemSpec describes"""
    rng = random_stream(spec.data_seed, StreamPurpose.data)
    if spec.kind == ProblemKind.ridge:
        features = rng.standard_normal((spec.m, spec.d))
        truth = rng.standard_normal(spec.d)
        targets = features @ truth + spec.noise_std * rng.standard_normal(spec.m)
    else:
        features, targets = _logistic_data(rng, spec.m, spec.d, spec.label_flip)
    return Dataset(
        spec.kind, features, targets,
        l2=spec.l2, lambda_nc=spec.lambda_nc, normalize=spec.normalize,
    )


@lru_cache(maxsize=16)
def build_problem(
    spec: ProblemSpec,
    n_workers: int,
    regularizer: Regularizer,
    batch_size: Optional[int] = None,
) -> Problem:
    """
    Synthesize, partition and analyze a problem.

    Results are cached per (spec, n_workers, regularizer, batch_size); every
    array inside is read-only so the bundle can be shared between runs.
    """
    dataset = synthesize_dataset(spec)
    shards = partition(dataset, n_workers)
    sigma_sq = 0.0
    if batch_size is not None:
        sigma_sq = estimate_gradient_variance(shards, np.zeros(dataset.d), batch_size, spec.data_seed)
    constants = estimate_constants(shards, regularizer, sigma_sq=sigma_sq)
    x_star = reference_optimum(shards, regularizer)
    grad_star = None
    if x_star is not None:
        x_star.setflags(write=False)
        grad_star = tuple(full_gradient(shard, x_star) for shard in shards)
        for grad in grad_star:
            grad.setflags(write=False)
    logger.info(
        f"Built {spec.kind.value} problem m={spec.m} d={spec.d} n={n_workers}: "
        f"L={constants.L:.4g} mu={constants.mu:.4g} sigma^2={constants.sigma_sq:.4g}"
    )
    return Problem(spec, dataset, shards, regularizer, constants, x_star, grad_star)


# =============================================================================
# CSV import / export
# =============================================================================

def export_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    """Write the dataset as CSV with header `y,x1..xd`"""
    path = Path(path)
    frame = pd.DataFrame(dataset.features, columns=[f"x{j + 1}" for j in range(dataset.d)])
    frame.insert(0, "y", dataset.targets)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def import_dataset(
    path: Union[str, Path],
    kind: ProblemKind,
    l2: float = 0.0,
    lambda_nc: float = 0.0,
    normalize: bool = True,
) -> Dataset:
    """Read a `y,x1..xd` CSV written by `export_dataset` (or by hand)"""
    frame = pd.read_csv(path, dtype=np.float64, float_precision="round_trip")
    expected = ["y"] + [f"x{j + 1}" for j in range(frame.shape[1] - 1)]
    if list(frame.columns) != expected:
        raise ValueError(f"{path}: header must be y,x1..xd, got {','.join(frame.columns)}")
    return Dataset(
        kind,
        frame.iloc[:, 1:].to_numpy(),
        frame["y"].to_numpy(),
        l2=l2,
        lambda_nc=lambda_nc,
        normalize=normalize,
    )
