"""
Stochastic compression operators and their communication cost.

Operators: identity, stochastic sparsification (x/p with probability p),
blockwise Bernoulli p-norm quantization (‖blk‖_p·sign(x)·ξ with
ξ_i ~ Bernoulli(|x_i|/‖blk‖_p)) and top-k. The first three are unbiased with
E‖Q(x) − x‖² ≤ C‖x‖²; top-k is biased and has no such constant.

Bit accounting follows the analytic model: 32 bits per float, 1.5 bits per
ternary code, one 32-bit norm per block, and 32 + ceil(log2 d) bits per kept
sparse entry.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize

from app.models import CompressorKind, CompressorSpec
from app.rng import RandomStream

logger = logging.getLogger(__name__)

FLOAT_BITS = 32
TRITS_PER_BYTE = 5

DenseVector = NDArray[np.float64]
NormOrder = Union[float, str]


class NonFiniteError(ValueError):
    """Raised when a vector contains NaN or Inf"""
    pass


class InvalidSpecError(ValueError):
    """Raised when a compressor spec is out of range for the given input"""
    pass


class MalformedPayloadError(ValueError):
    """Raised when a compressed payload is inconsistent with its scheme"""
    pass


class NoVarianceBoundError(ValueError):
    """Raised when asking for the variance constant of a biased operator"""
    pass


def dense_vector(values: ArrayLike) -> DenseVector:
    """
    Validate and copy values into a finite float64 vector.

    Args:
        values: Anything numpy can turn into a 1-D array

    Returns:
        A new 1-D float64 array of length ≥ 1
    """
    vector = np.array(values, dtype=np.float64)
    if vector.ndim != 1 or vector.size < 1:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {vector.shape}")
    if not np.all(np.isfinite(vector)):
        raise NonFiniteError("vector contains NaN or Inf entries")
    return vector


@dataclass(frozen=True)
class QuantizedBlock:
    """One block of a p-norm payload: its norm and ternary codes"""
    norm: float
    codes: NDArray[np.int8]


@dataclass(frozen=True)
class SparseBlock:
    """Kept (index, value) pairs of a sparsified payload"""
    indices: NDArray[np.int64]
    values: DenseVector


@dataclass(frozen=True)
class DenseBlock:
    """Uncompressed payload"""
    values: DenseVector


Block = Union[QuantizedBlock, SparseBlock, DenseBlock]


@dataclass(frozen=True, eq=False)
class CompressedVector:
    """
    Compressed payload in its canonical in-memory layout.

    Exactly one representation is populated, depending on the scheme:
    `dense` (identity), `norms` + `codes` (p-norm) or `indices` + `values`
    (sparsifiers).
    """
    scheme: CompressorSpec
    d: int
    bit_cost: int
    dense: Optional[DenseVector] = None
    norms: Optional[DenseVector] = None
    codes: Optional[NDArray[np.int8]] = None
    indices: Optional[NDArray[np.int64]] = None
    values: Optional[DenseVector] = None

    @property
    def blocks(self) -> List[Block]:
        kind = self.scheme.kind
        if kind == CompressorKind.identity:
            return [DenseBlock(self.dense)]
        if kind == CompressorKind.pnorm:
            b = self.scheme.block_size
            return [
                QuantizedBlock(float(norm), self.codes[i * b:(i + 1) * b])
                for i, norm in enumerate(self.norms)
            ]
        return [SparseBlock(self.indices, self.values)]

    @property
    def kept(self) -> int:
        """Number of transmitted entries (nonzero codes for p-norm payloads)"""
        kind = self.scheme.kind
        if kind == CompressorKind.identity:
            return self.d
        if kind == CompressorKind.pnorm:
            return int(np.count_nonzero(self.codes))
        return int(self.indices.size)

    def same_payload(self, other: "CompressedVector") -> bool:
        """Bit-for-bit equality of two payloads"""
        if self.scheme != other.scheme or self.d != other.d or self.bit_cost != other.bit_cost:
            return False
        for name in ("dense", "norms", "codes", "indices", "values"):
            mine, theirs = getattr(self, name), getattr(other, name)
            if (mine is None) != (theirs is None):
                return False
            if mine is not None and (mine.shape != theirs.shape or mine.tobytes() != theirs.tobytes()):
                return False
        return True


def block_split(x: ArrayLike, b: int) -> List[DenseVector]:
    """
    Split a vector into consecutive blocks of size b (last block may be shorter).

    Args:
        x: Vector to split
        b: Block size (≥ 1)

    Returns:
        List of blocks whose concatenation is x
    """
    if b < 1:
        raise InvalidSpecError(f"block size must be >= 1, got {b}")
    x = np.asarray(x, dtype=np.float64)
    return [x[start:start + b] for start in range(0, x.size, b)]


def num_blocks(d: int, b: int) -> int:
    return -(-d // b)


def largest_block_dim(spec: CompressorSpec, d: int) -> int:
    """Dimension of the largest block the operator sees on a length-d vector"""
    if spec.kind == CompressorKind.pnorm:
        return min(spec.block_size, d)
    return d


def _block_norms(x: NDArray[np.float64], p: NormOrder, b: int) -> NDArray[np.float64]:
    """Per-block p-norms along the last axis; works on batches of vectors."""
    d = x.shape[-1]
    blocks = num_blocks(d, b)
    padding = [(0, 0)] * (x.ndim - 1) + [(0, blocks * b - d)]
    shaped = np.pad(np.abs(x), padding).reshape(*x.shape[:-1], blocks, b)
    if p == "inf":
        return shaped.max(axis=-1)
    return np.linalg.norm(shaped, ord=float(p), axis=-1)


def _expand_norms(norms: NDArray[np.float64], b: int, d: int) -> NDArray[np.float64]:
    return np.repeat(norms, b, axis=-1)[..., :d]


def _quantize(
    x: NDArray[np.float64],
    uniforms: NDArray[np.float64],
    p: NormOrder,
    b: int,
) -> Tuple[NDArray[np.float64], NDArray[np.int8]]:
    norms = _block_norms(x, p, b)
    scale = _expand_norms(norms, b, x.shape[-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        prob = np.where(scale > 0, np.abs(x) / scale, 0.0)
    # rounding in ‖·‖_p can push a lone entry a hair above its block norm
    np.minimum(prob, 1.0, out=prob)
    codes = (np.sign(x) * (uniforms < prob)).astype(np.int8)
    return norms, codes


def _index_bits(d: int) -> int:
    """ceil(log2 d) computed exactly on integers"""
    return (d - 1).bit_length()


def _sparse_cost(kept: int, d: int) -> int:
    return kept * (FLOAT_BITS + _index_bits(d))


def _expected_kept(keep_prob: float, d: int) -> int:
    return math.ceil(round(keep_prob * d, 9))


def _check_vector(x: NDArray[np.float64]) -> None:
    if x.ndim != 1 or x.size < 1:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("cannot compress a vector with NaN or Inf entries")


def _resolve_topk(spec: CompressorSpec, d: int) -> int:
    k = spec.resolve_k(d)
    if k > d:
        raise InvalidSpecError(f"top-k needs 1 <= k <= d, got k={k}, d={d}")
    return k


def bit_cost(spec: CompressorSpec, d: int) -> int:
    """
    Analytic bit cost of one payload on a length-d vector.

    Args:
        spec: Compressor description
        d: Vector length

    Returns:
        Bits: 32d (identity), 32·ceil(d/b) + ceil(1.5d) (p-norm), or kept × (32 + ceil(log2 d))
        with the expected kept count ceil(p·d) for sparsification and min(k, d) for top-k
    """
    if d < 1:
        raise InvalidSpecError(f"d must be >= 1, got {d}")
    kind = spec.kind
    if kind == CompressorKind.identity:
        return FLOAT_BITS * d
    if kind == CompressorKind.pnorm:
        return FLOAT_BITS * num_blocks(d, spec.block_size) + (3 * d + 1) // 2
    if kind == CompressorKind.sparsify:
        return _sparse_cost(_expected_kept(spec.keep_prob, d), d)
    return _sparse_cost(min(spec.resolve_k(d), d), d)


def compress(spec: CompressorSpec, x: ArrayLike, rng: RandomStream) -> CompressedVector:
    """
    Apply a compression operator.

    Randomized schemes draw exactly d uniforms from `rng`, one per entry, so a
    batch of draws (see `sample_reconstructions`) consumes the stream the same
    way as repeated calls.

    Args:
        spec: Compressor description
        x: Vector to compress
        rng: Stream owned by the calling node

    Returns:
        Compressed payload with its bit cost
    """
    x = np.asarray(x, dtype=np.float64)
    _check_vector(x)
    d = x.size
    kind = spec.kind

    if kind == CompressorKind.identity:
        return CompressedVector(spec, d, bit_cost(spec, d), dense=x.copy())

    if kind == CompressorKind.pnorm:
        norms, codes = _quantize(x, rng.random(d), spec.p, spec.block_size)
        return CompressedVector(spec, d, bit_cost(spec, d), norms=norms, codes=codes)

    if kind == CompressorKind.sparsify:
        keep = (rng.random(d) < spec.keep_prob) & (x != 0)
        indices = np.flatnonzero(keep)
        values = x[indices] / spec.keep_prob
        return CompressedVector(
            spec, d, _sparse_cost(indices.size, d), indices=indices, values=values
        )

    k = _resolve_topk(spec, d)
    # stable sort on −|x| breaks ties by lowest index
    indices = np.sort(np.argsort(-np.abs(x), kind="stable")[:k])
    return CompressedVector(
        spec, d, _sparse_cost(k, d), indices=indices, values=x[indices].copy()
    )


def reconstruct(cv: CompressedVector) -> DenseVector:
    """
    Decode a payload back to a length-d vector.

    Args:
        cv: Payload produced by `compress`

    Returns:
        The reconstructed vector
    """
    d = cv.d
    kind = cv.scheme.kind

    if kind == CompressorKind.identity:
        if cv.dense is None or cv.dense.shape != (d,):
            raise MalformedPayloadError("identity payload must carry a length-d dense vector")
        return cv.dense.copy()

    if kind == CompressorKind.pnorm:
        b = cv.scheme.block_size
        if cv.codes is None or cv.norms is None:
            raise MalformedPayloadError("p-norm payload needs norms and codes")
        if cv.codes.shape != (d,) or cv.norms.shape != (num_blocks(d, b),):
            raise MalformedPayloadError(
                f"p-norm payload shape mismatch: codes {cv.codes.shape}, norms {cv.norms.shape}, d={d}, b={b}"
            )
        if np.any(np.abs(cv.codes) > 1):
            raise MalformedPayloadError("p-norm codes must lie in {-1, 0, +1}")
        if np.any(cv.norms < 0) or not np.all(np.isfinite(cv.norms)):
            raise MalformedPayloadError("block norms must be finite and nonnegative")
        return cv.codes * _expand_norms(cv.norms, b, d)

    if cv.indices is None or cv.values is None or cv.indices.shape != cv.values.shape:
        raise MalformedPayloadError("sparse payload needs matching indices and values")
    if cv.indices.size and (cv.indices.min() < 0 or cv.indices.max() >= d):
        raise MalformedPayloadError(f"sparse index out of range for d={d}")
    out = np.zeros(d)
    out[cv.indices] = cv.values
    return out


def sample_reconstructions(
    spec: CompressorSpec,
    x: ArrayLike,
    rng: RandomStream,
    n_draws: int,
) -> NDArray[np.float64]:
    """
    Vectorized equivalent of `n_draws` successive `reconstruct(compress(spec, x, rng))`.

    Returns:
        Array of shape (n_draws, d)
    """
    x = np.asarray(x, dtype=np.float64)
    _check_vector(x)
    d = x.size
    kind = spec.kind
    if kind == CompressorKind.pnorm:
        uniforms = rng.random((n_draws, d))
        batch = np.broadcast_to(x, (n_draws, d))
        norms, codes = _quantize(batch, uniforms, spec.p, spec.block_size)
        return codes * _expand_norms(norms, spec.block_size, d)
    if kind == CompressorKind.sparsify:
        keep = (rng.random((n_draws, d)) < spec.keep_prob) & (x != 0)
        return np.where(keep, x / spec.keep_prob, 0.0)
    single = reconstruct(compress(spec, x, rng))
    return np.tile(single, (n_draws, 1))


@dataclass(frozen=True)
class MonteCarloMoments:
    """Sample moments of Q(x) and of the squared error ‖Q(x) − x‖²"""
    n: int
    mean: DenseVector
    std: DenseVector
    sq_error_mean: float
    sq_error_std: float


def monte_carlo_moments(
    spec: CompressorSpec,
    x: ArrayLike,
    rng: RandomStream,
    n_draws: int,
    chunk: int = 10_000,
) -> MonteCarloMoments:
    """
    Streaming mean/std of many independent compressions of x.

    Chunks are merged with the pairwise (Chan) update so memory stays
    O(chunk · d).
    """
    x = np.asarray(x, dtype=np.float64)
    count = 0
    mean = np.zeros_like(x)
    m2 = np.zeros_like(x)
    low = np.full_like(x, np.inf)
    high = np.full_like(x, -np.inf)
    err_mean = 0.0
    err_m2 = 0.0
    remaining = n_draws
    while remaining > 0:
        size = min(chunk, remaining)
        draws = sample_reconstructions(spec, x, rng, size)
        errors = np.sum((draws - x) ** 2, axis=1)
        np.minimum(low, draws.min(axis=0), out=low)
        np.maximum(high, draws.max(axis=0), out=high)

        total = count + size
        batch_mean = draws.mean(axis=0)
        delta = batch_mean - mean
        m2 += ((draws - batch_mean) ** 2).sum(axis=0) + delta ** 2 * count * size / total
        mean += delta * size / total

        batch_err = errors.mean()
        err_delta = batch_err - err_mean
        err_m2 += ((errors - batch_err) ** 2).sum() + err_delta ** 2 * count * size / total
        err_mean += err_delta * size / total

        count = total
        remaining -= size

    # coordinates whose draws never varied: drop the merge round-off
    constant = low == high
    mean[constant] = low[constant]
    m2[constant] = 0.0

    ddof = max(count - 1, 1)
    return MonteCarloMoments(
        n=count,
        mean=mean,
        std=np.sqrt(m2 / ddof),
        sq_error_mean=float(err_mean),
        sq_error_std=float(math.sqrt(err_m2 / ddof)),
    )


def variance_ratio(x: ArrayLike, p: NormOrder) -> float:
    """‖x‖₁‖x‖_p / ‖x‖₂² (1.0 for the zero vector)"""
    x = np.abs(np.asarray(x, dtype=np.float64))
    sq = float(np.dot(x, x))
    if sq == 0.0:
        return 1.0
    norm_p = float(x.max()) if p == "inf" else float(np.linalg.norm(x, ord=float(p)))
    return float(x.sum()) * norm_p / sq


def quantization_variance(x: ArrayLike, p: NormOrder, b: int) -> float:
    """Exact E‖Q(x) − x‖² of blockwise p-norm quantization: Σ_blocks ‖blk‖₁‖blk‖_p − ‖blk‖₂²"""
    total = 0.0
    for block in block_split(x, b):
        absolute = np.abs(block)
        norm_p = float(absolute.max()) if p == "inf" else float(np.linalg.norm(absolute, ord=float(p)))
        total += float(absolute.sum()) * norm_p - float(np.dot(absolute, absolute))
    return total


def max_variance_ratio(p: NormOrder, dim: int, starts: int = 64, seed: int = 0) -> float:
    """
    Numerically maximize ‖x‖₁‖x‖_p/‖x‖₂² over nonzero x ∈ R^dim.

    The ratio only depends on |x| and is scale-free, so the search runs over
    the positive orthant of the unit box from random and structured starts,
    each refined with L-BFGS-B.
    """
    if dim < 1:
        raise InvalidSpecError(f"block dimension must be >= 1, got {dim}")
    if dim == 1:
        return 1.0

    def negative_ratio(v: NDArray[np.float64]) -> float:
        return -variance_ratio(v, p)

    rng = np.random.default_rng(seed)
    candidates = [rng.random(dim) for _ in range(starts)]
    for t in (0.1, 0.3, 0.5, 1.0 / (1.0 + math.sqrt(dim))):
        spike = np.full(dim, t)
        spike[0] = 1.0
        candidates.append(spike)
    candidates.append(np.ones(dim))

    best = max(variance_ratio(c, p) for c in candidates)
    bounds = [(1e-9, 1.0)] * dim
    for start in candidates:
        result = optimize.minimize(negative_ratio, start, method="L-BFGS-B", bounds=bounds)
        best = max(best, -float(result.fun))
    return best


def variance_constant(spec: CompressorSpec, block_dim: int) -> float:
    """
    Smallest known C with E‖Q(x) − x‖² ≤ C‖x‖².

    Args:
        spec: Compressor description
        block_dim: Largest block dimension the operator acts on

    Returns:
        0 (identity), 1/p − 1 (sparsification), or sup ‖x‖₁‖x‖_p/‖x‖₂² − 1 over the block
        dimension (p-norm; closed form for p ∈ {1, 2, ∞})
    """
    if block_dim < 1:
        raise InvalidSpecError(f"block dimension must be >= 1, got {block_dim}")
    kind = spec.kind
    if kind == CompressorKind.identity:
        return 0.0
    if kind == CompressorKind.sparsify:
        return 1.0 / spec.keep_prob - 1.0
    if kind == CompressorKind.topk:
        raise NoVarianceBoundError("top-k is biased and has no variance constant")

    p = spec.p
    root = math.sqrt(block_dim)
    if p == "inf":
        return (root - 1.0) / 2.0
    if p == 2:
        return root - 1.0
    if p == 1:
        return float(block_dim - 1)
    logger.debug(f"numeric variance constant for p={p}, dim={block_dim}")
    return max_variance_ratio(p, block_dim) - 1.0


def compressor_constant(spec: CompressorSpec, d: int) -> float:
    """variance_constant evaluated on the largest block of a length-d vector"""
    return variance_constant(spec, largest_block_dim(spec, d))


def pack_trits(codes: ArrayLike) -> bytes:
    """
    Pack ternary codes into bytes, five trits per byte (3⁵ = 243 ≤ 256).

    This is a physical codec only; reported bit counts use the 1.5 bits/trit model.
    """
    codes = np.asarray(codes, dtype=np.int64)
    if np.any(np.abs(codes) > 1):
        raise MalformedPayloadError("codes must lie in {-1, 0, +1}")
    padded = np.pad(codes + 1, (0, (-codes.size) % TRITS_PER_BYTE))
    digits = padded.reshape(-1, TRITS_PER_BYTE)
    weights = 3 ** np.arange(TRITS_PER_BYTE)
    return (digits @ weights).astype(np.uint8).tobytes()


def unpack_trits(data: bytes, n: int) -> NDArray[np.int8]:
    """Inverse of `pack_trits` for the first n codes"""
    packed = np.frombuffer(data, dtype=np.uint8).astype(np.int64)
    if packed.size * TRITS_PER_BYTE < n:
        raise MalformedPayloadError(f"{len(data)} bytes cannot hold {n} trits")
    if np.any(packed >= 3 ** TRITS_PER_BYTE):
        raise MalformedPayloadError("byte value outside the 5-trit range")
    digits = (packed[:, None] // 3 ** np.arange(TRITS_PER_BYTE)) % 3
    return (digits.reshape(-1)[:n] - 1).astype(np.int8)
