"""Latin hypercube, Halton and Sobol point sets, and the Gaussian map used for material sampling."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np


class Scheme(str, enum.Enum):
    LatinHypercube = "LatinHypercube"
    Halton = "Halton"
    Sobol = "Sobol"
    PlainUniform = "PlainUniform"


_SOBOL_BITS = 32


@lru_cache(maxsize=1)
def _joe_kuo_table() -> tuple[tuple[int, int, tuple[int, ...]], ...]:
    # bundled file documents its own provenance in the header comments
    text = resources.files("subsetuq").joinpath("data/joe_kuo_d40.csv").read_text()
    rows = []
    for line in text.splitlines():
        if not line or line.startswith("#") or line.startswith("d,"):
            continue
        _, s, a, m = line.split(",")
        rows.append((int(s), int(a), tuple(int(v) for v in m.split())))
    return tuple(rows)


def sobol_max_dims() -> int:
    return len(_joe_kuo_table())


@dataclass(frozen=True)
class SamplerConfig:
    scheme: Scheme
    count: int
    dims: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.count < 1 or self.dims < 1:
            raise ValueError(f"count and dims must be >= 1, got {self.count}, {self.dims}")
        if self.scheme is Scheme.Sobol and self.dims > sobol_max_dims():
            raise ValueError(f"Sobol supports at most {sobol_max_dims()} dims, got {self.dims}")


def _require(config: SamplerConfig, scheme: Scheme) -> None:
    if config.scheme is not scheme:
        raise ValueError(f"expected a {scheme.value} config, got {config.scheme.value}")


def lhs_sample(config: SamplerConfig) -> np.ndarray:
    """One point per interval [i/m, (i+1)/m) in every dimension, intervals shuffled per dimension."""
    _require(config, Scheme.LatinHypercube)
    m, n = config.count, config.dims
    rng = np.random.default_rng(config.seed)
    out = np.empty((m, n))
    for d in range(n):
        bins = rng.permutation(m)
        x = (bins + rng.random(m)) / m
        # rounding can push a point across its bin edge; nudge it back
        below = np.floor(x * m) < bins
        while np.any(below):
            x[below] = np.nextafter(x[below], np.inf)
            below = np.floor(x * m) < bins
        above = np.floor(x * m) > bins
        while np.any(above):
            x[above] = np.nextafter(x[above], -np.inf)
            above = np.floor(x * m) > bins
        out[:, d] = x
    return out


def radical_inverse(index: int, base: int) -> float:
    """Mirror the base-``base`` digits of ``index`` about the radix point."""
    if index < 1 or base < 2:
        raise ValueError("index must be >= 1 and base >= 2")
    # exact rational accumulation, single rounding at the end
    num, den = 0, 1
    while index:
        index, digit = divmod(index, base)
        num = num * base + digit
        den *= base
    return num / den


def first_primes(count: int) -> list[int]:
    primes: list[int] = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes if p * p <= candidate):
            primes.append(candidate)
        candidate += 1
    return primes


def halton_sample(config: SamplerConfig) -> np.ndarray:
    _require(config, Scheme.Halton)
    primes = first_primes(config.dims)
    return np.array(
        [[radical_inverse(i, p) for p in primes] for i in range(1, config.count + 1)],
        dtype=float,
    )


def _direction_numbers(dims: int) -> np.ndarray:
    """dims x 32 integer direction numbers v_k = m_k * 2**(32-k)."""
    table = _joe_kuo_table()
    v = np.zeros((dims, _SOBOL_BITS), dtype=np.uint64)
    for d in range(dims):
        s, a, m_init = table[d]
        if d == 0:
            m = [1] * _SOBOL_BITS
        else:
            m = list(m_init)
            for k in range(s, _SOBOL_BITS):
                new = m[k - s] ^ (m[k - s] << s)
                for i in range(1, s):
                    if (a >> (s - 1 - i)) & 1:
                        new ^= m[k - i] << i
                m.append(new)
        for k in range(_SOBOL_BITS):
            v[d, k] = m[k] << (_SOBOL_BITS - 1 - k)
    return v


def sobol_sample(config: SamplerConfig) -> np.ndarray:
    """Unscrambled Sobol points in Gray-code order, skipping the initial all-zero point."""
    _require(config, Scheme.Sobol)
    v = _direction_numbers(config.dims)
    idx = np.arange(1, config.count + 1, dtype=np.uint64)
    gray = idx ^ (idx >> np.uint64(1))
    acc = np.zeros((config.count, config.dims), dtype=np.uint64)
    for k in range(_SOBOL_BITS):
        bit = ((gray >> np.uint64(k)) & np.uint64(1)).astype(bool)
        acc[bit] ^= v[:, k]
    return acc.astype(float) / float(2**_SOBOL_BITS)


def uniform_sample(config: SamplerConfig) -> np.ndarray:
    _require(config, Scheme.PlainUniform)
    return np.random.default_rng(config.seed).random((config.count, config.dims))


def sample(config: SamplerConfig) -> np.ndarray:
    return {
        Scheme.LatinHypercube: lhs_sample,
        Scheme.Halton: halton_sample,
        Scheme.Sobol: sobol_sample,
        Scheme.PlainUniform: uniform_sample,
    }[config.scheme](config)


# Acklam's rational approximation to the standard normal quantile (|rel err| < 1.2e-9),
# followed by one Halley step against math.erfc, which brings it to near machine precision.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00, 3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    if p > 1.0 - _P_LOW:
        return -_acklam(1.0 - p)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
        ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    )


def norm_ppf(p: float) -> float:
    """Inverse standard normal CDF for p in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie strictly inside (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    x = _acklam(p)
    # Halley refinement; evaluate the tail on the side where erfc keeps relative precision
    if x < 0:
        e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    else:
        e = (1.0 - p) - 0.5 * math.erfc(x / math.sqrt(2.0))
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def gaussian_transform(u, means, stds) -> np.ndarray:
    """Map uniforms in (0, 1) to N(mean, std) per column."""
    u = np.asarray(u, dtype=float)
    means = np.broadcast_to(np.asarray(means, dtype=float), u.shape[-1:])
    stds = np.broadcast_to(np.asarray(stds, dtype=float), u.shape[-1:])
    if np.any(stds < 0):
        raise ValueError("standard deviations must be non-negative")
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise ValueError("uniform inputs must lie strictly inside (0, 1)")
    z = np.vectorize(norm_ppf, otypes=[float])(u)
    return means + stds * z
