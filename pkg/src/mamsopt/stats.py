"""Normal / Student-t distribution functions and a position-addressable
standard-normal stream.

The stream is counter based (Philox): deviate number ``p`` of a seed is a
pure function of ``(seed, p)``, so any block of the stream can be
regenerated without replaying what came before it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

_WORDS_PER_COUNTER = 4
_TWO_M53 = 2.0**-53


def std_normal_cdf(x):
    """Standard normal CDF. Accepts scalars or arrays."""
    return special.ndtr(x)


def normal_quantile(p):
    return special.ndtri(p)


def t_cdf(x, df):
    """Student-t CDF with ``df`` degrees of freedom (regularized incomplete beta)."""
    return special.stdtr(df, x)


def _t_lower_quantile(p: float, df: float) -> float:
    # p <= 0.5: root of F(x) = p on x <= 0, bracket grown geometrically
    if p == 0.5:
        return 0.0
    lo = -1.0
    while t_cdf(lo, df) > p:
        lo *= 2.0
    hi = lo / 2.0 if lo < -1.0 else 0.0
    return optimize.brentq(
        lambda x: t_cdf(x, df) - p, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
        maxiter=500,
    )


def t_quantile(p: float, df: float) -> float:
    """Inverse Student-t CDF by bracketed root finding.

    Parameters
    ----------
    p : float
        Probability in (0, 1).
    df : float
        Degrees of freedom, at least 1.
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    if not df >= 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df!r}")
    if p > 0.5:
        return -_t_lower_quantile(1.0 - p, df)
    return _t_lower_quantile(p, df)


def t_isf(q: float, df: float) -> float:
    """Value with upper-tail probability ``q`` under t_df."""
    if not (0.0 < q < 1.0):
        raise ValueError(f"q must lie in (0, 1), got {q!r}")
    return -t_quantile(q, df)


@dataclass
class RngStream:
    """Standard-normal deviate stream at a given offset of a seeded sequence.

    ``position`` counts deviates already consumed. Two streams with the same
    seed and position produce identical output on every platform.
    """

    seed: int
    position: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.position < 0:
            raise ValueError("position must be non-negative")

    @classmethod
    def substream(cls, seed: int, index: int, stride: int) -> "RngStream":
        """Stream owning positions ``[index*stride, (index+1)*stride)``.

        Distinct indices with the same stride never overlap as long as each
        consumer draws at most ``stride`` deviates.
        """
        return cls(seed, index * stride)


def uniforms_at(seed: int, position: int, count: int) -> np.ndarray:
    """Open-interval uniforms for positions ``position .. position+count-1``."""
    counter, skip = divmod(position, _WORDS_PER_COUNTER)
    bitgen = np.random.Philox(key=seed, counter=counter)
    raw = bitgen.random_raw(skip + count)[skip:]
    # 53 high bits, shifted half a step off zero so ndtri stays finite
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def draw_std_normal(stream: RngStream, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. N(0, 1) deviates and advance the stream."""
    if count < 0:
        raise ValueError("count must be non-negative")
    out = special.ndtri(uniforms_at(stream.seed, stream.position, count))
    stream.position += count
    return out
