"""Common-random-number bank of standard-normal responses.

Layout is ``[replicate r][arm k][stage j][patient i]``. The deviates of
block ``(r, k)`` are substream ``r*(K+1) + k`` of the seed with stride
``J*n_max``, so a bank can be stored whole or regenerated one replicate at a
time with identical contents.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ResourceError
from .stats import RngStream, draw_std_normal

_MAGIC = b"MAMSBNK\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sIQIIIQ")  # magic, version, R, K, J, n_max, seed
_CHUNK = 8192
_CACHE_SLOTS = 32


@dataclass(frozen=True)
class BankConfig:
    replicates: int = 100_000
    K: int = 3
    J: int = 2
    n_max: int = 60
    seed: int = 20170601
    lean: bool = False
    memory_budget_mb: float = 2048.0

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigurationError("bank replicates must be >= 1")
        if self.K < 1:
            raise ConfigurationError("K must be >= 1")
        if self.J < 1:
            raise ConfigurationError("J must be >= 1")
        if self.n_max < 2:
            raise ConfigurationError("n_max must be >= 2")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    @property
    def arms(self) -> int:
        return self.K + 1

    @property
    def block(self) -> int:
        """Deviates per (replicate, arm) substream."""
        return self.J * self.n_max

    @property
    def entries(self) -> int:
        return self.replicates * self.arms * self.block

    @property
    def nbytes(self) -> int:
        return 8 * self.entries


def _generate(config: BankConfig, r0: int, r1: int) -> np.ndarray:
    per_rep = config.arms * config.block
    stream = RngStream(config.seed, r0 * per_rep)
    z = draw_std_normal(stream, (r1 - r0) * per_rep)
    return z.reshape(r1 - r0, config.arms, config.J, config.n_max)


class ResponseBank:
    """Immutable bank of N(0, 1) deviates plus a per-group-size summary cache.

    Use :func:`build_bank` rather than constructing directly.
    """

    def __init__(self, config: BankConfig, deviates: np.ndarray | None = None):
        self.config = config
        if deviates is not None:
            expected = (config.replicates, config.arms, config.J, config.n_max)
            if deviates.shape != expected:
                raise ConfigurationError(f"deviates shape {deviates.shape} != {expected}")
            deviates.setflags(write=False)
        self._deviates = deviates
        self._summaries: OrderedDict[int, tuple[np.ndarray, np.ndarray]] = OrderedDict()

    @property
    def stored(self) -> bool:
        return self._deviates is not None

    @property
    def deviates(self) -> np.ndarray:
        if self._deviates is None:
            return _generate(self.config, 0, self.config.replicates)
        return self._deviates

    def chunk(self, r0: int, r1: int) -> np.ndarray:
        if self._deviates is not None:
            return self._deviates[r0:r1]
        return _generate(self.config, r0, r1)

    def replicate(self, r: int) -> np.ndarray:
        """Deviates of replicate ``r`` as a ``(K+1, J, n_max)`` array."""
        if not 0 <= r < self.config.replicates:
            raise IndexError(f"replicate {r} outside bank of {self.config.replicates}")
        return self.chunk(r, r + 1)[0]

    def check_group_size(self, n: int) -> None:
        if n < 1:
            raise ConfigurationError(f"group size must be >= 1, got {n}")
        if n > self.config.n_max:
            raise ResourceError(
                f"group size n={n} exceeds bank capacity n_max={self.config.n_max}; "
                "rebuild the bank with a larger n_max"
            )

    def summaries(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-(replicate, arm, stage) mean and centred sum of squares of the
        first ``n`` deviates of each block. Both arrays are ``(R, K+1, J)``.
        """
        self.check_group_size(n)
        hit = self._summaries.get(n)
        if hit is not None:
            self._summaries.move_to_end(n)
            return hit
        cfg = self.config
        means = np.empty((cfg.replicates, cfg.arms, cfg.J))
        ss = np.empty_like(means)
        for r0 in range(0, cfg.replicates, _CHUNK):
            r1 = min(r0 + _CHUNK, cfg.replicates)
            z = self.chunk(r0, r1)[..., :n]
            m = z.mean(axis=-1)
            means[r0:r1] = m
            ss[r0:r1] = ((z - m[..., None]) ** 2).sum(axis=-1)
        means.setflags(write=False)
        ss.setflags(write=False)
        self._summaries[n] = (means, ss)
        if len(self._summaries) > _CACHE_SLOTS:
            self._summaries.popitem(last=False)
        return means, ss


def build_bank(config: BankConfig) -> ResponseBank:
    """Fill a bank from the seeded stream (or set up regeneration in lean mode)."""
    if config.lean:
        return ResponseBank(config)
    if config.nbytes > config.memory_budget_mb * 2**20:
        raise ResourceError(
            f"bank needs {config.nbytes / 2**20:.0f} MiB "
            f"(R={config.replicates}, K={config.K}, J={config.J}, n_max={config.n_max}) "
            f"but the budget is {config.memory_budget_mb:.0f} MiB; "
            "use a smaller n_max or lean (on-the-fly regeneration) mode"
        )
    deviates = np.empty((config.replicates, config.arms, config.J, config.n_max))
    for r0 in range(0, config.replicates, _CHUNK):
        r1 = min(r0 + _CHUNK, config.replicates)
        deviates[r0:r1] = _generate(config, r0, r1)
    return ResponseBank(config, deviates)


def realize(bank: ResponseBank, r: int, n: int, theta, sigma_true: float) -> np.ndarray:
    """Responses of replicate ``r`` for group size ``n``: ``(K+1, J, n)`` array.

    Control is held at mean 0; arm k is shifted by ``theta[k-1]``. Only the
    first ``n`` deviates of every (arm, stage) block are used.
    """
    bank.check_group_size(n)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (bank.config.K,):
        raise ConfigurationError(f"theta must have length K={bank.config.K}")
    if not np.all(np.isfinite(theta)):
        raise ConfigurationError("theta entries must be finite")
    if not sigma_true > 0:
        raise ConfigurationError("sigma_true must be positive")
    z = bank.replicate(r)[:, :, :n]
    shift = np.concatenate(([0.0], theta))
    return shift[:, None, None] + sigma_true * z


def save_bank(bank: ResponseBank, path) -> None:
    """Write the versioned little-endian binary dump."""
    cfg = bank.config
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, cfg.replicates, cfg.K, cfg.J, cfg.n_max, cfg.seed))
        for r0 in range(0, cfg.replicates, _CHUNK):
            r1 = min(r0 + _CHUNK, cfg.replicates)
            fh.write(np.ascontiguousarray(bank.chunk(r0, r1), dtype="<f8").tobytes())


def read_bank_header(path) -> BankConfig:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ConfigurationError(f"{path}: truncated bank header")
    magic, version, R, K, J, n_max, seed = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise ConfigurationError(f"{path}: not a response bank file")
    if version != _VERSION:
        raise ConfigurationError(f"{path}: unsupported bank version {version}")
    return BankConfig(replicates=R, K=K, J=J, n_max=n_max, seed=seed)


def load_bank(path, memory_budget_mb: float = 2048.0) -> ResponseBank:
    header = read_bank_header(path)
    config = BankConfig(
        replicates=header.replicates, K=header.K, J=header.J, n_max=header.n_max,
        seed=header.seed, memory_budget_mb=memory_budget_mb,
    )
    if config.nbytes > memory_budget_mb * 2**20:
        raise ResourceError(f"{path}: bank of {config.nbytes / 2**20:.0f} MiB exceeds budget")
    data = np.fromfile(path, dtype="<f8", offset=_HEADER.size)
    if data.size != config.entries:
        raise ConfigurationError(f"{path}: expected {config.entries} deviates, found {data.size}")
    shape = (config.replicates, config.arms, config.J, config.n_max)
    return ResponseBank(config, data.astype(np.float64, copy=False).reshape(shape))


def load_or_build(config: BankConfig, cache: str | Path | None = None) -> ResponseBank:
    """Reuse a dump at ``cache`` when its header matches ``config``; else build (and dump)."""
    if cache is not None and Path(cache).exists():
        header = read_bank_header(cache)
        same = (header.replicates, header.K, header.J, header.n_max, header.seed) == (
            config.replicates, config.K, config.J, config.n_max, config.seed)
        if same and not config.lean:
            return load_bank(cache, config.memory_budget_mb)
    bank = build_bank(config)
    if cache is not None:
        save_bank(bank, cache)
    return bank
