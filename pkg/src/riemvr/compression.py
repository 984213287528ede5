"""Unbiased compressors with conic variance acting on ambient coordinates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .exceptions import ConfigError, StructuralError


@dataclass(frozen=True)
class CompressedMessage:
    """Sparse wire form of a compressed vector: (index, value) pairs."""

    base: np.ndarray | None
    indices: np.ndarray
    values: np.ndarray
    origin_dim: int

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise StructuralError("indices and values differ in length")
        if len(self.indices) > self.origin_dim:
            raise StructuralError("more entries than coordinates")
        idx = self.indices
        if len(idx) == 0:
            return
        # encoders emit sorted indices; the general checks only run otherwise
        if len(idx) > 1 and not np.all(idx[1:] > idx[:-1]):
            if len(np.unique(idx)) != len(idx):
                raise StructuralError("repeated coordinate index")
            lo, hi = idx.min(), idx.max()
        else:
            lo, hi = idx[0], idx[-1]
        if lo < 0 or hi >= self.origin_dim:
            raise StructuralError("coordinate index out of range")

    @property
    def nonzero_entries(self):
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def dense(self):
        out = np.zeros(self.origin_dim)
        out[self.indices] = self.values
        return out

    @classmethod
    def from_dense(cls, v, base=None):
        v = np.asarray(v, dtype=float)
        idx = np.arange(len(v))
        return cls(base, idx, v.copy(), len(v))


def message_cost(msg):
    """Coordinates sent: every stored entry counts, even one whose value is zero."""
    return len(msg.indices)


class Compressor:
    name = "compressor"

    def omega(self, d):
        raise NotImplementedError

    def rho(self, d):
        raise NotImplementedError

    def encode(self, v, rng, base=None):
        raise NotImplementedError

    def compress(self, v, rng):
        return self.encode(v, rng).dense()

    def outcomes(self, v):
        """Every (probability, compressed vector) pair; for exact expectations."""
        raise NotImplementedError


class Identity(Compressor):
    name = "identity"

    def omega(self, d):
        return 0.0

    def rho(self, d):
        return float(d)

    def encode(self, v, rng=None, base=None):
        return CompressedMessage.from_dense(v, base)

    def compress(self, v, rng=None):
        return np.array(v, dtype=float, copy=True)

    def outcomes(self, v):
        v = np.asarray(v)
        return [(1, v.copy()) if v.dtype == object else (1.0, v.astype(float))]

    def __repr__(self):
        return "Identity()"


class RandK(Compressor):
    """Keep k coordinates chosen uniformly without replacement, scaled by d/k."""

    name = "randk"

    def __init__(self, k, d=None):
        if k < 1:
            raise ConfigError("RandK needs k >= 1")
        if d is not None and k > d:
            raise ConfigError(f"RandK with k={k} exceeds dimension d={d}")
        self.k = int(k)
        self.d = d

    def _check_dim(self, d):
        if self.k > d:
            raise ConfigError(f"RandK with k={self.k} exceeds dimension d={d}")

    def omega(self, d):
        self._check_dim(d)
        return d / self.k - 1.0

    def rho(self, d):
        self._check_dim(d)
        return float(self.k)

    def encode(self, v, rng, base=None):
        v = np.asarray(v, dtype=float)
        d = len(v)
        self._check_dim(d)
        idx = np.sort(rng.permutation(d)[: self.k])
        return CompressedMessage(base, idx, v[idx] * (d / self.k), d)

    def outcomes(self, v):
        """Pass an object array of ``Fraction`` for exact rational atoms."""
        v = np.asarray(v)
        exact = v.dtype == object
        v = v if exact else v.astype(float)
        d = len(v)
        self._check_dim(d)
        count = math.comb(d, self.k)
        prob = Fraction(1, count) if exact else 1.0 / count
        scale = Fraction(d, self.k) if exact else d / self.k
        out = []
        for subset in combinations(range(d), self.k):
            q = np.zeros(d, dtype=v.dtype) if not exact else np.array([Fraction(0)] * d, dtype=object)
            idx = list(subset)
            q[idx] = v[idx] * scale
            out.append((prob, q))
        return out

    def __repr__(self):
        return f"RandK({self.k})"


def parse_compressor(spec, d=None):
    """``"identity"`` or ``"randk:<k>"``."""
    spec = spec.strip().lower()
    if spec == "identity":
        return Identity()
    if spec.startswith("randk:"):
        try:
            k = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad compressor spec {spec!r}") from exc
        return RandK(k, d)
    raise ConfigError(f"unknown compressor {spec!r}")


def compress(op, v, rng):
    return op.compress(v, rng)


def verify_conic_variance(op, v, trials=10_000, rng=None):
    """Monte-Carlo estimate of E||Q(v) - v||^2 / ||v||^2 against the operator's omega."""
    if trials < 10_000:
        raise ConfigError("use at least 10^4 trials")
    v = np.asarray(v, dtype=float)
    d = len(v)
    nv2 = float(np.dot(v, v))
    if nv2 == 0.0:
        return {"empirical_omega": 0.0, "pass": True}
    rng = np.random.default_rng(0) if rng is None else rng
    acc = 0.0
    for _ in range(trials):
        e = op.compress(v, rng) - v
        acc += float(np.dot(e, e))
    emp = acc / trials / nv2
    return {"empirical_omega": emp, "pass": emp <= op.omega(d) * (1.0 + 5.0 / math.sqrt(trials))}
