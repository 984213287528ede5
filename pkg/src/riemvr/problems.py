"""Finite-sum and online objectives with exact gradients.

Every problem exposes the same small oracle surface used by the optimizers:
``sample_batch`` to draw indices (or fresh samples), ``batch_gradient`` for
the mean Riemannian gradient over a batch, and ``full_gradient`` / ``value``
for the whole objective. Gradients are returned as ambient coordinate arrays
that are tangent at the query point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, StructuralError
from .geometry import Euclidean, Manifold, Sphere

# dense eigendecomposition is used for f_star only up to this dimension
EIG_MAX_DIM = 64


@dataclass
class ProblemMeta:
    n: float
    d: int
    L: float
    mu: float = 0.0
    sigma: float = 0.0
    f_star: float | None = None
    x_star: np.ndarray | None = None
    # largest single-component smoothness constant, when known
    L_components: float | None = None

    def __post_init__(self):
        if not self.L > 0:
            raise ConfigError("L must be positive")
        if self.mu < 0 or self.mu > self.L:
            raise ConfigError("need 0 <= mu <= L")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")


@dataclass(frozen=True)
class IndexBatch:
    indices: np.ndarray
    replacement: bool = False
    # set by sample_batch so hot loops skip re-validation
    trusted: bool = field(default=False, compare=False, repr=False)

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class SampleBatch:
    """Fresh draws from an online distribution, reusable at several points."""

    samples: np.ndarray

    def __len__(self):
        return len(self.samples)


class FiniteSumProblem:
    """f(x) = (1/n) sum_i f_i(x) on ``manifold``."""

    manifold: Manifold
    meta: ProblemMeta
    kind = "finite-sum"

    @property
    def n(self):
        return self.meta.n

    @property
    def d(self):
        return self.meta.d

    def _check_batch(self, batch):
        if batch.trusted:
            return
        idx = batch.indices
        if len(idx) == 0:
            raise StructuralError("empty batch")
        if idx.min() < 0 or idx.max() >= self.n:
            raise StructuralError(f"batch index out of range [0, {self.n})")
        if not batch.replacement and len(np.unique(idx)) != len(idx):
            raise StructuralError("batch without replacement has repeated indices")

    def all_indices(self):
        return IndexBatch(np.arange(self.n), trusted=True)

    def sample_batch(self, size, rng, replace=False):
        """Draw ``size`` component indices, returned sorted."""
        if size < 1 or (size > self.n and not replace):
            raise ConfigError(f"batch size {size} not in [1, {self.n}]")
        if size == self.n and not replace:
            return self.all_indices()
        if size == 1:
            return IndexBatch(rng.integers(self.n, size=1), replace, trusted=True)
        idx = rng.choice(self.n, size=size, replace=replace)
        idx.sort()
        return IndexBatch(idx, replace, trusted=True)

    def component_gradient(self, i, x):
        if not 0 <= i < self.n:
            raise StructuralError(f"component index {i} out of range [0, {self.n})")
        return self.batch_gradient(IndexBatch(np.array([i])), x)

    def minibatch_gradient(self, batch, x):
        return self.batch_gradient(batch, x)

    def full_gradient(self, x):
        return self.batch_gradient(self.all_indices(), x)

    def metric_gradient(self, x):
        """Exact gradient for reporting; oracle wrappers do not charge it."""
        return self.full_gradient(x)

    def batch_gradient(self, batch, x):
        raise NotImplementedError

    def value(self, x):
        raise NotImplementedError

    def component_value(self, i, x):
        raise NotImplementedError

    def dist_to_opt(self, x):
        if self.meta.x_star is None:
            return None
        return self.manifold.dist(x, self.meta.x_star)

    def subset(self, indices):
        raise NotImplementedError


class QuadraticProblem(FiniteSumProblem):
    """f_i(x) = 1/2 (x - b_i)^T H_i (x - b_i) on R^d.

    ``mu`` and ``L`` default to the exact constants of the data: the smallest
    eigenvalue of the mean Hessian and the largest component spectral norm.
    """

    kind = "quadratic"

    def __init__(self, H, b, mu=None, L=None):
        H = np.asarray(H, dtype=float)
        b = np.asarray(b, dtype=float)
        if H.ndim != 3 or H.shape[1] != H.shape[2] or b.shape != H.shape[:2]:
            raise StructuralError("expected H of shape (n, d, d) and b of shape (n, d)")
        if not np.allclose(H, np.swapaxes(H, 1, 2)):
            raise StructuralError("component Hessians must be symmetric")
        self.H = H
        self.b = b
        n, d = b.shape
        self.manifold = Euclidean(d)
        H_mean = H.mean(axis=0)
        self.H_mean = H_mean
        eig_mean = np.linalg.eigvalsh(H_mean)
        L_comp = float(max(np.abs(np.linalg.eigvalsh(Hi)).max() for Hi in H))
        mu = float(max(eig_mean[0], 0.0)) if mu is None else float(mu)
        L = L_comp if L is None else float(L)
        x_star = f_star = None
        if eig_mean[0] > 0:
            rhs = np.einsum("kij,kj->i", H, b) / n
            x_star = np.linalg.solve(H_mean, rhs)
        self._c = np.einsum("kij,kj->i", H, b) / n
        self._const = float(np.einsum("ki,kij,kj->", b, H, b) / n)
        self.meta = ProblemMeta(n=n, d=d, L=L, mu=mu, L_components=L_comp)
        if x_star is not None:
            self.meta.x_star = x_star
            self.meta.f_star = self.value(x_star)

    def batch_gradient(self, batch, x):
        self._check_batch(batch)
        self.manifold._check_shape(x)
        idx = batch.indices
        if len(idx) == 1:
            i = idx[0]
            return self.H[i] @ (x - self.b[i])
        if len(idx) == self.n and not batch.replacement:
            return self.H_mean @ x - self._c
        r = x - self.b[idx]
        return np.einsum("kij,kj->i", self.H[idx], r) / len(idx)

    def value(self, x):
        return float(0.5 * (x @ self.H_mean @ x) - x @ self._c + 0.5 * self._const)

    def suboptimality(self, x):
        """f(x) - f*, computed without cancellation."""
        r = x - self.meta.x_star
        return float(0.5 * r @ self.H_mean @ r)

    def component_value(self, i, x):
        r = x - self.b[i]
        return float(0.5 * r @ self.H[i] @ r)

    def subset(self, indices):
        indices = np.asarray(indices)
        return QuadraticProblem(self.H[indices], self.b[indices])


def _random_orthogonal(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def make_quadratic(n, d, mu, L, seed=0, heterogeneity=0.9, centers=None, rotate=True):
    """Synthetic strongly convex finite sum with mean-Hessian spectrum spanning [mu, L].

    The mean Hessian has eigenvalues ``mu`` and ``L`` exactly. Components add
    zero-mean symmetric perturbations confined to the directions other than the
    top one, with radius ``heterogeneity * (L - mu) / 2``, so every component
    stays L-smooth (possibly nonconvex) while f is mu-strongly convex.
    """
    if not 0 < mu <= L:
        raise ConfigError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if n < 1 or d < 1:
        raise ConfigError("n and d must be positive")
    rng = np.random.default_rng(seed)
    if d == 1:
        spectrum = np.array([mu])
        block = 1
        radius = heterogeneity * min(L - mu, L + mu) / 2
    else:
        spectrum = np.concatenate([np.linspace(mu, (mu + L) / 2, d - 1), [L]])
        block = d - 1
        radius = heterogeneity * (L - mu) / 2
    Q = _random_orthogonal(d, rng) if rotate else np.eye(d)
    P = np.zeros((n, d, d))
    if n > 1 and radius > 0:
        S = rng.standard_normal((n, block, block))
        S = 0.5 * (S + np.swapaxes(S, 1, 2))
        S -= S.mean(axis=0)
        scale = max(np.abs(np.linalg.eigvalsh(Si)).max() for Si in S)
        P[:, :block, :block] = radius * S / scale
    H = Q @ (np.diag(spectrum) + P) @ Q.T
    H = 0.5 * (H + np.swapaxes(H, 1, 2))
    if centers is None:
        b = rng.standard_normal((n, d))
    else:
        b = np.broadcast_to(np.asarray(centers, dtype=float), (n, d)).copy()
    return QuadraticProblem(H, b, mu=mu, L=L)


class RayleighProblem(FiniteSumProblem):
    """Leading eigenvector of A = sum_i z_i z_i^T as min -x^T A x on the sphere.

    Components are f_i(x) = -n (z_i^T x)^2 so that their mean is exactly
    -x^T A x.
    """

    kind = "rayleigh"

    def __init__(self, Z, L_factor=1.5):
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 2 or Z.shape[0] < 1 or Z.shape[1] < 2:
            raise StructuralError("samples must form an (n, d) array with n >= 1, d >= 2")
        self.Z = Z
        n, d = Z.shape
        self.manifold = Sphere(d)
        A = Z.T @ Z
        self.A = A
        if d <= EIG_MAX_DIM:
            w, V = np.linalg.eigh(A)
            lam_max = float(w[-1])
            f_star, x_star = -lam_max, V[:, -1].copy()
        else:
            from scipy.sparse.linalg import eigsh

            lam_max = float(eigsh(A, k=1, which="LA", return_eigenvectors=False)[0])
            f_star = x_star = None
        self.lam_max = lam_max
        L = 2.0 * L_factor * lam_max
        L_comp = float(2.0 * n * np.max(np.sum(Z * Z, axis=1)))
        self.meta = ProblemMeta(
            n=n, d=d, L=L if L > 0 else 1.0, f_star=f_star, x_star=x_star, L_components=L_comp
        )

    def batch_gradient(self, batch, x):
        self._check_batch(batch)
        self.manifold._check_shape(x)
        Zb = self.Z[batch.indices]
        u = (-2.0 * self.n / len(batch)) * (Zb.T @ (Zb @ x))
        return u - np.dot(x, u) * x

    def value(self, x):
        s = self.Z @ x
        return float(-np.dot(s, s))

    def component_value(self, i, x):
        return float(-self.n * np.dot(self.Z[i], x) ** 2)

    def dist_to_opt(self, x):
        xs = self.meta.x_star
        if xs is None:
            return None
        return min(self.manifold.dist(x, xs), self.manifold.dist(x, -xs))

    def subset(self, indices):
        return RayleighProblem(self.Z[np.asarray(indices)])


def make_rayleigh(samples, L_factor=1.5):
    """Eigenvector problem from sample vectors (rows of ``samples``)."""
    samples = [np.asarray(z, dtype=float) for z in samples]
    if not samples:
        raise StructuralError("need at least one sample vector")
    d = samples[0].shape
    if any(z.shape != d for z in samples) or len(d) != 1:
        raise StructuralError("all sample vectors must share one dimension")
    return RayleighProblem(np.stack(samples), L_factor=L_factor)


def load_samples_csv(path):
    """Read a sample matrix (rows are samples) from a CSV file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return np.loadtxt(path, delimiter=",", ndmin=2)


class OnlineRayleighProblem(FiniteSumProblem):
    """f(x) = E[-scale (z^T x)^2] on the sphere, sampled fresh on every call.

    ``distribution`` is either ``{"kind": "gaussian", "cov": C}`` (zero mean)
    or ``{"kind": "atoms", "atoms": Z, "probs": p}``. With ``scale = n`` and
    uniform atoms the objective coincides with the finite-sum problem on the
    same vectors.
    """

    kind = "online-rayleigh"

    def __init__(self, distribution, scale=1.0, seed=0, sigma_draws=10_000):
        kind = distribution.get("kind")
        self.scale = float(scale)
        if kind == "gaussian":
            cov = np.atleast_2d(np.asarray(distribution["cov"], dtype=float))
            d = cov.shape[0]
            w, V = np.linalg.eigh(cov)
            self._root = V * np.sqrt(np.clip(w, 0.0, None))
            self.C = cov
            self.atoms = self.probs = None
        elif kind == "atoms":
            atoms = np.atleast_2d(np.asarray(distribution["atoms"], dtype=float))
            probs = distribution.get("probs")
            probs = (
                np.full(len(atoms), 1.0 / len(atoms))
                if probs is None
                else np.asarray(probs, dtype=float)
            )
            if len(probs) != len(atoms) or not math.isclose(probs.sum(), 1.0):
                raise ConfigError("atom probabilities must match atoms and sum to 1")
            self.atoms, self.probs = atoms, probs
            self.C = np.einsum("k,ki,kj->ij", probs, atoms, atoms)
            d = atoms.shape[1]
        else:
            raise ConfigError(f"unknown distribution kind {kind!r}")
        if d < 2:
            raise StructuralError("online samples need dimension >= 2")
        self.manifold = Sphere(d)
        A = self.scale * self.C
        w, V = np.linalg.eigh(A)
        L = 3.0 * float(w[-1]) if w[-1] > 0 else 1.0
        self.meta = ProblemMeta(n=math.inf, d=d, L=L, f_star=-float(w[-1]), x_star=V[:, -1].copy())
        x_ref = np.zeros(d)
        x_ref[0] = 1.0
        self.meta.sigma = self._estimate_sigma(x_ref, np.random.default_rng(seed), sigma_draws)

    def _sample_gradients(self, Z, x):
        G = (-2.0 * self.scale) * (Z @ x)[:, None] * Z
        return G - np.outer(G @ x, x)

    def _estimate_sigma(self, x, rng, draws):
        if self.atoms is not None:
            G = self._sample_gradients(self.atoms, x)
            mean = self.probs @ G
            return float(math.sqrt(self.probs @ np.sum((G - mean) ** 2, axis=1)))
        G = self._sample_gradients(self.draw(draws, rng), x)
        dev = G - self.full_gradient(x)
        return float(math.sqrt(np.mean(np.sum(dev * dev, axis=1))))

    def draw(self, size, rng):
        if self.atoms is not None:
            return self.atoms[rng.choice(len(self.atoms), size=size, p=self.probs)]
        return rng.standard_normal((size, self.d)) @ self._root.T

    def sample_batch(self, size, rng, replace=True):
        if size < 1:
            raise ConfigError("batch size must be at least 1")
        return SampleBatch(self.draw(size, rng))

    def all_indices(self):
        raise StructuralError("an online problem has no finite index set")

    def batch_gradient(self, batch, x):
        if len(batch) == 0:
            raise StructuralError("empty batch")
        Zb = batch.samples
        u = (-2.0 * self.scale / len(Zb)) * (Zb.T @ (Zb @ x))
        return u - np.dot(x, u) * x

    def full_gradient(self, x):
        if self.atoms is not None:
            return self.probs @ self._sample_gradients(self.atoms, x)
        u = -2.0 * self.scale * (self.C @ x)
        return u - np.dot(x, u) * x

    def value(self, x):
        return float(-self.scale * x @ self.C @ x)

    def dist_to_opt(self, x):
        xs = self.meta.x_star
        return min(self.manifold.dist(x, xs), self.manifold.dist(x, -xs))


def make_online(distribution_spec, seed=0, scale=1.0):
    return OnlineRayleighProblem(distribution_spec, scale=scale, seed=seed)


def online_batch_size(sigma, eps):
    """Primary minibatch size ceil(2 sigma^2 / eps^2) for the online setting."""
    if eps <= 0:
        raise ConfigError("eps must be positive")
    return max(1, math.ceil(2.0 * sigma**2 / eps**2))


def partition_indices(n, workers, strategy="shard-equal", rng=None):
    """Split range(n) into ``workers`` nonempty contiguous shards.

    ``strategy`` is ``"shard-equal"`` or ``"shard-dirichlet:<alpha>"``.
    """
    if workers < 1 or workers > n:
        raise ConfigError(f"cannot split {n} components among {workers} workers")
    if strategy == "shard-equal":
        return np.array_split(np.arange(n), workers)
    if strategy.startswith("shard-dirichlet:"):
        try:
            alpha = float(strategy.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad Dirichlet parameter in {strategy!r}") from exc
        if alpha <= 0:
            raise ConfigError("Dirichlet alpha must be positive")
        rng = np.random.default_rng(0) if rng is None else rng
        props = rng.dirichlet(np.full(workers, alpha))
        sizes = 1 + rng.multinomial(n - workers, props)
        perm = rng.permutation(n)
        return np.split(perm, np.cumsum(sizes)[:-1])
    raise ConfigError(f"unknown partition strategy {strategy!r}")
