"""Poissonized two-sample data and the parametric density families.

The marked point process has intensity ``N1 f + N2 g``. It is generated as
``L ~ Poisson(N)`` followed by ``L`` independent draws from the mixture
``(N1/N) f + (N2/N) g``. Each point ``z`` then receives label 1 with
probability ``N1 f(z) / (N1 f(z) + N2 g(z))`` and label 2 otherwise,
independently across points.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .errors import NumericalDegeneracyError, ValidationError
from .graph import PointCloud, as_cloud

__all__ = [
    "SampleDesign",
    "Distribution",
    "IsotropicNormal",
    "FamilyModel",
    "SphericalNormalFamily",
    "TruncatedFamily",
    "spherical_normal_family",
    "LabeledPointCloud",
    "make_rng",
    "replicate_rng",
    "sample_count",
    "label_probabilities",
    "sample_poissonized",
    "write_labeled_csv",
    "read_labeled_csv",
]


def make_rng(seed=None) -> np.random.Generator:
    """Generator from an int, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def replicate_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent stream for ``(master_seed, *key)``.

    The stream depends only on the key, never on which worker or in what
    order replicates run.
    """
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in key)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class SampleDesign:
    n1: int
    n2: int

    def __post_init__(self):
        for name in ("n1", "n2"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer; got {v!r}")
            object.__setattr__(self, name, int(v))

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def p(self) -> float:
        return self.n1 / self.n

    @property
    def q(self) -> float:
        return self.n2 / self.n


# -- densities -------------------------------------------------------------


class Distribution:
    """A fixed density on R^d: ``logpdf``, ``pdf`` and ``sample``.

    ``box`` is a bounding box outside which the density is zero or
    negligible; quadrature routines integrate over it.
    """

    dim: int

    def logpdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, n: int, rng) -> np.ndarray:
        raise NotImplementedError

    def box(self, tail: float = 1e-15):
        raise NotImplementedError

    @property
    def compact(self) -> bool:
        return False


class IsotropicNormal(Distribution):
    """N(mean, scale^2 I_d)."""

    def __init__(self, mean, scale: float = 1.0):
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        if mean.ndim != 1:
            raise ValidationError("mean must be a vector")
        if not scale > 0:
            raise ValidationError(f"scale must be positive; got {scale!r}")
        self.mean = mean
        self.scale = float(scale)
        self.dim = mean.size

    @classmethod
    def standard(cls, d: int, scale: float = 1.0):
        return cls(np.zeros(d), scale)

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        r2 = np.sum((x - self.mean) ** 2, axis=-1)
        return -0.5 * self.dim * math.log(2 * math.pi * self.scale ** 2) - r2 / (2 * self.scale ** 2)

    def sample(self, n, rng):
        return self.mean + self.scale * make_rng(rng).standard_normal((int(n), self.dim))

    def box(self, tail=1e-15):
        half = self.scale * stats.norm.isf(tail / (2 * self.dim))
        return self.mean - half, self.mean + half

    def __repr__(self):
        return f"IsotropicNormal(mean={self.mean.tolist()}, scale={self.scale})"


class _BoundDistribution(Distribution):
    """A family member ``p(. | theta)`` viewed as a plain distribution."""

    def __init__(self, family, theta):
        self.family = family
        self.theta = family.check_theta(theta)
        self.dim = family.dim

    def logpdf(self, x):
        return self.family.logpdf(x, self.theta)

    def sample(self, n, rng):
        return self.family.sample(self.theta, n, rng)

    def box(self, tail=1e-15):
        return self.family.box(self.theta, tail)

    @property
    def compact(self):
        return self.family.support is not None

    def __repr__(self):
        return f"{self.family.name}[theta={self.theta.tolist()}]"


class FamilyModel:
    """Parametric family ``p(x | theta)`` on R^d, theta in R^param_dim.

    Subclasses implement ``logpdf``, ``score`` (gradient of the density in
    theta), ``spatial_hessian_trace`` (Laplacian of the density in x) and
    ``sample``. ``support`` is ``None`` for all of R^d, or a ``(lo, hi)``
    box for compactly supported families.
    """

    name = "family"
    dim: int
    param_dim: int = 1
    support: Optional[tuple] = None

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        if theta.shape != (self.param_dim,):
            raise ValidationError(f"theta must have {self.param_dim} components")
        return theta

    def at(self, theta) -> Distribution:
        return _BoundDistribution(self, theta)

    def logpdf(self, x, theta):
        raise NotImplementedError

    def density(self, x, theta):
        return np.exp(self.logpdf(x, theta))

    def score(self, x, theta):
        raise NotImplementedError

    def spatial_hessian_trace(self, x, theta):
        raise NotImplementedError

    def hessian_ratio(self, x, theta):
        """``tr(H_x p) / p``; override when a stable closed form exists."""
        return self.spatial_hessian_trace(x, theta) / self.density(x, theta)

    def log_score(self, x, theta):
        """``grad_theta log p``, shape ``(..., param_dim)``."""
        return self.score(x, theta) / self.density(x, theta)[..., None]

    def sample(self, theta, n, rng):
        raise NotImplementedError

    def box(self, theta, tail=1e-15):
        raise NotImplementedError

    # optional closed forms, used by the theory module when present
    def fisher_quadratic(self, theta, h):
        return None

    def gradient_integral(self, theta, h):
        return None


class SphericalNormalFamily(FamilyModel):
    """``p(. | theta) = N(0, theta^2 I_d)`` with theta > 0."""

    name = "sph-normal"
    param_dim = 1

    def __init__(self, d: int):
        if int(d) != d or d < 1:
            raise ValidationError(f"dimension must be a positive integer; got {d!r}")
        self.dim = int(d)

    def check_theta(self, theta):
        theta = super().check_theta(theta)
        if not theta[0] > 0:
            raise ValidationError(f"theta must be positive; got {theta[0]!r}")
        return theta

    def _r2(self, x):
        return np.sum(np.asarray(x, dtype=np.float64) ** 2, axis=-1)

    def logpdf(self, x, theta):
        t = self.check_theta(theta)[0]
        return -0.5 * self.dim * math.log(2 * math.pi * t * t) - self._r2(x) / (2 * t * t)

    def log_score(self, x, theta):
        t = self.check_theta(theta)[0]
        return (-self.dim / t + self._r2(x) / t ** 3)[..., None]

    def score(self, x, theta):
        return self.density(x, theta)[..., None] * self.log_score(x, theta)

    def hessian_ratio(self, x, theta):
        t = self.check_theta(theta)[0]
        return self._r2(x) / t ** 4 - self.dim / t ** 2

    def spatial_hessian_trace(self, x, theta):
        return self.density(x, theta) * self.hessian_ratio(x, theta)

    def sample(self, theta, n, rng):
        t = self.check_theta(theta)[0]
        return t * make_rng(rng).standard_normal((int(n), self.dim))

    def box(self, theta, tail=1e-15):
        t = self.check_theta(theta)[0]
        half = t * stats.norm.isf(tail / (2 * self.dim))
        return np.full(self.dim, -half), np.full(self.dim, half)

    def box_mass(self, theta, lo, hi):
        t = self.check_theta(theta)[0]
        lo = np.broadcast_to(lo, (self.dim,)) / t
        hi = np.broadcast_to(hi, (self.dim,)) / t
        return float(np.prod(special.ndtr(hi) - special.ndtr(lo)))

    def fisher_quadratic(self, theta, h):
        # E[(h * dlog p/dtheta)^2] = h^2 Var(chi2_d) / theta^2 = 2 d h^2 / theta^2
        t = self.check_theta(theta)[0]
        h = float(np.atleast_1d(h)[0])
        return 2.0 * self.dim * h * h / t ** 2

    def gradient_integral(self, theta, h):
        """Closed form of  int h d/dtheta(tr(H p)/p) p^((d-2)/d) dx.

        Equals ``-4 pi h d / theta * (d/(d-2))^(d/2) * (d+2)/(d-2)`` for d > 2;
        the integral diverges for d <= 2.
        """
        d = self.dim
        if d <= 2:
            return None
        t = self.check_theta(theta)[0]
        h = float(np.atleast_1d(h)[0])
        return -4.0 * math.pi * h * d / t * (d / (d - 2)) ** (d / 2) * (d + 2) / (d - 2)


def spherical_normal_family(d: int) -> SphericalNormalFamily:
    return SphericalNormalFamily(d)


class TruncatedFamily(FamilyModel):
    """A base family restricted to the box ``[lo, hi]`` and renormalized.

    Sampling is by rejection from the base family. The base family must
    provide ``box_mass(theta, lo, hi)``; its theta-gradient is taken by
    central differences.
    """

    def __init__(self, base: FamilyModel, lo, hi):
        self.base = base
        self.dim = base.dim
        self.param_dim = base.param_dim
        lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (self.dim,)).copy()
        hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (self.dim,)).copy()
        if not np.all(hi > lo):
            raise ValidationError("truncation box must have hi > lo")
        self.support = (lo, hi)
        self.name = f"truncated-{base.name}"

    def check_theta(self, theta):
        return self.base.check_theta(theta)

    def _inside(self, x):
        x = np.asarray(x, dtype=np.float64)
        lo, hi = self.support
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def _mass(self, theta):
        return self.base.box_mass(theta, *self.support)

    def _mass_grad(self, theta):
        theta = self.check_theta(theta)
        grad = np.empty(self.param_dim)
        for i in range(self.param_dim):
            step = 1e-4 * (1 + abs(theta[i]))
            e = np.zeros(self.param_dim)
            e[i] = step
            grad[i] = (self._mass(theta + e) - self._mass(theta - e)) / (2 * step)
        return grad

    def logpdf(self, x, theta):
        out = self.base.logpdf(x, theta) - math.log(self._mass(theta))
        return np.where(self._inside(x), out, -np.inf)

    def log_score(self, x, theta):
        return self.base.log_score(x, theta) - self._mass_grad(theta) / self._mass(theta)

    def score(self, x, theta):
        return self.density(x, theta)[..., None] * self.log_score(x, theta)

    def hessian_ratio(self, x, theta):
        return np.where(self._inside(x), self.base.hessian_ratio(x, theta), 0.0)

    def spatial_hessian_trace(self, x, theta):
        return self.density(x, theta) * self.hessian_ratio(x, theta)

    def sample(self, theta, n, rng):
        rng = make_rng(rng)
        n = int(n)
        out = np.empty((0, self.dim))
        accept = max(self._mass(theta), 1e-3)
        while out.shape[0] < n:
            want = int((n - out.shape[0]) / accept * 1.2) + 16
            draw = self.base.sample(theta, want, rng)
            out = np.vstack([out, draw[self._inside(draw)]])
        return out[:n]

    def box(self, theta, tail=1e-15):
        return self.support


# -- Poissonized sampling --------------------------------------------------


@dataclass(frozen=True, eq=False)
class LabeledPointCloud:
    """A realization of the marked process: locations plus labels in {1, 2}."""

    cloud: PointCloud
    labels: np.ndarray
    design: SampleDesign
    prob1: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        cloud = as_cloud(self.cloud)
        labels = np.asarray(self.labels, dtype=np.int8).ravel()
        if labels.size != len(cloud):
            raise ValidationError(
                f"{labels.size} labels for {len(cloud)} points")
        if labels.size and not np.all((labels == 1) | (labels == 2)):
            raise ValidationError("labels must be 1 or 2")
        object.__setattr__(self, "cloud", cloud)
        object.__setattr__(self, "labels", labels)

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points

    def __len__(self):
        return len(self.cloud)


def sample_count(N: float, seed=None) -> int:
    """One Poisson(N) draw."""
    if not N > 0:
        raise ValidationError(f"Poisson mean must be positive; got {N!r}")
    return int(make_rng(seed).poisson(N))


def label_probabilities(points, f: Distribution, g: Distribution,
                        design: SampleDesign) -> np.ndarray:
    """P(label = 1) at each point, ``N1 f / (N1 f + N2 g)``.

    Computed on the log scale so that tiny densities in high dimension do
    not underflow.
    """
    pts = np.asarray(points, dtype=np.float64)
    lf = f.logpdf(pts) + math.log(design.n1)
    lg = g.logpdf(pts) + math.log(design.n2)
    dead = np.isneginf(lf) & np.isneginf(lg)
    if np.any(dead):
        raise NumericalDegeneracyError(
            f"both densities vanish at {int(dead.sum())} point(s)")
    with np.errstate(invalid="ignore"):
        return special.expit(lf - lg)


def sample_poissonized(design: SampleDesign, f: Distribution, g: Distribution,
                       seed=None) -> LabeledPointCloud:
    """Draw one labeled realization of the process with intensity N1 f + N2 g."""
    if f.dim != g.dim:
        raise ValidationError(f"dimension mismatch: {f.dim} vs {g.dim}")
    rng = make_rng(seed)
    L = int(rng.poisson(design.n))
    from_f = rng.random(L) < design.p
    n_f = int(from_f.sum())
    pts = np.empty((L, f.dim))
    pts[from_f] = f.sample(n_f, rng)
    pts[~from_f] = g.sample(L - n_f, rng)
    prob1 = label_probabilities(pts, f, g, design)
    labels = np.where(rng.random(L) < prob1, 1, 2)
    return LabeledPointCloud(PointCloud(pts), labels, design, prob1)


# -- CSV -------------------------------------------------------------------


def write_labeled_csv(labeled: LabeledPointCloud, path) -> None:
    """Write ``x1,...,xd,label`` rows; coordinates at 17 significant digits."""
    d = labeled.cloud.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(d)] + ["label"])
        for row, lab in zip(labeled.points, labeled.labels):
            w.writerow([format(v, ".17g") for v in row] + [int(lab)])


def read_labeled_csv(path, design: Optional[SampleDesign] = None) -> LabeledPointCloud:
    """Read the CSV written by :func:`write_labeled_csv`.

    Without an explicit design, N1 and N2 are taken as the label counts.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        d = len(header) - 1
        if d < 1 or header != [f"x{i + 1}" for i in range(d)] + ["label"]:
            raise ValidationError(f"{path}: header must be x1,...,xd,label")
        rows = [r for r in reader if r]
    try:
        data = np.array([[float(v) for v in r[:d]] for r in rows]).reshape(-1, d)
        labels = np.array([int(r[d]) for r in rows], dtype=np.int8)
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed row ({exc})") from None
    if any(len(r) != d + 1 for r in rows):
        raise ValidationError(f"{path}: every row needs {d + 1} fields")
    if design is None:
        n1 = int(np.sum(labels == 1))
        n2 = int(np.sum(labels == 2))
        if n1 == 0 or n2 == 0:
            raise ValidationError(
                f"{path}: both labels must occur unless N1, N2 are given")
        design = SampleDesign(n1, n2)
    return LabeledPointCloud(PointCloud(data), labels, design)
