"""Model parameters, heat-bath laws, and elementary collision kinematics.

Everything downstream (the Fourier solver and the jump-process simulator)
builds on the small set of objects defined here, so the conventions are
fixed once and for all in this module:

* characteristic functions use the convention  E exp(-i w xi),
* the bath law always has mean zero; its variance is written kg below,
* a pair collision rotates the two participating velocities by an angle
  theta; a bath collision rotates the pair (particle velocity, bath draw).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KacParams",
    "ThermostatSpec",
    "MomentRecord",
    "pair_collision",
    "thermostat_collision",
    "ks_statistic",
]

_THERMOSTAT_KINDS = ("gaussian", "uniform", "rademacher", "two_point", "dirac_zero")


@dataclass(frozen=True)
class KacParams:
    """Rates and size of the particle chain.

    lam is the total pair-collision rate of the whole chain divided by N
    (each of the C(N,2) unordered pairs is equally likely); mu is the
    per-particle bath-collision rate.  Both in inverse time units.
    """

    lam: float
    mu: float
    n_particles: int

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam >= 0.0):
            raise ValueError(f"lam must be finite and >= 0, got {self.lam}")
        if not (math.isfinite(self.mu) and self.mu >= 0.0):
            raise ValueError(f"mu must be finite and >= 0, got {self.mu}")
        n = self.n_particles
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ValueError(f"n_particles must be an integer >= 1, got {n!r}")
        if n == 1 and self.lam != 0.0:
            # a single particle has no collision partner
            raise ValueError("n_particles == 1 requires lam == 0")

    @property
    def gamma(self) -> float:
        """Fraction lam/(lam+mu) of jump events that are pair collisions.

        Defined as 0 when both rates vanish (the frozen chain).
        """
        total = self.lam + self.mu
        return self.lam / total if total > 0.0 else 0.0

    @property
    def total_rate(self) -> float:
        """Total jump rate of the chain, (lam + mu) * N."""
        return (self.lam + self.mu) * self.n_particles


def pair_collision(v_i, v_j, theta):
    """Rotate the velocities of a colliding pair by the angle theta.

    Returns (v_i', v_j').  The map is orthogonal on the (v_i, v_j) plane,
    so v_i'^2 + v_j'^2 == v_i^2 + v_j^2 and the rest of the chain is
    untouched.  Accepts scalars or broadcastable arrays.
    """
    c, s = np.cos(theta), np.sin(theta)
    return v_i * c + v_j * s, -v_i * s + v_j * c


def thermostat_collision(v_j, w, theta):
    """Rotate (particle velocity, bath draw) by theta.

    Returns (v_j', w') with v_j' = v_j cos(theta) + w sin(theta) and
    w' = w cos(theta) - v_j sin(theta); the bath side w' is discarded by
    the master dynamics but returned so energy bookkeeping can be checked:
    v_j'^2 + w'^2 == v_j^2 + w^2.
    """
    c, s = np.cos(theta), np.sin(theta)
    return v_j * c + w * s, w * c - v_j * s


@dataclass(frozen=True)
class ThermostatSpec:
    """A mean-zero bath law with closed-form transform and moments.

    Use the named constructors; they enforce mean zero by construction and
    fill in the exact second and fourth moments.  params holds the raw
    shape parameters of the kind (see each constructor).
    """

    kind: str
    params: tuple
    second_moment: float
    fourth_moment: float

    def __post_init__(self):
        if self.kind not in _THERMOSTAT_KINDS:
            raise ValueError(f"unknown thermostat kind {self.kind!r}")

    # -- constructors ---------------------------------------------------

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> "ThermostatSpec":
        """Centered normal with standard deviation sigma > 0."""
        if not sigma > 0.0:
            raise ValueError("sigma must be > 0")
        return cls("gaussian", (float(sigma),), sigma**2, 3.0 * sigma**4)

    @classmethod
    def uniform(cls, half_width: float = 1.0) -> "ThermostatSpec":
        """Uniform on [-half_width, half_width]."""
        a = float(half_width)
        if not a > 0.0:
            raise ValueError("half_width must be > 0")
        return cls("uniform", (a,), a**2 / 3.0, a**4 / 5.0)

    @classmethod
    def rademacher(cls, scale: float = 1.0) -> "ThermostatSpec":
        """Fair coin on {-scale, +scale}."""
        s = float(scale)
        if not s > 0.0:
            raise ValueError("scale must be > 0")
        return cls("rademacher", (s,), s**2, s**4)

    @classmethod
    def two_point(cls, a: float, b: float) -> "ThermostatSpec":
        """Two atoms a and b; the weight p of a solves p*a + (1-p)*b = 0.

        a and b must have opposite signs so that p lands in (0, 1).  The
        law is genuinely asymmetric whenever a != -b.
        """
        a, b = float(a), float(b)
        if not (a * b < 0.0):
            raise ValueError("a and b must have opposite signs")
        p = b / (b - a)
        assert 0.0 < p < 1.0
        m2 = p * a**2 + (1.0 - p) * b**2
        m4 = p * a**4 + (1.0 - p) * b**4
        return cls("two_point", (a, b, p), m2, m4)

    @classmethod
    def dirac_zero(cls) -> "ThermostatSpec":
        """Point mass at 0 (a bath that only removes energy)."""
        return cls("dirac_zero", (), 0.0, 0.0)

    # -- law ------------------------------------------------------------

    @property
    def mean(self) -> float:
        return 0.0

    def sample(self, rng: np.random.Generator, size=None):
        """Draw from the bath law using the supplied generator."""
        if self.kind == "gaussian":
            return rng.normal(0.0, self.params[0], size)
        if self.kind == "uniform":
            a = self.params[0]
            return rng.uniform(-a, a, size)
        if self.kind == "rademacher":
            s = self.params[0]
            return s * (2.0 * rng.integers(0, 2, size) - 1.0)
        if self.kind == "two_point":
            a, b, p = self.params
            return np.where(rng.random(size) < p, a, b)
        # dirac_zero
        return np.zeros(size) if size is not None else 0.0

    def charfun(self, xi):
        """E exp(-i w xi), vectorized over xi; exact closed form per kind."""
        xi = np.asarray(xi, dtype=float)
        if self.kind == "gaussian":
            sigma = self.params[0]
            return np.exp(-0.5 * (sigma * xi) ** 2) + 0.0j
        if self.kind == "uniform":
            a = self.params[0]
            # sin(a xi)/(a xi) with the removable singularity at 0
            return np.sinc(a * xi / np.pi) + 0.0j
        if self.kind == "rademacher":
            return np.cos(self.params[0] * xi) + 0.0j
        if self.kind == "two_point":
            a, b, p = self.params
            return p * np.exp(-1j * a * xi) + (1.0 - p) * np.exp(-1j * b * xi)
        return np.ones_like(xi) + 0.0j

    def cdf(self, x):
        """Right-continuous distribution function, vectorized."""
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            sigma = self.params[0]
            return 0.5 * (1.0 + _erf(x / (sigma * math.sqrt(2.0))))
        if self.kind == "uniform":
            a = self.params[0]
            return np.clip((x + a) / (2.0 * a), 0.0, 1.0)
        out = np.zeros_like(x)
        for atom, mass in self.atoms():
            out = out + mass * (x >= atom)
        return out

    def atoms(self):
        """Point masses of the law as (value, weight) pairs; empty if none."""
        if self.kind == "rademacher":
            s = self.params[0]
            return ((-s, 0.5), (s, 0.5))
        if self.kind == "two_point":
            a, b, p = self.params
            lo, hi = (a, b) if a < b else (b, a)
            w_lo = p if lo == a else 1.0 - p
            return ((lo, w_lo), (hi, 1.0 - w_lo))
        if self.kind == "dirac_zero":
            return ((0.0, 1.0),)
        return ()


_erf = np.vectorize(math.erf, otypes=[float])


@dataclass(frozen=True)
class MomentRecord:
    """Tracked moments of the chain at one instant, with standard errors.

    energy is E sum_k v_k^2 for the whole chain; first[k] = E v_k; and
    mixed[k, l] = E v_k v_l (the diagonal holds the per-particle second
    moments).  Standard errors are across replicas and are zero for a
    single replica.
    """

    time: float
    energy: float
    energy_stderr: float
    first: np.ndarray
    first_stderr: np.ndarray
    mixed: np.ndarray
    mixed_stderr: np.ndarray

    def __post_init__(self):
        n = self.first.shape[0]
        if self.first_stderr.shape != (n,) or self.mixed.shape != (n, n):
            raise ValueError("inconsistent moment record shapes")
        if not np.all(np.isfinite(self.first)) or not math.isfinite(self.energy):
            raise ValueError("non-finite moment record")

    @property
    def n_particles(self) -> int:
        return self.first.shape[0]

    def mixed_offdiag_mean(self) -> float:
        """Average of E v_k v_l over the k != l pairs."""
        n = self.n_particles
        if n < 2:
            raise ValueError("need at least two particles for mixed moments")
        mask = ~np.eye(n, dtype=bool)
        return float(np.mean(self.mixed[mask]))


def ks_statistic(samples, spec: ThermostatSpec) -> float:
    """Exact Kolmogorov-Smirnov statistic of samples against spec's law.

    Handles atoms: the sup of |F_n - F| is evaluated from both sides at
    every observed value, using the exact point masses for left limits.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    u, counts = np.unique(x, return_counts=True)
    f_hi = np.cumsum(counts) / n
    f_lo = f_hi - counts / n
    f = spec.cdf(u)
    f_left = f.copy()
    for atom, mass in spec.atoms():
        f_left = f_left - mass * (u == atom)
    d = max(np.max(np.abs(f_hi - f)), np.max(np.abs(f_lo - f_left)))
    return float(d)
