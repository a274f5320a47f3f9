"""Singlet spin-n/2 states of two polarization modes and the SPDC pair-number weights.

Conventions used throughout the package
---------------------------------------
Side A is analysed in the fixed basis {pi_+, pi_-}; its photon counts for the
sector index ``m`` are ``(n - m, m)``.  Side B is analysed in the basis rotated by
``theta``, {pi_theta, pi_theta_perp}; its counts for index ``p`` are
``(p, n - p)``.  ``amp[m][p]`` is the real amplitude of
``|(n-m)+, m->_A |p theta, (n-p) theta_perp>_B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from .errors import ConfigError, SizeCapError

#: Largest pair number accepted by :func:`singlet_coefficients` unless overridden.
MAX_PAIRS = 400

DEFAULT_TRUNCATION = 1e-6


@dataclass(frozen=True)
class SingletSpec:
    """An n-pair singlet; each spatial mode carries exactly ``n`` photons."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ConfigError(f"pair number must be a nonnegative integer, got {self.n!r}")


@dataclass(frozen=True)
class CoefficientMatrix:
    n: int
    theta: float
    amp: np.ndarray = field(repr=False)
    method: str = "series"

    @property
    def probabilities(self) -> np.ndarray:
        return self.amp**2


@dataclass(frozen=True)
class SpdcWeights:
    """Probability of each n-pair sector of the down-converted state, truncated at ``n_max``."""

    g: float
    n_max: int
    weight: np.ndarray = field(repr=False)
    truncation_mass: float
    truncation_tolerance: float

    @property
    def mean_pairs(self) -> float:
        return float(np.dot(np.arange(self.n_max + 1), self.weight))


def _check_pairs(n, max_n):
    if int(n) != n or n < 0:
        raise ConfigError(f"pair number must be a nonnegative integer, got {n!r}")
    if n > max_n:
        raise SizeCapError(f"n={n} exceeds the configured cap {max_n}")
    return int(n)


@lru_cache(maxsize=16)
def _coefficient_terms(n: int):
    """Theta-independent parts of every (m, r, q) term, flattened over the valid triangle."""
    lf = gammaln(np.arange(n + 1, dtype=float) + 1.0)  # lf[i] = log(i!)
    m, r, q = [], [], []
    for mi in range(n + 1):
        for ri in range(n + 1):
            lo, hi = max(0, mi + ri - n), min(mi, ri)
            cnt = hi - lo + 1
            m.append(np.full(cnt, mi))
            r.append(np.full(cnt, ri))
            q.append(np.arange(lo, hi + 1))
    m, r, q = (np.concatenate(a) for a in (m, r, q))
    # sqrt of C(n-m, r-q) C(n-r, m-q) C(m, q) C(r, q)
    log_binom = 0.5 * (lf[n - m] + lf[n - r] + lf[m] + lf[r]) - (
        lf[r - q] + lf[n - m - r + q] + lf[m - q] + lf[q]
    )
    e_cos = m + r - 2 * q
    e_sin = n - m - r + 2 * q
    # side B index p = n - r (the theta count)
    cell = m * (n + 1) + (n - r)
    return cell, log_binom, e_cos, e_sin, q % 2


#: Absolute error budget per amplitude; the series is abandoned beyond it.
SERIES_ERROR_BUDGET = 1e-13
#: Beyond this size "auto" does not even try the series (it would always be rejected).
SERIES_MAX_PAIRS = 120


def singlet_coefficients(
    n: int, theta: float, max_n: int = MAX_PAIRS, method: str = "auto"
) -> CoefficientMatrix:
    """Amplitudes of the n-pair singlet with side B analysed at angle ``theta``.

    ``method="series"`` sums, for each cell, signed terms over ``q`` in
    max(0, m+r-n) <= q <= min(m, r) (r = n - p is the theta_perp count); each
    term magnitude is a single exponential of a log-gamma sum so nothing
    overflows.  The sum alternates, and for n beyond ~50 near theta = pi/4 the
    cancellation eats all significant digits.  ``method="auto"`` therefore
    bounds the rounding error by eps * sum|terms| and switches to
    ``method="rotation"`` (exponential of the two-mode rotation generator,
    taken through the eigenvectors of its symmetric tridiagonal form)
    when the bound exceeds ``SERIES_ERROR_BUDGET``.
    """
    n = _check_pairs(n, max_n)
    theta = float(theta)
    if not math.isfinite(theta):
        raise ConfigError("theta must be finite")
    if method not in ("auto", "series", "rotation"):
        raise ConfigError(f"unknown coefficient method {method!r}")

    if method == "auto" and n > SERIES_MAX_PAIRS:
        method = "rotation"
    if method == "rotation":
        amp = _rotation_amplitudes(n, theta)
    else:
        amp, abs_sum = _series_amplitudes(n, theta)
        if method == "auto" and np.finfo(float).eps * abs_sum > SERIES_ERROR_BUDGET:
            amp, method = _rotation_amplitudes(n, theta), "rotation"
        else:
            method = "series"
    amp.setflags(write=False)
    return CoefficientMatrix(n=n, theta=theta, amp=amp, method=method)


def _series_amplitudes(n, theta):
    if n <= SERIES_MAX_PAIRS:
        cell, log_binom, e_cos, e_sin, q_odd = _coefficient_terms(n)
    else:
        cell, log_binom, e_cos, e_sin, q_odd = _coefficient_terms.__wrapped__(n)
    c, s = math.cos(theta), math.sin(theta)
    log_pow = np.zeros_like(log_binom)
    negative = q_odd.astype(bool)
    for e, v in ((e_cos, c), (e_sin, s)):
        if v == 0.0:
            log_pow[e > 0] = -math.inf
        else:
            log_pow += e * math.log(abs(v))
            if v < 0:
                negative ^= (e % 2).astype(bool)
    terms = np.exp(log_binom + log_pow)
    size = (n + 1) ** 2
    abs_sum = np.bincount(cell, weights=terms, minlength=size).max()
    terms[negative] *= -1.0
    amp = np.bincount(cell, weights=terms, minlength=size).reshape(n + 1, n + 1)
    amp *= _sector_signs(n)[:, None]
    return amp, abs_sum / math.sqrt(n + 1)


@lru_cache(maxsize=16)
def _rotation_eigensystem(n: int):
    # G generates the polarization rotation on |k pi, (n-k) pi_perp>, k = 0..n.  It is
    # antisymmetric tridiagonal, so G = i P T P* with T real symmetric and P = diag(i^k).
    k = np.arange(1, n + 1, dtype=float)
    lam, vecs = eigh_tridiagonal(np.zeros(n + 1), np.sqrt(k * (n - k + 1)))
    phase = 1j ** np.arange(n + 1)
    left = phase[:, None] * vecs
    left.setflags(write=False)
    return lam, left


def _rotation_amplitudes(n, theta):
    lam, left = _rotation_eigensystem(n) if n <= 2 * MAX_PAIRS else _rotation_eigensystem.__wrapped__(n)
    rot = ((left * np.exp(1j * theta * lam)) @ left.conj().T).real
    return _sector_signs(n)[:, None] * rot


def _sector_signs(n):
    return np.where(np.arange(n + 1) % 2 == 0, 1.0, -1.0) / math.sqrt(n + 1)


@lru_cache(maxsize=64)
def _gram_basis_cached(n: int) -> np.ndarray:
    size = n + 1
    k = np.arange(1, size, dtype=float)
    off = np.sqrt(k * k * (size * size - k * k) / (4.0 * (4.0 * k * k - 1.0)))
    _, vecs = eigh_tridiagonal(np.zeros(size), off)
    vecs *= np.sign(vecs[0])
    vecs.setflags(write=False)
    return vecs


def gram_basis(n: int) -> np.ndarray:
    """Orthonormal discrete polynomials on the points 0..n (row k has degree k).

    These are the diagonal spherical-tensor components of a spin n/2, and give
    ``amp[m][p]**2 = sum_k U[k, m] U[k, p] P_k(cos 2 theta) / (n + 1)``.
    Rows come from the eigenvectors of the three-term-recurrence Jacobi
    matrix; the recurrence itself is unstable beyond n of a few tens.
    """
    if n <= 600:
        return _gram_basis_cached(int(n))
    return _gram_basis_cached.__wrapped__(int(n))


def spdc_weights(g: float, truncation_tolerance: float = DEFAULT_TRUNCATION) -> SpdcWeights:
    """Pair-number distribution ``(n+1) tanh(g)^(2n) / cosh(g)^4`` truncated at small tail mass."""
    g = float(g)
    if not math.isfinite(g) or g < 0:
        raise ConfigError(f"gain must be finite and >= 0, got {g}")
    if not 0.0 < truncation_tolerance < 1.0:
        raise ConfigError("truncation_tolerance must lie in (0, 1)")

    x = math.tanh(g) ** 2
    if x == 0.0:
        return SpdcWeights(g, 0, np.array([1.0]), 0.0, truncation_tolerance)
    if x >= 1.0:
        raise ConfigError(f"gain {g} too large to represent in double precision")

    # tail(N) = P(pairs > N) = x^(N+1) ((N+2) - (N+1) x); find the first N under tolerance
    def log_tail(N):
        return (N + 1) * math.log(x) + math.log((N + 2) - (N + 1) * x)

    log_tol = math.log(truncation_tolerance)
    hi = 1
    while log_tail(hi) > log_tol:
        hi *= 2
    lo = 0
    if log_tail(0) <= log_tol:
        hi = 0
    while lo < hi:
        mid = (lo + hi) // 2
        if log_tail(mid) <= log_tol:
            hi = mid
        else:
            lo = mid + 1
    n_max = hi
    ns = np.arange(n_max + 1)
    weight = (ns + 1) * np.exp(ns * math.log(x)) * (1.0 - x) ** 2
    return SpdcWeights(g, n_max, weight, math.exp(log_tail(n_max)), truncation_tolerance)


def mean_photons(g: float) -> float:
    """Mean photon number in one polarization mode, sinh(g)**2 (twice that per spatial mode)."""
    if g < 0:
        raise ConfigError("gain must be >= 0")
    return math.sinh(g) ** 2
