"""Polarization-independent loss on singlet and SPDC states, exact and Monte Carlo.

Every measurement here is diagonal in photon number, so only the diagonal of
the density matrix matters and loss acts on it as independent binomial
thinning of the four mode populations.  Because the outcome on side A depends
only on A's two counts and likewise for B, the exact response of a Fock cell
``(m, p)`` factorizes into a side-A vector over ``m`` and a side-B vector over
``p``.  That keeps the exact path at O(n^3) per scheme.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy.stats import binom

from .errors import ConfigError, SizeCapError
from .measure import (
    OUTCOMES,
    PARITY,
    JointOutcomeProbs,
    MeasurementScheme,
    outcome_table,
)
from .state import MAX_PAIRS, CoefficientMatrix, SpdcWeights, gram_basis

#: Cap on the sector size for exact outcome matrices.
EXACT_MAX_PAIRS = MAX_PAIRS
#: Cap on the sector size for the per-cell Monte Carlo.
MC_MAX_PAIRS = MAX_PAIRS
#: Cap on the truncated SPDC pair number (no coefficient matrices are formed there).
SPDC_MAX_PAIRS = 4000

WORKERS_ENV = "FUZZYBELL_WORKERS"


@dataclass(frozen=True)
class LossChannel:
    """Intensity transmittivity ``eta`` applied to every mode.

    ``mode_etas`` optionally overrides it per mode, ordered
    (A pi_+, A pi_-, B pi_theta, B pi_theta_perp).
    """

    eta: float = 1.0
    mode_etas: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        etas = [self.eta] + list(self.mode_etas or ())
        if self.mode_etas is not None and len(self.mode_etas) != 4:
            raise ConfigError("mode_etas needs exactly four entries")
        for e in etas:
            if not (0.0 <= e <= 1.0):
                raise ConfigError(f"transmittivity must lie in [0, 1], got {e}")

    @property
    def etas(self) -> tuple[float, float, float, float]:
        return tuple(self.mode_etas) if self.mode_etas is not None else (self.eta,) * 4

    @property
    def is_identity(self) -> bool:
        return all(e == 1.0 for e in self.etas)

    def as_dict(self):
        return {"eta": self.eta, "mode_etas": list(self.mode_etas) if self.mode_etas else None}


def default_workers() -> int:
    try:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    except ValueError:
        workers = 0
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer")
    return workers


@dataclass(frozen=True)
class McConfig:
    shots: int = 100_000
    seed: int = 0
    workers: int = field(default_factory=default_workers)

    def __post_init__(self):
        if int(self.shots) != self.shots or self.shots < 1:
            raise ConfigError("shots must be a positive integer")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")


@dataclass
class OutcomeMatrix:
    """``M[a, b, m, p]``: probability that Fock cell (m, p) ends in joint outcome (a, b)."""

    n: int
    M: np.ndarray
    stderr: np.ndarray | None = None
    method: str = "exact"
    shots: int | None = None

    def cell_sums(self) -> np.ndarray:
        return self.M.sum(axis=(0, 1))


def thin_binomial_exact(count_probs, eta: float) -> np.ndarray:
    """Photon-number distribution after a beam splitter of transmittivity ``eta``."""
    dist = np.asarray(count_probs, dtype=float)
    if dist.ndim != 1:
        raise ConfigError("expected a 1-D photon-number distribution")
    LossChannel(eta)
    return binomial_matrix(len(dist) - 1, eta).T @ dist


@lru_cache(maxsize=32)
def binomial_matrix(n_max: int, eta: float) -> np.ndarray:
    """``B[r, i] = P(i of r photons survive)`` for r, i in 0..n_max."""
    r = np.arange(n_max + 1)[:, None]
    i = np.arange(n_max + 1)[None, :]
    mat = binom.pmf(i, r, eta)
    mat[~np.isfinite(mat)] = 0.0
    mat.setflags(write=False)
    return mat


def side_response(n_max: int, scheme: MeasurementScheme, eta_pi: float, eta_perp: float) -> np.ndarray:
    """``R[a, r, s]``: outcome probabilities for a pulse with counts (r, s) sent through loss.

    Valid for every r, s <= n_max; entries are the full double sum over
    surviving counts, done as two matrix products.
    """
    counts = np.arange(n_max + 1)
    w = outcome_table(scheme, counts[:, None], counts[None, :])
    b_pi = binomial_matrix(n_max, float(eta_pi))
    b_perp = binomial_matrix(n_max, float(eta_perp))
    return np.stack([b_pi @ w[a] @ b_perp.T for a in range(3)])


def _side_vectors(n, scheme_A, scheme_B, channel, tables=None):
    """Side-A response over m (counts (n-m, m)) and side-B response over p (counts (p, n-p))."""
    e_a1, e_a2, e_b1, e_b2 = channel.etas
    if tables is None:
        ra = side_response(n, scheme_A, e_a1, e_a2)
        rb = ra if (scheme_B == scheme_A and (e_b1, e_b2) == (e_a1, e_a2)) else side_response(
            n, scheme_B, e_b1, e_b2)
    else:
        ra, rb = tables
    idx = np.arange(n + 1)
    return ra[:, n - idx, idx], rb[:, idx, n - idx]


def _check_scheme(scheme):
    if scheme.kind == PARITY:
        raise ConfigError("parity has no three-outcome map; use parity_correlation")


def outcome_matrix_exact(
    n: int,
    scheme: MeasurementScheme,
    channel: LossChannel,
    scheme_B: MeasurementScheme | None = None,
    max_n: int = EXACT_MAX_PAIRS,
) -> OutcomeMatrix:
    scheme_B = scheme if scheme_B is None else scheme_B
    _check_scheme(scheme)
    _check_scheme(scheme_B)
    if n > max_n:
        raise SizeCapError(f"n={n} exceeds the exact-path cap {max_n}")
    a_vec, b_vec = _side_vectors(n, scheme, scheme_B, channel)
    M = np.einsum("am,bp->abmp", a_vec, b_vec)
    return OutcomeMatrix(n, M, method="exact")


def _cell_rng(seed, n, m, p):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(n, m, p))))


def _outcome_codes(scheme, n_pi, m_perp, coin):
    w = outcome_table(scheme, n_pi, m_perp)
    plus = (w[0] == 1.0) | ((w[0] == 0.5) & coin)
    minus = (w[1] == 1.0) | ((w[1] == 0.5) & ~coin)
    return np.where(plus, 0, np.where(minus, 1, 2))


def _mc_rows(args):
    n, rows, scheme_A, scheme_B, etas, shots, seed = args
    out = np.zeros((len(rows), n + 1, 9), dtype=np.int64)
    for i, m in enumerate(rows):
        for p in range(n + 1):
            rng = _cell_rng(seed, n, m, p)
            a1 = rng.binomial(n - m, etas[0], shots)
            a2 = rng.binomial(m, etas[1], shots)
            b1 = rng.binomial(p, etas[2], shots)
            b2 = rng.binomial(n - p, etas[3], shots)
            coins = rng.random((2, shots)) < 0.5
            code = 3 * _outcome_codes(scheme_A, a1, a2, coins[0]) + _outcome_codes(scheme_B, b1, b2, coins[1])
            out[i, p] = np.bincount(code, minlength=9)
    return out


def outcome_matrix_mc(
    n: int,
    scheme: MeasurementScheme,
    channel: LossChannel,
    cfg: McConfig,
    scheme_B: MeasurementScheme | None = None,
    max_n: int = MC_MAX_PAIRS,
) -> OutcomeMatrix:
    """Per-cell Monte Carlo of the lossy measurement.

    Every cell (m, p) owns the substream ``SeedSequence(seed, spawn_key=(n, m, p))``;
    per shot it draws the four surviving counts and then one tie coin per side,
    so results do not depend on how cells are split between workers.  Standard
    errors use the add-one (Laplace) estimate so that empty or saturated entries
    still carry a one-count resolution.
    """
    scheme_B = scheme if scheme_B is None else scheme_B
    _check_scheme(scheme)
    _check_scheme(scheme_B)
    if n > max_n:
        raise SizeCapError(f"n={n} exceeds the Monte Carlo cap {max_n}")
    etas = channel.etas
    rows = list(range(n + 1))
    if cfg.workers > 1 and n > 0:
        chunks = [rows[i::cfg.workers] for i in range(cfg.workers)]
        jobs = [(n, c, scheme, scheme_B, etas, cfg.shots, cfg.seed) for c in chunks if c]
        counts = np.zeros((n + 1, n + 1, 9), dtype=np.int64)
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for job, res in zip(jobs, pool.map(_mc_rows, jobs)):
                counts[job[1]] = res
    else:
        counts = _mc_rows((n, rows, scheme, scheme_B, etas, cfg.shots, cfg.seed))

    N = cfg.shots
    M = counts.reshape(n + 1, n + 1, 3, 3).transpose(2, 3, 0, 1) / N
    smoothed = (counts.reshape(n + 1, n + 1, 3, 3).transpose(2, 3, 0, 1) + 1.0) / (N + 2.0)
    stderr = np.sqrt(smoothed * (1.0 - smoothed) / N)
    return OutcomeMatrix(n, M, stderr=stderr, method="mc", shots=N)


def fringe_point(coeffs: CoefficientMatrix, M: OutcomeMatrix) -> JointOutcomeProbs:
    """Joint outcome table ``sum_{m,p} M[a, b, m, p] |amp[m, p]|^2``."""
    if coeffs.n != M.n:
        raise ConfigError(f"coefficient matrix has n={coeffs.n} but outcome matrix has n={M.n}")
    w = coeffs.probabilities
    p = np.einsum("abmp,mp->ab", M.M, w)
    stderr = None
    if M.stderr is not None:
        stderr = np.sqrt(np.einsum("abmp,mp->ab", M.stderr**2, w**2))
    return JointOutcomeProbs(p, stderr=stderr, meta={"n": coeffs.n, "theta": coeffs.theta})


class FringeKernel:
    """Joint outcome table as a function of the relative analyser angle.

    Stores ``c[a, b, k]`` so that ``p[a, b](theta) = sum_k c[a, b, k] P_k(cos 2 theta)``,
    where P_k is the Legendre polynomial.  The expansion follows from writing
    ``|amp[m, p]|^2`` through the discrete orthogonal polynomials of
    :func:`fuzzybell.state.gram_basis`; a sector of n pairs contributes
    degrees up to n, i.e. harmonics of theta up to 2n.
    """

    def __init__(self, coefficients: np.ndarray):
        self.coefficients = np.asarray(coefficients, dtype=float)

    @property
    def degree(self) -> int:
        return self.coefficients.shape[-1] - 1

    @classmethod
    def from_sides(cls, n, a_vec, b_vec):
        U = gram_basis(n)
        ua = a_vec @ U.T
        ub = b_vec @ U.T
        return cls(ua[:, None, :] * ub[None, :, :] / (n + 1))

    @classmethod
    def from_outcome_matrix(cls, M: OutcomeMatrix):
        U = gram_basis(M.n)
        return cls(np.einsum("km,abmp,kp->abk", U, M.M, U, optimize=True) / (M.n + 1))

    def __call__(self, theta) -> np.ndarray:
        """Tables of shape ``theta.shape + (3, 3)``."""
        x = np.cos(2.0 * np.asarray(theta, dtype=float))
        vals = legendre.legval(x, np.moveaxis(self.coefficients, -1, 0))
        return np.moveaxis(vals, (0, 1), (-2, -1))

    def correlation_series(self):
        """Legendre coefficients of the conditional-correlation numerator and denominator."""
        c = self.coefficients
        num = c[0, 0] + c[1, 1] - c[0, 1] - c[1, 0]
        den = c[0, 0] + c[1, 1] + c[0, 1] + c[1, 0]
        return num, den


def singlet_kernel(
    n: int,
    scheme_A: MeasurementScheme,
    channel: LossChannel,
    scheme_B: MeasurementScheme | None = None,
    cfg: McConfig | None = None,
) -> tuple[FringeKernel, OutcomeMatrix | None]:
    """Fringe kernel of one singlet sector; MC when ``cfg`` is given, exact otherwise."""
    scheme_B = scheme_A if scheme_B is None else scheme_B
    _check_scheme(scheme_A)
    _check_scheme(scheme_B)
    if cfg is not None:
        M = outcome_matrix_mc(n, scheme_A, channel, cfg, scheme_B)
        return FringeKernel.from_outcome_matrix(M), M
    if n > EXACT_MAX_PAIRS:
        raise SizeCapError(f"n={n} exceeds the exact-path cap {EXACT_MAX_PAIRS}")
    a_vec, b_vec = _side_vectors(n, scheme_A, scheme_B, channel)
    return FringeKernel.from_sides(n, a_vec, b_vec), None


def _check_weights(weights: SpdcWeights):
    if weights.truncation_mass > weights.truncation_tolerance:
        raise ConfigError(
            f"SPDC truncation mass {weights.truncation_mass:.3g} exceeds tolerance "
            f"{weights.truncation_tolerance:.3g}")
    if weights.n_max > SPDC_MAX_PAIRS:
        raise SizeCapError(f"SPDC truncation n_max={weights.n_max} exceeds cap {SPDC_MAX_PAIRS}")


def spdc_kernel(
    weights: SpdcWeights,
    scheme_A: MeasurementScheme,
    channel: LossChannel,
    scheme_B: MeasurementScheme | None = None,
    cfg: McConfig | None = None,
) -> FringeKernel:
    """Mixture over pair sectors; no cross-sector terms survive photon-number-diagonal measurements."""
    scheme_B = scheme_A if scheme_B is None else scheme_B
    _check_scheme(scheme_A)
    _check_scheme(scheme_B)
    _check_weights(weights)
    N = weights.n_max
    coef = np.zeros((3, 3, N + 1))
    if cfg is not None:
        for n in range(N + 1):
            if weights.weight[n] == 0.0:
                continue
            kern, _ = singlet_kernel(n, scheme_A, channel, scheme_B, cfg)
            coef[..., : n + 1] += weights.weight[n] * kern.coefficients
        return FringeKernel(coef / weights.weight.sum())

    e_a1, e_a2, e_b1, e_b2 = channel.etas
    ra = side_response(N, scheme_A, e_a1, e_a2)
    rb = ra if (scheme_B == scheme_A and (e_b1, e_b2) == (e_a1, e_a2)) else side_response(
        N, scheme_B, e_b1, e_b2)
    for n in range(N + 1):
        w = weights.weight[n]
        if w == 0.0:
            continue
        a_vec, b_vec = _side_vectors(n, scheme_A, scheme_B, channel, tables=(ra, rb))
        coef[..., : n + 1] += w * FringeKernel.from_sides(n, a_vec, b_vec).coefficients
    # renormalize the truncated mixture
    return FringeKernel(coef / weights.weight.sum())


def spdc_fringe_point(
    weights: SpdcWeights,
    theta: float,
    scheme_A: MeasurementScheme,
    scheme_B: MeasurementScheme,
    channel: LossChannel,
    cfg: McConfig | None = None,
) -> JointOutcomeProbs:
    kern = spdc_kernel(weights, scheme_A, channel, scheme_B, cfg)
    meta = {"g": weights.g, "theta": float(theta), "eta": channel.eta,
            "scheme_A": scheme_A.as_dict(), "scheme_B": scheme_B.as_dict()}
    return JointOutcomeProbs(kern(theta), meta=meta)


def outcome_labels():
    sym = {+1: "p", -1: "m", 0: "z"}
    return [f"p_{sym[a]}{sym[b]}" for a in OUTCOMES for b in OUTCOMES]

