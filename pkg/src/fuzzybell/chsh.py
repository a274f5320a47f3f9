"""Conditional correlations and the CHSH parameter maximized over analyser angles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import minimize

from .errors import ConfigError, UndefinedCorrelationError
from .loss import LossChannel, McConfig, singlet_kernel, spdc_kernel
from .measure import PARITY, MeasurementScheme, parity_correlation
from .state import SingletSpec, SpdcWeights

State = Union[SingletSpec, SpdcWeights, int]

_MIN_CONCLUSIVE = 1e-300


@dataclass(frozen=True)
class AngleSettings:
    a: float
    a_prime: float
    b: float
    b_prime: float

    def __post_init__(self):
        for name in ("a", "a_prime", "b", "b_prime"):
            object.__setattr__(self, name, float(getattr(self, name)) % math.pi)

    def pairs(self):
        """(A angle, B angle) for the terms of S in order (a,b), (a,b'), (a',b), (a',b')."""
        return ((self.a, self.b), (self.a, self.b_prime), (self.a_prime, self.b), (self.a_prime, self.b_prime))

    def differences(self) -> np.ndarray:
        return np.array([tb - ta for ta, tb in self.pairs()])


@dataclass(frozen=True)
class CHSHResult:
    s_value: float
    settings: AngleSettings
    correlations: tuple[float, float, float, float]
    conclusive_probs: tuple[float, float, float, float]
    method: str

    def recomputed_s(self) -> float:
        e = self.correlations
        return e[0] + e[1] + e[2] - e[3]


def _as_state(state):
    if isinstance(state, (SingletSpec, SpdcWeights)):
        return state
    return SingletSpec(int(state))


class CorrelationModel:
    """E(theta) and P_conclusive(theta) for a frozen state/scheme/channel configuration.

    The joint statistics depend on the analyser angles only through their
    difference, because the singlet is invariant under a common rotation.
    """

    def __init__(self, state, scheme, channel=None, cfg=None, scheme_B=None):
        self.state = _as_state(state)
        self.scheme = scheme
        self.scheme_B = scheme if scheme_B is None else scheme_B
        self.channel = LossChannel(1.0) if channel is None else channel
        self.method = "mc" if cfg is not None else "exact"
        self._parity = scheme.kind == PARITY or self.scheme_B.kind == PARITY
        if self._parity:
            if scheme.kind != self.scheme_B.kind:
                raise ConfigError("parity must be used on both sides")
            if not self.channel.is_identity:
                raise ConfigError("the parity benchmark is defined for a lossless channel only")
            self.method = "exact"
            n_top = self.state.n_max if isinstance(self.state, SpdcWeights) else self.state.n
            self.degree = 2 * n_top
            return
        if isinstance(self.state, SpdcWeights):
            kern = spdc_kernel(self.state, scheme, self.channel, self.scheme_B, cfg)
        else:
            kern, _ = singlet_kernel(self.state.n, scheme, self.channel, self.scheme_B, cfg)
        self.kernel = kern
        self._num, self._den = kern.correlation_series()
        self.degree = 2 * (len(self._num) - 1)

    def __call__(self, theta):
        """Return ``(E, p_conclusive)`` at relative angle(s) ``theta``."""
        theta = np.asarray(theta, dtype=float)
        if self._parity:
            if isinstance(self.state, SpdcWeights):
                e = sum(w * parity_correlation(n, 2.0 * theta) for n, w in enumerate(self.state.weight))
                e = e / self.state.weight.sum()
            else:
                # the closed form takes the Poincare-sphere angle, twice the polarizer angle
                e = parity_correlation(self.state.n, 2.0 * theta)
            return np.asarray(e, dtype=float), np.ones_like(theta)
        x = np.cos(2.0 * theta)
        num = legendre.legval(x, self._num)
        den = legendre.legval(x, self._den)
        if np.any(den <= _MIN_CONCLUSIVE):
            raise UndefinedCorrelationError("conclusive probability is zero; correlation undefined")
        return np.clip(num / den, -1.0, 1.0), den

    def s_value(self, settings: AngleSettings | np.ndarray) -> float:
        diffs = settings.differences() if isinstance(settings, AngleSettings) else settings
        e, _ = self(diffs)
        return float(e[0] + e[1] + e[2] - e[3])


def correlation_E(
    state: State,
    angle_A: float,
    angle_B: float,
    scheme: MeasurementScheme,
    channel: LossChannel | None = None,
    cfg: McConfig | None = None,
    scheme_B: MeasurementScheme | None = None,
) -> tuple[float, float]:
    model = CorrelationModel(state, scheme, channel, cfg, scheme_B)
    e, conc = model(angle_B - angle_A)
    return float(e), float(conc)


def _differences(x):
    # x = (a_prime, b, b_prime) with a fixed at 0
    a_p, b, b_p = x
    return np.array([b, b_p, b - a_p, b_p - a_p])


def maximize_chsh(
    state: State,
    scheme: MeasurementScheme,
    channel: LossChannel | None = None,
    cfg: McConfig | None = None,
    scheme_B: MeasurementScheme | None = None,
    restarts: int = 16,
    seed: int = 0,
    angle_tol: float = 1e-6,
    s_tol: float = 1e-8,
) -> CHSHResult:
    """Maximize S = E(a,b) + E(a,b') + E(a',b) - E(a',b') over the analyser angles.

    A scan of the one-parameter family a=0, b=phi, a'=2 phi, b'=-phi
    (on which S = 3 E(phi) - E(3 phi)) at 1 degree, or finer when E(theta)
    oscillates faster than that (harmonics up to 2n in theta), seeds a Nelder-Mead search over the three
    angle differences; ``restarts`` uniformly random starting points guard
    against local maxima.  S is maximized with its sign; since E(theta + pi/2)
    = -E(theta) for the symmetric schemes, this equals the maximum of |S|.
    """
    model = CorrelationModel(state, scheme, channel, cfg, scheme_B)

    def objective(x):
        return -model.s_value(_differences(x))

    n_scan = max(180, 24 * (model.degree + 1))
    phis = np.arange(n_scan) * (math.pi / n_scan)
    e1, _ = model(phis)
    e3, _ = model(3.0 * phis)
    phi = phis[int(np.argmax(3.0 * e1 - e3))]
    starts = [np.array([2.0 * phi, phi, -phi])]
    rng = np.random.default_rng(seed)
    starts += list(rng.uniform(0.0, math.pi, size=(restarts, 3)))

    best = None
    for x0 in starts:
        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"xatol": angle_tol, "fatol": s_tol, "maxiter": 20000, "maxfev": 40000})
        if best is None or res.fun < best.fun:
            best = res

    a_p, b, b_p = best.x
    settings = AngleSettings(0.0, a_p, b, b_p)
    e, conc = model(settings.differences())
    correlations = tuple(float(v) for v in e)
    s = correlations[0] + correlations[1] + correlations[2] - correlations[3]
    return CHSHResult(s, settings, correlations, tuple(float(v) for v in conc), model.method)
