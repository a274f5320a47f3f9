"""Dichotomizing POVMs on a pair of polarization photon counts and their joint statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import eval_chebyu

from .errors import ConfigError, UndefinedCorrelationError
from .state import CoefficientMatrix

DICHOTOMIC = "dichotomic"
ORTHOGONALITY_FILTER = "of"
THRESHOLD_DETECTOR = "td"
PARITY = "parity"
KINDS = (DICHOTOMIC, ORTHOGONALITY_FILTER, THRESHOLD_DETECTOR, PARITY)

#: Outcome order used for every 3-vector and 3x3 table in the package.
OUTCOMES = (+1, -1, 0)
PLUS, MINUS, ZERO = 0, 1, 2


@dataclass(frozen=True)
class MeasurementScheme:
    """How a pulse's two polarization counts are reduced to +1, -1 or 0 (inconclusive).

    ``strict`` selects the reading of the thresholds: by default a pulse passes the
    filter when the count difference (OF) or the total count (TD) is *at least*
    the threshold; with ``strict=True`` it must *exceed* it.  A zero threshold
    always degenerates to the pure dichotomic scheme.
    """

    kind: str = DICHOTOMIC
    k: int = 0
    h: int = 0
    strict: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scheme kind {self.kind!r}; expected one of {KINDS}")
        for name in ("k", "h"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ConfigError(f"threshold {name} must be a nonnegative integer, got {value!r}")

    @classmethod
    def dichotomic(cls) -> MeasurementScheme:
        return cls(DICHOTOMIC)

    @classmethod
    def orthogonality_filter(cls, k: int, strict: bool = False) -> MeasurementScheme:
        return cls(ORTHOGONALITY_FILTER, k=k, strict=strict)

    @classmethod
    def threshold_detector(cls, h: int, strict: bool = False) -> MeasurementScheme:
        return cls(THRESHOLD_DETECTOR, h=h, strict=strict)

    @classmethod
    def parity(cls) -> MeasurementScheme:
        return cls(PARITY)

    @property
    def threshold(self) -> int:
        return self.k if self.kind == ORTHOGONALITY_FILTER else self.h

    def label(self) -> str:
        if self.kind == ORTHOGONALITY_FILTER:
            return f"of(k={self.k})"
        if self.kind == THRESHOLD_DETECTOR:
            return f"td(h={self.h})"
        return self.kind

    def as_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "k": self.k, "h": self.h, "strict": self.strict}


@dataclass(frozen=True)
class OutcomeWeights:
    w_plus: float
    w_minus: float
    w_zero: float


@dataclass
class JointOutcomeProbs:
    """Joint outcome table ``p[a, b]`` with rows/columns ordered (+1, -1, 0)."""

    p: np.ndarray
    stderr: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, outcomes):
        a, b = outcomes
        return float(self.p[OUTCOMES.index(a), OUTCOMES.index(b)])

    @property
    def conclusive(self) -> float:
        return float(self.p[:2, :2].sum())

    @property
    def correlation(self) -> float:
        """Correlation conditioned on both sides being conclusive."""
        conc = self.conclusive
        if conc <= 0.0:
            raise UndefinedCorrelationError("no conclusive joint outcomes; correlation undefined")
        p = self.p
        return float((p[PLUS, PLUS] + p[MINUS, MINUS] - p[PLUS, MINUS] - p[MINUS, PLUS]) / conc)


def outcome_table(scheme: MeasurementScheme, n_pi, m_perp) -> np.ndarray:
    """Vectorized outcome weights; returns an array of shape ``(3, *broadcast_shape)``."""
    if scheme.kind == PARITY:
        raise ConfigError("parity is a correlation benchmark, not a three-outcome map")
    n_pi, m_perp = np.broadcast_arrays(np.asarray(n_pi), np.asarray(m_perp))
    diff = n_pi - m_perp
    plus = (diff > 0).astype(float) + 0.5 * (diff == 0)
    minus = (diff < 0).astype(float) + 0.5 * (diff == 0)
    if scheme.kind == ORTHOGONALITY_FILTER and scheme.k > 0:
        k = scheme.k + 1 if scheme.strict else scheme.k
        plus = (diff >= k).astype(float)
        minus = (-diff >= k).astype(float)
    elif scheme.kind == THRESHOLD_DETECTOR and scheme.h > 0:
        h = scheme.h + 1 if scheme.strict else scheme.h
        passed = (n_pi + m_perp) >= h
        plus = plus * passed
        minus = minus * passed
    return np.stack([plus, minus, 1.0 - plus - minus])


def outcome_weights(n_pi: int, m_perp: int, scheme: MeasurementScheme) -> OutcomeWeights:
    if n_pi < 0 or m_perp < 0:
        raise ConfigError("photon counts must be nonnegative")
    w = outcome_table(scheme, n_pi, m_perp)
    return OutcomeWeights(float(w[PLUS]), float(w[MINUS]), float(w[ZERO]))


def side_weights(n: int, scheme: MeasurementScheme, side: str) -> np.ndarray:
    """Lossless outcome weights per sector index, shape (3, n+1).

    Side A reads counts ``(n - m, m)``; side B reads ``(p, n - p)``.
    """
    idx = np.arange(n + 1)
    if side == "A":
        return outcome_table(scheme, n - idx, idx)
    if side == "B":
        return outcome_table(scheme, idx, n - idx)
    raise ValueError(side)


def joint_probabilities(
    coeffs: CoefficientMatrix, scheme_A: MeasurementScheme, scheme_B: MeasurementScheme
) -> JointOutcomeProbs:
    n = coeffs.n
    if coeffs.amp.shape != (n + 1, n + 1):
        raise ConfigError("coefficient matrix does not match its pair number")
    wa = side_weights(n, scheme_A, "A")
    wb = side_weights(n, scheme_B, "B")
    p = wa @ coeffs.probabilities @ wb.T
    meta = {"n": n, "theta": coeffs.theta, "eta": 1.0,
            "scheme_A": scheme_A.as_dict(), "scheme_B": scheme_B.as_dict()}
    return JointOutcomeProbs(p, meta=meta)


def parity_correlation(n: int, theta):
    """Correlation of photon-number parities, (-1)^n sin((n+1)t) / ((n+1) sin t).

    ``t`` is the rotation angle on the Poincare sphere, i.e. twice the angle
    between the two linear-polarization analysers.  Evaluated as a Chebyshev
    polynomial of the second kind, which is regular at t = 0 mod pi and
    returns the limit there.
    """
    if n < 0:
        raise ConfigError("pair number must be nonnegative")
    value = (-1) ** n * eval_chebyu(n, np.cos(theta)) / (n + 1)
    return float(value) if np.ndim(value) == 0 else value
