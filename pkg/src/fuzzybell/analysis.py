"""Fringe sweeps and the diagnostics computed from them.

All angles are the relative analyser angle theta in radians; a full fringe
period is [0, pi).  Outcome pairs are given as ``(a, b)`` with a, b in
{+1, -1, 0}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, UndefinedCorrelationError
from .loss import (
    LossChannel,
    McConfig,
    fringe_point,
    outcome_matrix_mc,
    side_response,
    singlet_kernel,
    spdc_kernel,
    _check_weights,
)
from .measure import OUTCOMES, PARITY, JointOutcomeProbs, MeasurementScheme, outcome_table
from .state import SingletSpec, SpdcWeights, singlet_coefficients

DEFAULT_GRID = 181

_ANTI = (+1, -1)
_SAME = (+1, +1)


def _as_state(state):
    if isinstance(state, (SingletSpec, SpdcWeights)):
        return state
    return SingletSpec(int(state))


def state_config(state) -> dict[str, Any]:
    state = _as_state(state)
    if isinstance(state, SpdcWeights):
        return {"gain": state.g, "n_max": state.n_max, "truncation_tolerance": state.truncation_tolerance}
    return {"n": state.n}


def _top_pairs(state) -> int:
    return state.n_max if isinstance(state, SpdcWeights) else state.n


def make_grid(grid: int | Sequence[float] = DEFAULT_GRID) -> np.ndarray:
    """``grid`` points spread uniformly over [0, pi), or an explicit angle list."""
    if np.ndim(grid) == 0:
        size = int(grid)
        if size != grid or size < 1:
            raise ConfigError(f"grid size must be a positive integer, got {grid!r}")
        return np.arange(size) * (math.pi / size)
    theta = np.asarray(grid, dtype=float)
    if theta.ndim != 1 or theta.size == 0 or not np.all(np.isfinite(theta)):
        raise ConfigError("grid must be a non-empty list of finite angles")
    if np.any(np.diff(theta) <= 0):
        raise ConfigError("grid must be strictly increasing")
    return theta


@dataclass
class FringePattern:
    """Joint outcome tables ``points[i]`` at the angles ``theta_grid[i]``."""

    theta_grid: np.ndarray
    points: np.ndarray
    stderr: np.ndarray | None = None
    config: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.points.shape != (len(self.theta_grid), 3, 3):
            raise ConfigError("fringe points must have shape (grid, 3, 3)")

    def __len__(self):
        return len(self.theta_grid)

    def table(self, i: int) -> JointOutcomeProbs:
        se = None if self.stderr is None else self.stderr[i]
        meta = dict(self.config, theta=float(self.theta_grid[i]))
        return JointOutcomeProbs(self.points[i], stderr=se, meta=meta)

    @property
    def conclusive(self) -> np.ndarray:
        return self.points[:, :2, :2].sum(axis=(1, 2))

    def series(self, pair=_ANTI, normalized: bool = False) -> np.ndarray:
        a, b = (OUTCOMES.index(o) for o in pair)
        values = self.points[:, a, b]
        if not normalized:
            return values
        conc = self.conclusive
        if np.any(conc <= 0.0):
            raise UndefinedCorrelationError("conclusive probability vanishes on the grid")
        return values / conc

    def series_stderr(self, pair=_ANTI, normalized: bool = False) -> np.ndarray | None:
        if self.stderr is None:
            return None
        a, b = (OUTCOMES.index(o) for o in pair)
        se = self.stderr[:, a, b]
        return se / self.conclusive if normalized else se

    def covers_period(self) -> bool:
        theta = self.theta_grid
        if len(theta) < 2:
            return False
        step = np.max(np.diff(theta))
        return theta[-1] - theta[0] + step >= math.pi - 1e-9

    def is_uniform_period(self) -> bool:
        """True for the grid ``j * pi / G``, j = 0..G-1."""
        G = len(self.theta_grid)
        return G >= 1 and np.allclose(self.theta_grid, np.arange(G) * (math.pi / G), rtol=0, atol=1e-12)


def fringe_sweep(
    state,
    scheme_A: MeasurementScheme,
    channel: LossChannel | None = None,
    grid: int | Sequence[float] = DEFAULT_GRID,
    cfg: McConfig | None = None,
    scheme_B: MeasurementScheme | None = None,
) -> FringePattern:
    """Joint outcome tables over an angle grid.

    The exact path evaluates the angle-independent fringe kernel at every
    grid point.  The Monte Carlo path freezes one outcome matrix per pair
    sector and combines it with the coefficient matrix at each angle, which
    also gives per-entry standard errors.
    """
    state = _as_state(state)
    scheme_B = scheme_A if scheme_B is None else scheme_B
    channel = LossChannel(1.0) if channel is None else channel
    if PARITY in (scheme_A.kind, scheme_B.kind):
        raise ConfigError("parity has no outcome map; fringes need a dichotomizing scheme")
    theta = make_grid(grid)
    config = {
        "state": state_config(state),
        "scheme_A": scheme_A.as_dict(),
        "scheme_B": scheme_B.as_dict(),
        "channel": channel.as_dict(),
        "method": "exact" if cfg is None else "mc",
        "shots": None if cfg is None else cfg.shots,
        "seed": None if cfg is None else cfg.seed,
    }

    if cfg is None:
        if isinstance(state, SpdcWeights):
            kern = spdc_kernel(state, scheme_A, channel, scheme_B)
        else:
            kern, _ = singlet_kernel(state.n, scheme_A, channel, scheme_B)
        return FringePattern(theta, kern(theta), None, config)

    if isinstance(state, SpdcWeights):
        _check_weights(state)
        sectors = [(n, w) for n, w in enumerate(state.weight) if w > 0.0]
        total = state.weight.sum()
    else:
        sectors, total = [(state.n, 1.0)], 1.0
    points = np.zeros((len(theta), 3, 3))
    var = np.zeros((len(theta), 3, 3))
    for n, w in sectors:
        M = outcome_matrix_mc(n, scheme_A, channel, cfg, scheme_B)
        for i, t in enumerate(theta):
            fp = fringe_point(singlet_coefficients(n, t), M)
            points[i] += (w / total) * fp.p
            var[i] += (w / total) ** 2 * fp.stderr**2
    return FringePattern(theta, points, np.sqrt(var), config)


def visibility(fringe: FringePattern, outcome_pair=_SAME) -> float:
    """(max - min) / (max + min) of the fringe normalized by the conclusive probability."""
    return _visibility(fringe, outcome_pair)[0]


def visibility_stderr(fringe: FringePattern, outcome_pair=_SAME) -> float:
    """First-order error of :func:`visibility` from the extremal points (0 on exact fringes)."""
    return _visibility(fringe, outcome_pair)[1]


def _visibility(fringe, pair):
    if not fringe.covers_period():
        raise ConfigError("visibility needs a fringe covering a full period [0, pi)")
    f = fringe.series(pair, normalized=True)
    i_hi, i_lo = int(np.argmax(f)), int(np.argmin(f))
    hi, lo = f[i_hi], f[i_lo]
    if hi + lo <= 0.0:
        raise UndefinedCorrelationError("degenerate fringe: max + min = 0")
    v = (hi - lo) / (hi + lo)
    se = fringe.series_stderr(pair, normalized=True)
    if se is None:
        return float(v), 0.0
    d_hi = 2.0 * lo / (hi + lo) ** 2
    d_lo = 2.0 * hi / (hi + lo) ** 2
    return float(v), float(math.hypot(d_hi * se[i_hi], d_lo * se[i_lo]))


def _side_success(n_top, scheme, eta_pi, eta_perp):
    """Per-sector single-side conclusive probability for n = 0..n_top.

    In a singlet sector the side-A counts (n - m, m) are uniform over m, for
    any analyser angle.
    """
    R = side_response(n_top, scheme, eta_pi, eta_perp)
    conc = R[0] + R[1]
    out = np.empty(n_top + 1)
    for n in range(n_top + 1):
        idx = np.arange(n + 1)
        out[n] = conc[n - idx, idx].mean()
    return out


def success_probability(
    state,
    scheme: MeasurementScheme,
    channel: LossChannel | None = None,
    cfg: McConfig | None = None,
) -> float:
    """Probability that one side's pulse yields a conclusive (+1 or -1) outcome."""
    return success_probability_with_error(state, scheme, channel, cfg)[0]


def success_probability_with_error(state, scheme, channel=None, cfg=None) -> tuple[float, float]:
    state = _as_state(state)
    channel = LossChannel(1.0) if channel is None else channel
    if scheme.kind == PARITY:
        raise ConfigError("parity has no inconclusive outcome")
    eta_pi, eta_perp = channel.etas[:2]
    if isinstance(state, SpdcWeights):
        _check_weights(state)
        weights = state.weight / state.weight.sum()
    else:
        weights = np.zeros(state.n + 1)
        weights[state.n] = 1.0

    if cfg is None:
        per_sector = _side_success(len(weights) - 1, scheme, eta_pi, eta_perp)
        return float(np.dot(weights, per_sector)), 0.0

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(0,))))
    n = rng.choice(len(weights), size=cfg.shots, p=weights)
    m = rng.integers(0, n + 1)
    a1 = rng.binomial(n - m, eta_pi)
    a2 = rng.binomial(m, eta_perp)
    # ties split between +1 and -1, so a pulse is conclusive iff its zero weight vanishes
    hits = int(np.count_nonzero(outcome_table(scheme, a1, a2)[2] == 0.0))
    p = hits / cfg.shots
    p_s = (hits + 1.0) / (cfg.shots + 2.0)
    return p, math.sqrt(p_s * (1.0 - p_s) / cfg.shots)


@dataclass
class VisibilityCurve:
    parameter: str
    values: np.ndarray
    visibility: np.ndarray
    success_probability: np.ndarray
    visibility_stderr: np.ndarray
    success_stderr: np.ndarray


def _scheme_for(kind, threshold, strict=False):
    if kind == "of":
        return MeasurementScheme.orthogonality_filter(int(threshold), strict)
    if kind == "td":
        return MeasurementScheme.threshold_detector(int(threshold), strict)
    raise ConfigError(f"threshold sweeps need kind 'of' or 'td', got {kind!r}")


def visibility_curve(
    state,
    kind: str,
    thresholds: Sequence[int],
    channel: LossChannel | None = None,
    grid: int | Sequence[float] = DEFAULT_GRID,
    cfg: McConfig | None = None,
    outcome_pair=_SAME,
    strict: bool = False,
) -> VisibilityCurve:
    """Visibility and single-side success probability against the OF or TD threshold."""
    vis, vis_se, succ, succ_se = [], [], [], []
    for t in thresholds:
        scheme = _scheme_for(kind, t, strict)
        fr = fringe_sweep(state, scheme, channel, grid, cfg)
        v, se = _visibility(fr, outcome_pair)
        p, p_se = success_probability_with_error(state, scheme, channel, cfg)
        vis.append(v)
        vis_se.append(se)
        succ.append(p)
        succ_se.append(p_se)
    name = "k" if kind == "of" else "h"
    return VisibilityCurve(name, np.asarray(thresholds), np.array(vis), np.array(succ),
                           np.array(vis_se), np.array(succ_se))


def visibility_vs_eta(
    state,
    scheme: MeasurementScheme,
    etas: Sequence[float],
    grid: int | Sequence[float] = DEFAULT_GRID,
    cfg: McConfig | None = None,
    outcome_pair=_SAME,
) -> VisibilityCurve:
    vis, vis_se, succ, succ_se = [], [], [], []
    for eta in etas:
        channel = LossChannel(float(eta))
        fr = fringe_sweep(state, scheme, channel, grid, cfg)
        v, se = _visibility(fr, outcome_pair)
        p, p_se = success_probability_with_error(state, scheme, channel, cfg)
        vis.append(v)
        vis_se.append(se)
        succ.append(p)
        succ_se.append(p_se)
    return VisibilityCurve("eta", np.asarray(etas, dtype=float), np.array(vis), np.array(succ),
                           np.array(vis_se), np.array(succ_se))


@dataclass
class MatchedComparison:
    """``reference`` curve values at its own success probabilities against ``other`` interpolated there."""

    success_probability: np.ndarray
    reference_visibility: np.ndarray
    other_visibility: np.ndarray
    stderr: np.ndarray

    def margin(self) -> np.ndarray:
        return self.other_visibility - self.reference_visibility


def compare_at_matched_success(other: VisibilityCurve, reference: VisibilityCurve) -> MatchedComparison:
    """Interpolate ``other`` (linear in log P) at the success probabilities of ``reference``.

    Reference points outside the other curve's success-probability range are dropped.
    """
    lp = np.log(other.success_probability)
    order = np.argsort(lp)
    lp, v_other, se_other = lp[order], other.visibility[order], other.visibility_stderr[order]
    target = np.log(reference.success_probability)
    keep = (target >= lp[0] - 1e-12) & (target <= lp[-1] + 1e-12)
    t = np.clip(target[keep], lp[0], lp[-1])
    interp = np.interp(t, lp, v_other)
    interp_se = np.interp(t, lp, se_other)
    se = np.hypot(interp_se, reference.visibility_stderr[keep])
    return MatchedComparison(reference.success_probability[keep], reference.visibility[keep], interp, se)


def harmonic_content(fringe: FringePattern, outcome_pair=_SAME, pairs: int | None = None) -> np.ndarray:
    """Fourier magnitudes ``mags[j]`` of the fringe's cos/sin(j theta) components.

    The fringe has period pi, so only even ``j`` can be nonzero.  ``mags[0]``
    is the mean; ``mags[j]`` for j > 0 is the amplitude of that harmonic.
    ``pairs`` sets the aliasing guard (grid size at least 4 pairs + 2) and is
    read from the fringe's config when omitted.
    """
    if not fringe.is_uniform_period():
        raise ConfigError("harmonic analysis needs the uniform grid j*pi/G, j = 0..G-1")
    if pairs is None:
        st = fringe.config.get("state", {})
        pairs = st.get("n", st.get("n_max"))
    G = len(fringe)
    if pairs is not None and G < 4 * int(pairs) + 2:
        need = 4 * int(pairs) + 2
        raise ConfigError(f"grid of {G} points aliases harmonics of n={pairs}; need at least {need}")
    X = np.abs(np.fft.rfft(fringe.series(outcome_pair))) / G
    X[1:] *= 2.0
    if G % 2 == 0:
        X[-1] /= 2.0
    mags = np.zeros(2 * len(X) - 1)
    mags[::2] = X
    return mags


def harmonic_share(mags: np.ndarray, index: int = 2) -> float:
    """Fraction of the non-constant power carried by harmonic ``index``."""
    power = np.asarray(mags[1:]) ** 2
    total = power.sum()
    if total <= 0.0:
        raise UndefinedCorrelationError("fringe is flat; no oscillating power")
    return float(mags[index] ** 2 / total)


@dataclass
class RatioResult:
    theta: np.ndarray
    ratio: np.ndarray
    crossings: int


def linear_reference(theta, theta_min: float) -> np.ndarray:
    """Triangular wave of period pi, 0 at ``theta_min`` and 0.5 a quarter turn away."""
    d = np.mod(np.asarray(theta, dtype=float) - theta_min, math.pi)
    return 0.5 * (1.0 - np.abs(d - math.pi / 2.0) / (math.pi / 2.0))


def linear_reference_ratio(fringe: FringePattern, outcome_pair=_SAME, atol: float = 1e-12) -> RatioResult:
    """Fringe divided by the classical triangular response, and its crossings of 1.

    Grid points where the reference vanishes are dropped; a crossing is a sign
    change of ``ratio - 1`` between consecutive points, ignoring points within
    ``atol`` of 1 (tangencies).
    """
    if not fringe.covers_period():
        raise ConfigError("the linear-reference ratio needs a fringe covering a full period")
    f = fringe.series(outcome_pair, normalized=True)
    theta = fringe.theta_grid
    ref = linear_reference(theta, theta[int(np.argmin(f))])
    keep = ref > atol
    ratio = f[keep] / ref[keep]
    dev = ratio - 1.0
    signs = np.sign(dev[np.abs(dev) > atol])
    crossings = int(np.count_nonzero(signs[1:] != signs[:-1]))
    return RatioResult(theta[keep], ratio, crossings)
