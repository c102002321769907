"""Rate-distortion function of a discrete memoryless source.

Slopes are in bits per distortion unit and are nonpositive. A slope ``s``
selects the point of the R(D) curve whose supporting line has slope ``s``;
the Blahut-Arimoto iteration for it uses the test-channel update

    q(y|x) proportional to q(y) * 2**(s * d(x, y))

and minimizes the Lagrangian ``I(X;Y) - s * E d(X,Y)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConvergenceError, InfeasibleError
from .prob import Pmf

LN2 = math.log(2.0)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10000
# distortions closer than this to d_min/d_max are treated as the endpoint
ENDPOINT_TOL = 1e-12
# the slope search gives up doubling beyond this many bits per unit of the
# smallest nonzero distortion gap
SLOPE_CAP = 2.0**14


@dataclass(frozen=True, eq=False)
class DistortionSpec:
    """Per-letter distortion matrix ``d[x, y]`` and the admissible average ``limit``."""

    matrix: np.ndarray
    limit: float = 0.0

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.size == 0:
            raise ArgumentError(f"distortion matrix must be 2-D and nonempty, got shape {m.shape}")
        if not np.all(np.isfinite(m)) or m.min() < 0:
            raise ArgumentError("distortion entries must be finite and nonnegative")
        limit = float(self.limit)
        if not math.isfinite(limit) or limit < 0:
            raise ArgumentError(f"distortion limit must be finite and >= 0, got {self.limit!r}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "limit", limit)

    @classmethod
    def hamming(cls, n: int, limit: float = 0.0) -> "DistortionSpec":
        return cls(1.0 - np.eye(n), limit)

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    def with_limit(self, limit: float) -> "DistortionSpec":
        return DistortionSpec(self.matrix, limit)

    def _check_source(self, source: Pmf):
        if source.alphabet_size != self.matrix.shape[0]:
            raise ArgumentError(
                f"source has {source.alphabet_size} symbols, distortion matrix has {self.matrix.shape[0]} rows"
            )

    def d_min(self, source: Pmf) -> float:
        self._check_source(source)
        return float(source.probs @ self.matrix.min(axis=1))

    def d_max(self, source: Pmf) -> float:
        self._check_source(source)
        return float((source.probs @ self.matrix).min())

    def in_range(self, source: Pmf) -> bool:
        return self.d_min(source) - ENDPOINT_TOL <= self.limit <= self.d_max(source) + ENDPOINT_TOL

    def expected(self, joint_xy: np.ndarray) -> float:
        return float(np.sum(np.asarray(joint_xy) * self.matrix))

    def to_json(self) -> dict:
        return {"matrix": self.matrix.tolist(), "limit": self.limit}

    @classmethod
    def from_json(cls, data) -> "DistortionSpec":
        return cls(data["matrix"], data.get("limit", 0.0))


@dataclass(frozen=True)
class RdCurvePoint:
    distortion: float
    rate: float
    slope: float


def _channel_rate(px, channel) -> float:
    qy = px @ channel
    joint = px[:, None] * channel
    mask = joint > 0
    ratio = channel[mask] / np.broadcast_to(qy, channel.shape)[mask]
    return max(float(np.dot(joint[mask], np.log2(ratio))), 0.0)


@dataclass
class _BaState:
    distortion: float
    rate: float
    slope: float
    qy: np.ndarray
    channel: np.ndarray
    iterations: int
    gap: float


def _ba_core(px, weights, dmat, slope, tol, max_iter, qy=None) -> _BaState:
    """Alternating minimization for a fixed nonnegative weight matrix.

    ``weights[x, y]`` is 2**(slope * d(x, y)) up to a per-row factor (or a 0/1
    support mask in the d_min limit). Stops once the gap between Blahut's upper
    and lower bounds on the Lagrangian drops below ``tol``.
    """
    ny = weights.shape[1]
    qy = np.full(ny, 1.0 / ny) if qy is None else qy.copy()
    gap = math.inf
    for it in range(1, max_iter + 1):
        denom = weights @ qy
        c = (px / denom) @ weights
        on = qy > 0
        with np.errstate(divide="ignore"):
            log_c = np.log2(c)
        gap = float(np.max(log_c) - np.dot(qy[on] * c[on], log_c[on]))
        qy = qy * c
        qy /= qy.sum()
        if gap < tol:
            break
    channel = weights * qy[None, :]
    channel /= channel.sum(axis=1, keepdims=True)
    dist = float(np.sum(px[:, None] * channel * dmat))
    state = _BaState(dist, _channel_rate(px, channel), slope, qy, channel, it, gap)
    if gap >= tol:
        raise ConvergenceError(
            f"Blahut-Arimoto did not converge at slope {slope} within {max_iter} iterations "
            f"(bound gap {gap:.3g})",
            last=state,
        )
    return state


def _ba_iterate(px, dmat, slope, tol, max_iter, qy=None) -> _BaState:
    shifted = dmat - dmat.min(axis=1, keepdims=True)
    return _ba_core(px, np.exp(slope * LN2 * shifted), dmat, slope, tol, max_iter, qy)


def _zero_rate_state(px, dmat) -> _BaState:
    col = int(np.argmin(px @ dmat))
    channel = np.zeros_like(dmat)
    channel[:, col] = 1.0
    return _BaState(float(px @ dmat[:, col]), 0.0, 0.0, channel[0].copy(), channel, 0, 0.0)


def _min_distortion_state(px, dmat, tol, max_iter) -> _BaState:
    """Least-rate test channel among those achieving d_min.

    This is the slope -> -inf limit: the channel may only use, for each x,
    reconstructions attaining min_y d(x, y).
    """
    allowed = (dmat <= dmat.min(axis=1, keepdims=True) + ENDPOINT_TOL).astype(float)
    return _ba_core(px, allowed, dmat, -math.inf, tol, max_iter)


def blahut_arimoto_point(
    source: Pmf,
    d: DistortionSpec,
    slope: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> RdCurvePoint:
    """Point of the R(D) curve whose supporting line has the given slope.

    Raises ConvergenceError (carrying the last iterate as an RdCurvePoint) when
    the duality gap is still above ``tol`` after ``max_iter`` steps.
    """
    if slope > 0:
        raise ArgumentError(f"slope must be <= 0, got {slope}")
    if tol <= 0:
        raise ArgumentError("tol must be positive")
    d._check_source(source)
    px, dmat = source.probs, d.matrix
    if slope == 0:
        st = _zero_rate_state(px, dmat)
    else:
        try:
            st = _ba_iterate(px, dmat, slope, tol, max_iter)
        except ConvergenceError as exc:
            last = exc.last
            raise ConvergenceError(
                str(exc), last=RdCurvePoint(last.distortion, last.rate, slope)
            ) from None
    return RdCurvePoint(st.distortion, st.rate, slope)


class _RdSolver:
    """Slope search over one (source, distortion) pair, warm-starting each run."""

    def __init__(self, source: Pmf, d: DistortionSpec, ba_tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
        d._check_source(source)
        self.px = source.probs
        self.dmat = d.matrix
        self.ba_tol = ba_tol
        self.max_iter = max_iter
        self.d_min = d.d_min(source)
        self.d_max = d.d_max(source)
        gaps = np.diff(np.unique(self.dmat))
        self.slope_cap = SLOPE_CAP / (gaps.min() if gaps.size else 1.0)
        self._lo_state = None
        self._warm = None

    def low_end(self) -> _BaState:
        if self._lo_state is None:
            self._lo_state = _min_distortion_state(self.px, self.dmat, self.ba_tol, self.max_iter)
        return self._lo_state

    def high_end(self) -> _BaState:
        return _zero_rate_state(self.px, self.dmat)

    def at_slope(self, slope) -> _BaState:
        try:
            st = _ba_iterate(self.px, self.dmat, slope, self.ba_tol, self.max_iter, self._warm)
        except ConvergenceError as exc:
            # Sublinear convergence next to a kink of the curve. The last
            # iterate is still an achievable (D, R) pair, within ``gap`` of
            # the supporting line.
            st = exc.last
        # a warm start must keep full support or zeroed symbols never recover
        self._warm = np.maximum(st.qy, 1e-6)
        return st

    def bracket(self, target, tol):
        """Two states whose distortions straddle ``target`` within ``tol``.

        Doubles the slope magnitude until the distortion drops below target,
        then refines the slope bracket by Illinois false position, which falls
        back to bisection whenever the interpolated slope leaves the bracket.
        """
        hi = self.high_end()
        s = -1.0 / max(self.d_max - self.d_min, ENDPOINT_TOL)
        while True:
            lo = self.at_slope(s)
            if lo.distortion <= target:
                break
            hi = lo
            s *= 2.0
            if -s > self.slope_cap:
                return self.low_end(), hi
        f_lo, f_hi = lo.distortion - target, hi.distortion - target
        kept = 0
        while hi.distortion - lo.distortion > tol:
            if hi.slope - lo.slope <= 1e-14 * max(1.0, -lo.slope):
                break
            s = lo.slope - f_lo * (hi.slope - lo.slope) / (f_hi - f_lo)
            if not lo.slope < s < hi.slope:
                s = 0.5 * (lo.slope + hi.slope)
            mid = self.at_slope(s)
            f_mid = mid.distortion - target
            if f_mid <= 0:
                lo, f_lo = mid, f_mid
                kept = kept + 1 if kept > 0 else 1
                if kept >= 2:
                    f_hi *= 0.5
            else:
                hi, f_hi = mid, f_mid
                kept = kept - 1 if kept < 0 else -1
                if kept <= -2:
                    f_lo *= 0.5
        return lo, hi

    def rate_at(self, target, tol) -> tuple:
        """Return (R(target), supporting slope estimate, test channel)."""
        if target >= self.d_max - ENDPOINT_TOL:
            st = self.high_end()
            return 0.0, 0.0, st.channel
        if target <= self.d_min + ENDPOINT_TOL:
            st = self.low_end()
            return st.rate, -math.inf, st.channel
        lo, hi = self.bracket(target, tol)
        slope = hi.slope if math.isinf(lo.slope) else 0.5 * (lo.slope + hi.slope)
        span = hi.distortion - lo.distortion
        if span <= 0:
            return lo.rate, slope, lo.channel
        theta = (target - lo.distortion) / span
        rate = (1 - theta) * lo.rate + theta * hi.rate
        channel = (1 - theta) * lo.channel + theta * hi.channel
        return max(rate, 0.0), slope, channel


def _check_target(solver: _RdSolver, D: float):
    if D < 0 or not math.isfinite(D):
        raise ArgumentError(f"distortion must be finite and >= 0, got {D!r}")
    if D < solver.d_min - ENDPOINT_TOL:
        raise InfeasibleError(
            f"distortion {D} is below the minimum achievable average distortion {solver.d_min}"
        )


def rd_function(source: Pmf, d: DistortionSpec, D: float | None = None, tol: float = 1e-8) -> float:
    """R(D) in bits per source symbol.

    ``D`` defaults to ``d.limit``. Narrows a slope bracket until the two
    bracketing curve points are within ``tol`` in distortion, then
    interpolates linearly between them.
    """
    D = d.limit if D is None else float(D)
    solver = _RdSolver(source, d)
    _check_target(solver, D)
    return solver.rate_at(D, tol)[0]


def rd_test_channel(source: Pmf, d: DistortionSpec, D: float | None = None, tol: float = 1e-8):
    """A test channel q(y|x) with E d <= D (up to ``tol``) and rate close to R(D)."""
    D = d.limit if D is None else float(D)
    solver = _RdSolver(source, d)
    _check_target(solver, D)
    if solver.d_min + ENDPOINT_TOL < D < solver.d_max - ENDPOINT_TOL:
        lo, _ = solver.bracket(D, tol)
        return lo.channel
    return solver.rate_at(D, tol)[2]


def rd_curve(source: Pmf, d: DistortionSpec, n_points: int, tol: float = 1e-8) -> list:
    """Points of R(D) at ``n_points`` evenly spaced distortions in [d_min, d_max].

    Endpoint slopes are reported as -inf (d_min) and 0 (d_max).
    """
    if n_points < 2:
        raise ArgumentError("n_points must be >= 2")
    solver = _RdSolver(source, d)
    if solver.d_max - solver.d_min <= ENDPOINT_TOL:
        raise ArgumentError("degenerate distortion range: d_min == d_max")
    points = []
    for D in np.linspace(solver.d_min, solver.d_max, n_points):
        rate, slope, _ = solver.rate_at(float(D), tol)
        points.append(RdCurvePoint(float(D), rate, slope))
    return points
