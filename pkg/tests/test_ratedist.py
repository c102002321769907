import json
import math

import numpy as np
import pytest
from mpmath import mp, mpf
from mpmath import log as mplog

from equivoq import (
    ArgumentError,
    ConvergenceError,
    DistortionSpec,
    InfeasibleError,
    Pmf,
    blahut_arimoto_point,
    rd_curve,
    rd_function,
    rd_test_channel,
)


def h_mp(p):
    mp.dps = 40
    p = mpf(p)
    if p == 0 or p == 1:
        return mpf(0)
    return -(p * mplog(p, 2) + (1 - p) * mplog(1 - p, 2))


def binary_rd(p, D):
    """h(p) - h(D) for D <= min(p, 1-p), else 0, in high precision."""
    if D >= min(p, 1 - p):
        return 0.0
    return float(h_mp(p) - h_mp(D))


def grid_rd(px, dmat, D, step=1e-3):
    """Brute-force R(D) for 2x2 problems: minimize I(X;Y) over a grid of channels."""
    a = np.arange(0, 1 + step / 2, step)
    q0, q1 = np.meshgrid(a, a, indexing="ij")  # P(y=1|x=0), P(y=1|x=1)
    ch = np.stack([np.stack([1 - q0, q0], -1), np.stack([1 - q1, q1], -1)], axis=-2)
    joint = px[:, None] * ch
    ed = (joint * dmat).sum(axis=(-2, -1))
    py = joint.sum(axis=-2)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(joint > 0, joint * np.log2(joint / (px[:, None] * py[..., None, :])), 0.0)
    mi = terms.sum(axis=(-2, -1))
    return mi[ed <= D + 1e-12].min()


class TestDistortionSpec:
    def test_hamming(self):
        d = DistortionSpec.hamming(3, 0.2)
        np.testing.assert_array_equal(d.matrix, 1 - np.eye(3))
        assert d.limit == 0.2

    @pytest.mark.parametrize("matrix", [[[0, -1], [1, 0]], [[0, np.inf], [1, 0]], [1, 2]])
    def test_rejects_bad_matrix(self, matrix):
        with pytest.raises(ArgumentError):
            DistortionSpec(matrix)

    def test_endpoints(self):
        d = DistortionSpec([[1, 3], [2, 0]])
        src = Pmf([0.25, 0.75])
        assert d.d_min(src) == pytest.approx(0.25)
        assert d.d_max(src) == pytest.approx(min(0.25 + 1.5, 0.75))

    def test_json_round_trip(self):
        d = DistortionSpec([[0, 1.5], [0.25, 0]], 0.3)
        e = DistortionSpec.from_json(json.loads(json.dumps(d.to_json())))
        assert e.matrix.tobytes() == d.matrix.tobytes() and e.limit == d.limit


class TestBlahutArimoto:
    def test_binary_parametric_point(self):
        # for a uniform binary source the optimal channel is a BSC with
        # crossover 2^s / (1 + 2^s)
        s = -3.0
        pt = blahut_arimoto_point(Pmf.uniform(2), DistortionSpec.hamming(2), s)
        D = 2**s / (1 + 2**s)
        assert pt.distortion == pytest.approx(D, abs=1e-9)
        assert pt.rate == pytest.approx(1 - float(h_mp(D)), abs=1e-8)

    def test_zero_slope_is_zero_rate(self):
        pt = blahut_arimoto_point(Pmf([0.2, 0.8]), DistortionSpec.hamming(2), 0.0)
        assert pt.rate == 0.0
        assert pt.distortion == pytest.approx(0.2)

    def test_positive_slope_rejected(self):
        with pytest.raises(ArgumentError):
            blahut_arimoto_point(Pmf.uniform(2), DistortionSpec.hamming(2), 0.5)

    def test_convergence_error_carries_last_iterate(self):
        with pytest.raises(ConvergenceError) as exc:
            blahut_arimoto_point(Pmf([0.3, 0.7]), DistortionSpec.hamming(2), -0.8, tol=1e-15, max_iter=2)
        assert exc.value.last is not None
        assert exc.value.last.slope == -0.8


class TestRdFunction:
    @pytest.mark.parametrize("p", [0.1, 0.3, 0.5])
    @pytest.mark.parametrize("frac", [0.0, 0.25, 0.5, 0.9, 0.999, 1.0])
    def test_binary_hamming(self, p, frac):
        D = frac * p
        got = rd_function(Pmf([1 - p, p]), DistortionSpec.hamming(2, D))
        assert got == pytest.approx(binary_rd(p, D), abs=1e-6)

    def test_known_value(self):
        assert rd_function(Pmf([0.7, 0.3]), DistortionSpec.hamming(2, 0.1)) == pytest.approx(
            0.4122953056414114, abs=1e-7
        )

    def test_ternary_uniform_hamming(self):
        # log2(3) - h(D) - D log2(2) for D <= 2/3
        got = rd_function(Pmf.uniform(3), DistortionSpec.hamming(3, 0.3))
        assert got == pytest.approx(0.4036716014904636, abs=1e-6)

    def test_beyond_dmax_is_zero(self):
        assert rd_function(Pmf([0.8, 0.2]), DistortionSpec.hamming(2, 0.6)) == 0.0

    def test_below_dmin_infeasible(self):
        d = DistortionSpec([[0.1, 1.0], [1.0, 0.2]], 0.05)
        with pytest.raises(InfeasibleError):
            rd_function(Pmf([0.5, 0.5]), d)

    @pytest.mark.parametrize("D", [0.15, 0.3, 0.5])
    def test_asymmetric_matches_grid_oracle(self, D):
        px = np.array([0.3, 0.7])
        dmat = np.array([[0.0, 1.0], [2.0, 0.0]])
        got = rd_function(Pmf(px), DistortionSpec(dmat, D))
        oracle = grid_rd(px, dmat, D)
        assert got <= oracle + 1e-9
        assert got == pytest.approx(oracle, abs=2e-3)

    def test_test_channel_meets_target(self):
        src = Pmf([0.4, 0.6])
        d = DistortionSpec.hamming(2, 0.2)
        ch = rd_test_channel(src, d)
        joint = src.probs[:, None] * ch
        assert d.expected(joint) <= 0.2 + 1e-8
        py = joint.sum(axis=0)
        mi = float(np.sum(joint * np.log2(joint / (src.probs[:, None] * py))))
        assert mi == pytest.approx(binary_rd(0.4, 0.2), abs=1e-6)

    def test_nonincreasing(self):
        src = Pmf([0.2, 0.5, 0.3])
        d = DistortionSpec([[0, 1, 3], [1, 0, 1], [2, 1, 0]])
        vals = [rd_function(src, d, D) for D in np.linspace(0, d.d_max(src), 12)]
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


class TestRdCurve:
    def test_binary_curve(self):
        pts = rd_curve(Pmf.uniform(2), DistortionSpec.hamming(2), 11)
        assert len(pts) == 11
        assert pts[0].distortion == 0.0 and pts[-1].distortion == 0.5
        assert pts[0].slope == -math.inf and pts[-1].slope == 0.0
        for pt in pts:
            assert pt.rate == pytest.approx(binary_rd(0.5, pt.distortion), abs=1e-6)
        slopes = [pt.slope for pt in pts]
        assert all(b >= a for a, b in zip(slopes, slopes[1:]))

    def test_needs_two_points(self):
        with pytest.raises(ArgumentError):
            rd_curve(Pmf.uniform(2), DistortionSpec.hamming(2), 1)
