import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from blurforge.bezier_encode import (
    BezierCurve,
    HeatmapField,
    bezier_point,
    chord_parameters,
    encode_heatmaps,
    fit_cubic_bezier,
    fit_cubic_bezier_batch,
    fit_deviation,
    fit_ok_flags,
    render_heatmap_viz,
    residual_bound,
    splat_accumulate,
)
from blurforge.camera_geom import CameraIntrinsics, roll_delta
from blurforge.errors import DimensionMismatchError, TooFewNodesError
from blurforge.imu_ingest import ExposureWindow, constant_rate_deltas, integrate_window
from blurforge.motion import MotionSpec, SineTerm, sample_gyro
from blurforge.trajectory import trace_point


def brute_force_deviation(curve, nodes, samples=100_000):
    pts = bezier_point(curve, np.linspace(0.0, 1.0, samples))
    return max(np.min(np.hypot(*(pts - n).T)) for n in nodes)


def test_point_curve_for_static_nodes():
    c = fit_cubic_bezier(np.tile([3.0, 4.0], (7, 1)))
    for p in (c.p0, c.p1, c.p2, c.p3):
        assert p == (3.0, 4.0)


def test_collinear_nodes_fit_exactly():
    nodes = np.linspace([10.0, 5.0], [40.0, 20.0], 7)
    c = fit_cubic_bezier(nodes)
    assert fit_deviation(c, nodes).max_deviation <= 1e-9
    d = np.array(c.control) - nodes[0]
    cross = d[:, 0] * 15.0 - d[:, 1] * 30.0
    assert np.max(np.abs(cross)) < 1e-9


def test_quadratic_arc_fits_closely():
    # blur-trajectory scale: 30 px span with a 3 px sag
    q0, q1, q2 = np.array([0.0, 0.0]), np.array([15.0, 6.0]), np.array([30.0, 0.0])
    t = np.linspace(0, 1, 7)[:, None]
    nodes = (1 - t) ** 2 * q0 + 2 * (1 - t) * t * q1 + t ** 2 * q2
    c = fit_cubic_bezier(nodes)
    assert brute_force_deviation(c, nodes) <= 0.05
    assert fit_deviation(c, nodes).max_deviation <= 0.05


def test_two_nodes_give_straight_segment():
    c = fit_cubic_bezier([[0.0, 0.0], [3.0, 6.0]])
    np.testing.assert_allclose(c.p1, (1.0, 2.0), atol=1e-15)
    np.testing.assert_allclose(c.p2, (2.0, 4.0), atol=1e-15)


def test_too_few_nodes():
    with pytest.raises(TooFewNodesError):
        fit_cubic_bezier([[1.0, 1.0]])
    with pytest.raises(TooFewNodesError):
        fit_deviation(BezierCurve((0, 0), (0, 0), (0, 0), (0, 0)), [[0.0, 0.0]])


def test_bezier_point_examples():
    c = BezierCurve((0, 0), (0, 1), (1, 1), (1, 0))
    np.testing.assert_array_equal(bezier_point(c, 0.0), (0, 0))
    np.testing.assert_array_equal(bezier_point(c, 1.0), (1, 0))
    np.testing.assert_allclose(bezier_point(c, 0.5), (0.5, 0.75), atol=1e-15)
    line = BezierCurve((0, 0), (2, 1), (4, 2), (6, 3))
    np.testing.assert_allclose(bezier_point(line, 0.5), (3.0, 1.5), atol=1e-15)
    with pytest.raises(ValueError):
        bezier_point(c, 1.5)


def test_curve_rejects_non_finite():
    with pytest.raises(ValueError):
        BezierCurve((0, 0), (np.inf, 0), (0, 0), (0, 0))


def test_chord_parameters():
    np.testing.assert_allclose(chord_parameters([[0, 0], [1, 0], [3, 0], [4, 0]]), [0, 0.25, 0.75, 1.0])
    np.testing.assert_allclose(chord_parameters([[1, 1]] * 3), [0, 0.5, 1.0])


def test_nodes_on_curve_have_zero_deviation():
    c = BezierCurve((0, 0), (5, 12), (18, -4), (25, 6))
    nodes = bezier_point(c, np.array([0.0, 0.1, 0.3, 0.45, 0.7, 0.9, 1.0]))
    assert fit_deviation(c, nodes).max_deviation <= 1e-6


def s_shaped_nodes():
    k = CameraIntrinsics.centered(600.0, 640, 480)
    spec = MotionSpec((0.2, 0.1, 0.3), (SineTerm((0.9, 1.4, -0.6), 16.0, 0.3),))
    deltas = integrate_window(sample_gyro(spec, 0.0, 0.1, 200.0), ExposureWindow(0.0, 0.03))
    return trace_point((40.0, 30.0), deltas, k).nodes


def test_deviation_matches_dense_scan():
    nodes = s_shaped_nodes()
    c = fit_cubic_bezier(nodes)
    rep = fit_deviation(c, nodes)
    assert rep.max_deviation == pytest.approx(brute_force_deviation(c, nodes), abs=1e-4)
    assert rep.ok == (rep.max_deviation <= 0.5)


def test_residual_bound_is_an_upper_bound():
    rng = np.random.default_rng(2)
    nodes = np.cumsum(rng.normal(size=(200, 7, 2)), axis=1)
    ctrl = fit_cubic_bezier_batch(nodes)
    bound = residual_bound(ctrl, nodes)
    ok, dev = fit_ok_flags(ctrl, nodes, 0.5)
    for i in range(0, 200, 20):
        exact = fit_deviation(BezierCurve.from_array(ctrl[i]), nodes[i]).max_deviation
        assert exact <= bound[i] + 1e-12
        assert ok[i] == (exact <= 0.5)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (7, 2), elements=st.floats(-200, 200)),
       st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_pinning_and_translation_equivariance(nodes, a, b):
    c = fit_cubic_bezier(nodes)
    assert c.p0 == tuple(nodes[0]) and c.p3 == tuple(nodes[-1])
    np.testing.assert_array_equal(bezier_point(c, 0.0), nodes[0])
    np.testing.assert_array_equal(bezier_point(c, 1.0), nodes[-1])
    shifted = fit_cubic_bezier(nodes + (a, b))
    np.testing.assert_allclose(shifted.control, c.control + (a, b), atol=1e-9)


def test_encode_zero_motion():
    v, u = np.mgrid[0:5, 0:6].astype(float)
    base = np.stack([u, v], -1)
    ctrl = np.repeat(base[:, :, None, :], 4, axis=2)
    hc, he = encode_heatmaps(ctrl)
    assert (hc.kind, hc.channels, he.kind, he.channels) == ("control", 4, "endpoint", 2)
    assert not hc.values.any() and not he.values.any()


def test_encode_uniform_shift():
    v, u = np.mgrid[0:5, 0:6].astype(float)
    base = np.stack([u, v], -1)
    ctrl = np.stack([base, base + (10 / 3, 0), base + (20 / 3, 0), base + (10, 0)], axis=2)
    hc, he = encode_heatmaps(ctrl, shape=(5, 6))
    np.testing.assert_allclose(he.values, np.broadcast_to([10.0, 0.0], (5, 6, 2)), atol=1e-12)
    np.testing.assert_allclose(hc.values[..., 2:], np.broadcast_to([20 / 3, 0.0], (5, 6, 2)), atol=1e-12)
    with pytest.raises(DimensionMismatchError):
        encode_heatmaps(ctrl, shape=(6, 5))


def test_roll_endpoint_offsets_grow_linearly_with_radius():
    from blurforge.blur_synth import dense_trajectory_fit

    k = CameraIntrinsics(500.0, 500.0, 100.0, 80.0, 201, 161)
    droll = 0.03
    fit = dense_trajectory_fit(constant_rate_deltas((0.0, 0.0, droll / 0.03), 0.03), k)
    mags = []
    for r in (10, 20, 30, 40, 50):
        p = (100.0 + r, 80.0)
        got = fit.endpoint.values[80, 100 + r]
        assert np.allclose(got, roll_delta(np.array(p), droll, k), atol=1e-9)
        mags.append(np.hypot(*got))
    ratio = np.array(mags) / np.array([10, 20, 30, 40, 50])
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-9)
    assert ratio[0] == pytest.approx(2 * math.sin(droll / 2), rel=1e-12)


def test_heatmap_field_validation_and_normalized_view():
    with pytest.raises(DimensionMismatchError):
        HeatmapField("endpoint", np.zeros((3, 3, 4)))
    with pytest.raises(ValueError):
        HeatmapField("other", np.zeros((3, 3, 2)))
    f = HeatmapField("endpoint", np.array([[[150.0, -50.0]]]), d_max=100.0)
    np.testing.assert_array_equal(f.normalized(), [[[1.0, -0.5]]])


def test_splat_mass_is_unit():
    acc = splat_accumulate([[20.3, 17.8]], (40, 40), sigma=1.5)
    assert acc.sum() == pytest.approx(1.0, abs=1e-3)


def test_viz_zero_field_is_regular_grid():
    f = HeatmapField("endpoint", np.zeros((32, 32, 2)))
    img = render_heatmap_viz(f, 8)
    assert img.max() == 1.0
    peaks = img[::8, ::8]
    np.testing.assert_allclose(peaks[1:-1, 1:-1], peaks[1, 1])
    np.testing.assert_allclose(img[8:17, 8:17], img[16:25, 16:25], atol=1e-15)


def test_viz_single_offset_moves_one_splat():
    vals = np.zeros((32, 32, 2))
    f0 = HeatmapField("endpoint", vals.copy())
    vals[16, 16] = (3.0, 0.0)
    f1 = HeatmapField("endpoint", vals)
    diff = render_heatmap_viz(f1, 16) - render_heatmap_viz(f0, 16)
    gone = splat_accumulate([[16.0, 16.0]], (32, 32))
    came = splat_accumulate([[19.0, 16.0]], (32, 32))
    peak = splat_accumulate(f0.absolute_points(16), (32, 32)).max()
    np.testing.assert_allclose(diff, (came - gone) / peak, atol=1e-12)
    with pytest.raises(ValueError):
        render_heatmap_viz(f0, 0)


def back_and_forth_nodes():
    # a 10 Hz oscillation sampled over 0.3 of a cycle: the path bends hard and slows near a turn
    t = np.linspace(0.0, 0.03, 7)
    u = 300.0 + 25.0 * np.sin(2 * np.pi * 9.5 * t + 0.4)
    v = 200.0 + 2.0 * np.cos(2 * np.pi * 9.5 * t)
    return np.stack([u, v], axis=-1)


def test_refinement_only_touches_poor_chord_fits():
    from blurforge.bezier_encode import fit_cubic_bezier_batch, fit_deviation_batch

    easy = np.stack([np.linspace(0, 12, 7), 0.05 * np.linspace(0, 12, 7) ** 2], axis=-1)
    batch = np.stack([easy, back_and_forth_nodes()])
    plain = fit_cubic_bezier_batch(batch, refine_above=None)
    refined = fit_cubic_bezier_batch(batch)
    np.testing.assert_array_equal(refined[0], plain[0])
    np.testing.assert_array_equal(refined[:, [0, 3]], plain[:, [0, 3]])  # endpoints stay pinned
    dev = fit_deviation_batch(np.stack([plain[1], refined[1]]), batch[[1, 1]])
    assert dev[0] > 0.5 > 0.05 > dev[1]


def test_refinement_never_increases_deviation(rng):
    from blurforge.bezier_encode import fit_cubic_bezier_batch, fit_deviation_batch, refine_fit

    nodes = np.cumsum(rng.normal(size=(200, 7, 2)) * 3.0, axis=1)
    plain = fit_cubic_bezier_batch(nodes, refine_above=None)
    ctrl, dev = refine_fit(plain, nodes)
    before = fit_deviation_batch(plain, nodes)
    assert np.all(dev <= before)
    np.testing.assert_allclose(dev, fit_deviation_batch(ctrl, nodes), atol=1e-12)
    assert np.mean(dev) < 0.9 * np.mean(before)
