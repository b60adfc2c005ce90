import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bloch_threads.chimney import (
    apogee_is_critical,
    chimney_ellipsoid_residual,
    chimney_feedback,
    classify_point,
    ellipsoid_scale,
    refine_apogee,
    theta_circle,
    trace_chimney,
)
from bloch_threads.errors import ApogeeReached
from bloch_threads.system import BlochState, LindbladSystem, figure_system

from conftest import cached_chimney

unit = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1).map(lambda v: np.array(v) / np.linalg.norm(v))


@settings(max_examples=100, deadline=None)
@given(unit, st.floats(0.01, 1.0))
def test_feedback_is_tangent_and_keeps_f_stationary(n_hat, r):
    system = figure_system(1)
    v = system.b + 2 * r * system.A @ n_hat
    m = chimney_feedback(system, r, n_hat)
    assert m @ n_hat == pytest.approx(0, abs=1e-9 * np.linalg.norm(m))
    # no motion along the level curve of f on the sphere
    assert np.cross(n_hat, v) @ m == pytest.approx(0, abs=1e-9 * np.linalg.norm(m) * np.linalg.norm(v))
    # d f / d r along the feedback is zero
    eps = 1e-6
    n_ahead = n_hat + eps * m
    n_ahead /= np.linalg.norm(n_ahead)
    n_back = n_hat - eps * m
    n_back /= np.linalg.norm(n_back)
    df = (system.radial(n_ahead, r + eps) - system.radial(n_back, r - eps)) / (2 * eps)
    assert df == pytest.approx(0, abs=1e-6 * system.scale)


def test_feedback_raises_at_the_apogee():
    system = figure_system(1)
    r = 0.4
    # choose n_hat parallel to v = b + 2 r A n_hat by fixed-point iteration
    n = system.b / np.linalg.norm(system.b)
    for _ in range(200):
        v = system.b + 2 * r * system.A @ n
        n = v / np.linalg.norm(v)
    with pytest.raises(ApogeeReached):
        chimney_feedback(system, r, n)


def test_ellipsoid_residual_signs():
    system = figure_system(1)
    assert chimney_ellipsoid_residual(system, np.zeros(3)) == 0
    b_hat = system.b / np.linalg.norm(system.b)
    assert chimney_ellipsoid_residual(system, 0.05 * b_hat) < 0
    assert chimney_ellipsoid_residual(system, -0.05 * b_hat) > 0
    n = np.array([0.3, -0.2, 0.4])
    r = np.linalg.norm(n)
    assert chimney_ellipsoid_residual(system, n) == pytest.approx(-r * system.radial(n / r, r))


def test_ellipsoid_scale():
    system = figure_system(1)
    a_tilde = system.trace - np.array([100.0, 57.0, 39.0])
    assert ellipsoid_scale(system) == pytest.approx(np.sum(np.array([29, 67, 61]) ** 2 / (4 * a_tilde)))
    damping = LindbladSystem.from_eigen([1, 1, 0], [0, 0, 2])
    assert ellipsoid_scale(damping) > 0


def test_classify_point():
    system = figure_system(1)
    b_hat = system.b / np.linalg.norm(system.b)
    assert classify_point(system, BlochState(0.0)) == "purity_rising"
    assert classify_point(system, BlochState(0.1, b_hat)) == "purity_rising"
    assert classify_point(system, BlochState(0.1, -b_hat)) == "purity_falling"
    _, starts = theta_circle(system, 4)
    assert classify_point(system, BlochState(0.0 + 1e-300, starts[0])) == "on_wall"


def test_theta_circle_is_orthonormal_to_drift():
    system = figure_system(2)
    theta, starts = theta_circle(system, 8)
    np.testing.assert_allclose(starts @ system.b, 0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(starts, axis=1), 1)
    np.testing.assert_allclose(theta, np.arange(8) * np.pi / 4)


def test_fig1_all_generators_reach_the_maximizing_apogee():
    mesh = cached_chimney(1)
    assert len(mesh.generators) == 36
    assert len(mesh.apogees) == 1
    ap = mesh.apogees[0]
    assert ap.generators == list(range(36))
    assert ap.matched_thread.kind == "maximizing"
    # independent oracle: SLSQP maximisation of |n| subject to f = 0
    assert ap.r == pytest.approx(0.701856, abs=2e-6)
    assert ap.match_distance < 1e-2
    assert apogee_is_critical(figure_system(1), ap)


def test_fig1_generators_stay_on_the_wall():
    system = figure_system(1)
    mesh = cached_chimney(1)
    scale = ellipsoid_scale(system)
    for g in mesh.generators:
        assert g.termination == "apogee"
        away = g.r <= 0.95 * g.r[-1]
        assert np.max(np.abs(g.f[away])) <= 1e-5
        assert np.max(g.residual) / scale <= 1e-5
        assert np.max(np.abs(np.linalg.norm(g.n_hat, axis=1) - 1)) < 1e-13


def test_fig4_splits_between_two_apogees():
    mesh = cached_chimney(4)
    assert len(mesh.apogees) == 2
    outer, inner = mesh.apogees
    assert outer.r == pytest.approx(0.748146, abs=2e-6)
    assert inner.r == pytest.approx(0.655507, abs=2e-6)
    assert outer.matched_thread.kind == "maximizing"
    assert inner.matched_thread.kind == "alternate"
    assert sorted([len(outer.generators), len(inner.generators)]) == [17, 19]
    for ap in mesh.apogees:
        assert apogee_is_critical(figure_system(4), ap)


def test_fig2_most_generators_end_on_the_special_line():
    mesh = cached_chimney(2)
    on_line = sum(len(ap.generators) for ap in mesh.apogees if ap.matched_thread.kind == "special-line")
    assert on_line == 34
    for ap in mesh.apogees:
        if ap.matched_thread.kind == "special-line":
            assert ap.r == pytest.approx(0.485913, abs=2e-6)


def test_endpoint_apogee_index():
    mesh = cached_chimney(4)
    idx = mesh.endpoint_apogee()
    for k, ap in enumerate(mesh.apogees):
        for i in ap.generators:
            assert idx[i] == k
    assert None not in idx


def test_refine_apogee_is_a_fixed_point():
    system = figure_system(3)
    ap = cached_chimney(3).apogees[0]
    assert ap.r == pytest.approx(0.400488, abs=2e-6)
    r, n_hat = refine_apogee(system, ap.r + 1e-3, ap.n_hat)
    assert r == pytest.approx(ap.r, abs=1e-10)
    assert system.radial(n_hat, r) == pytest.approx(0, abs=1e-10)


def test_unital_chimney_rejected():
    with pytest.raises(ValueError):
        trace_chimney(LindbladSystem.from_eigen([3, 2, 1], [0, 0, 0]))


def test_small_mesh_with_given_threads():
    system = figure_system(1)
    mesh = trace_chimney(system, theta_count=6, dr=2e-3, threads=[])
    assert len(mesh.generators) == 6
    assert mesh.apogees[0].matched_thread is None
    assert mesh.apogees[0].r == pytest.approx(0.701856, abs=2e-6)
