import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aicon.estimation import (
    EstimationError,
    GaussianEstimate,
    MeasurementModel,
    bearing,
    bearing_jacobian,
    bearing_model,
    ekf_predict,
    ekf_update,
    information_gain_gradient,
    predicted_information_gain,
)
from aicon.gradcheck import numeric_jacobian, relative_error
from aicon.graph import ComponentSpec, QuantityNode, register_graph


def textbook_update(x, P, H, R, z):
    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    return x + K @ (z - H @ x), (np.eye(len(x)) - K @ H) @ P


def linear(H, R):
    H = np.atleast_2d(H)
    return MeasurementModel(lambda x: H @ x, lambda x: H, np.atleast_2d(R))


def random_psd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + 0.1 * np.eye(n)


def look_at(cam_t, target):
    """Rotation whose +z axis points from cam_t toward target."""
    z = np.asarray(target, float) - cam_t
    z /= np.linalg.norm(z)
    x = np.cross([0.0, 0.0, 1.0], z)
    if np.linalg.norm(x) < 1e-9:
        x = np.array([1.0, 0.0, 0.0])
    x /= np.linalg.norm(x)
    return np.column_stack([x, np.cross(z, x), z])


# --- predict -------------------------------------------------------------------


def test_predict_identity():
    est = GaussianEstimate([1.0, 2.0], np.diag([0.3, 0.2]))
    out = ekf_predict(est, None, np.eye(2), np.zeros((2, 2)))
    assert np.array_equal(out.mean, est.mean) and np.array_equal(out.covariance, est.covariance)
    out = ekf_predict(est, None, np.eye(2), 0.01 * np.eye(2))
    assert np.trace(out.covariance) == pytest.approx(np.trace(est.covariance) + 0.02)


def test_predict_constant_velocity():
    dt = 0.1
    F = np.array([[1.0, dt], [0.0, 1.0]])
    est = GaussianEstimate([0.0, 1.0], np.array([[1.0, 0.0], [0.0, 2.0]]))
    out = ekf_predict(est, None, F, np.zeros((2, 2)))
    # hand computation: [[1 + dt^2*2, 2dt], [2dt, 2]]
    assert out.mean == pytest.approx([0.1, 1.0])
    assert out.covariance == pytest.approx(np.array([[1.02, 0.2], [0.2, 2.0]]))


def test_predict_dimension_mismatch():
    est = GaussianEstimate([0.0, 0.0], np.eye(2))
    with pytest.raises(EstimationError, match="dimension"):
        ekf_predict(est, None, np.eye(3), np.eye(3))


# --- update --------------------------------------------------------------------


def test_update_matches_textbook():
    rng = np.random.default_rng(0)
    for _ in range(20):
        P = random_psd(rng, 3)
        H = rng.normal(size=(2, 3))
        R = random_psd(rng, 2)
        x = rng.normal(size=3)
        z = rng.normal(size=2)
        res = ekf_update(GaussianEstimate(x, P), linear(H, R), z)
        mx, mP = textbook_update(x, P, H, R, z)
        assert res.estimate.mean == pytest.approx(mx, abs=1e-10)
        assert res.estimate.covariance == pytest.approx(mP, abs=1e-10)
        assert res.innovation == pytest.approx(z - H @ x)
        assert np.trace(res.estimate.covariance) < np.trace(P)


def test_uninformative_measurement():
    est = GaussianEstimate([1.0, -1.0], np.eye(2))
    res = ekf_update(est, linear(np.eye(2), 1e12 * np.eye(2)), [1.0, -1.0])
    assert np.abs(res.estimate.mean - est.mean).max() < 1e-9


def test_perfect_measurement():
    est = GaussianEstimate([1.0, -1.0], np.eye(2))
    res = ekf_update(est, linear(np.eye(2), 1e-12 * np.eye(2)), [0.3, 0.4])
    assert res.estimate.mean == pytest.approx([0.3, 0.4], abs=1e-6)


def test_singular_innovation_skipped():
    est = GaussianEstimate([0.0, 0.0], np.zeros((2, 2)))
    res = ekf_update(est, linear(np.eye(2), np.zeros((2, 2))), [1.0, 1.0])
    assert res.skipped and np.array_equal(res.estimate.mean, [0.0, 0.0])


def test_block_equals_sequential():
    rng = np.random.default_rng(1)
    P = random_psd(rng, 4)
    x = rng.normal(size=4)
    H1, H2 = rng.normal(size=(2, 4)), rng.normal(size=(1, 4))
    R1, R2 = random_psd(rng, 2), np.array([[0.3]])
    z1, z2 = rng.normal(size=2), rng.normal(size=1)
    seq = ekf_update(ekf_update(GaussianEstimate(x, P), linear(H1, R1), z1).estimate, linear(H2, R2), z2).estimate
    Rb = np.block([[R1, np.zeros((2, 1))], [np.zeros((1, 2)), R2]])
    blk = ekf_update(GaussianEstimate(x, P), linear(np.vstack([H1, H2]), Rb), np.concatenate([z1, z2])).estimate
    assert blk.mean == pytest.approx(seq.mean, abs=1e-8)
    assert blk.covariance == pytest.approx(seq.covariance, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-6, 1e3))
def test_joseph_stays_psd(seed, noise):
    rng = np.random.default_rng(seed)
    P = random_psd(rng, 3) * rng.uniform(1e-6, 1e3)
    res = ekf_update(GaussianEstimate(rng.normal(size=3), P), linear(rng.normal(size=(2, 3)), noise * np.eye(2)),
                     rng.normal(size=2))
    if not res.skipped:
        assert np.linalg.eigvalsh(res.estimate.covariance).min() > -1e-10 * max(1.0, np.trace(P))
        res.estimate.cholesky()


def test_component_prediction_never_shrinks_covariance():
    Q = 0.01 * np.eye(2)

    def update(prev, contribs, cov):
        return prev, cov + Q

    def jac(prev, contribs, cov):
        return np.eye(2), []

    g = register_graph([QuantityNode("x", [0.0, 0.0], covariance=np.eye(2))], [], [ComponentSpec("x", [], update, jac)])
    before = np.trace(g.covariances["x"])
    g.tick({})
    assert np.trace(g.covariances["x"]) >= before


# --- bearing camera and information gain ---------------------------------------


def test_bearing_jacobian():
    rng = np.random.default_rng(2)
    for _ in range(50):
        t = rng.normal(size=3)
        R = look_at(t, t + rng.normal(size=3) + [0, 0, 3])
        p = t + R @ np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(0.5, 2.0)])
        num = numeric_jacobian(lambda q: bearing(q, R, t), p)
        assert relative_error(bearing_jacobian(p, R, t), num) < 1e-5


def test_two_viewpoints_beat_one():
    point = np.array([0.0, 0.0, 1.0])
    est = GaussianEstimate(point, 0.01 * np.eye(3))
    cams = [np.zeros(3), np.array([0.3, 0.0, 0.0])]
    models = [bearing_model(look_at(c, point), c, 0.01) for c in cams]
    same = est
    for _ in range(2):
        same = ekf_update(same, models[0], models[0].h(point)).estimate
    two = est
    for m in models:
        two = ekf_update(two, m, m.h(point)).estimate
    assert np.trace(two.covariance) < np.trace(same.covariance)


def model_for(point, sigma):
    def build(pose):
        t = np.asarray(pose[:3])
        return bearing_model(look_at(t, point), t, sigma)

    return build


def test_information_gain_properties():
    point = np.array([0.0, 0.0, 1.0])
    est = GaussianEstimate(point, 0.01 * np.eye(3))
    assert predicted_information_gain(est, model_for(point, 1e6), np.zeros(6)) == pytest.approx(0.0, abs=1e-12)
    zero = GaussianEstimate(point, np.zeros((3, 3)))
    assert predicted_information_gain(zero, model_for(point, 0.01), np.zeros(6)) == 0.0


def test_perpendicular_viewpoint_gains_more():
    point = np.array([0.0, 0.0, 1.0])
    # uncertainty elongated along the current line of sight (z)
    P = np.diag([1e-4, 1e-4, 1e-2])
    est = GaussianEstimate(point, P)
    along = predicted_information_gain(est, model_for(point, 0.01), np.zeros(6))
    perp = predicted_information_gain(est, model_for(point, 0.01), np.array([-1.0, 0.0, 1.0, 0, 0, 0]))
    assert perp > along


def test_information_gain_gradient_points_sideways():
    point = np.array([0.0, 0.0, 1.0])
    est = GaussianEstimate(point, np.diag([1e-4, 1e-4, 1e-2]))
    grad = information_gain_gradient(est, model_for(point, 0.01), np.array([0.05, 0.0, 0.0, 0, 0, 0]))
    assert grad[0] > 0  # moving further sideways sees the depth axis better
    assert np.all(np.isfinite(grad))
