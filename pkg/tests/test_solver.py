import numpy as np
import pytest

from sgraph.factors import Factor, FactorKind
from sgraph.geometry import PlaneMinimal, Pose3, rot_exp, to_minimal, transform_plane, from_minimal
from sgraph.graph import KeyframePolicy, SGraph
from sgraph.solver import SingularSystem, SolverConfig, layer_costs, optimize, total_cost


def tx(x):
    return Pose3(np.eye(3), np.array([x, 0.0, 0.0]))


def make_chain(n, step=1.0):
    """Noiseless odometry chain along +x."""
    g = SGraph()
    policy = KeyframePolicy(min_translation=0.5, min_rotation=0.5)
    for i in range(n):
        g.maybe_add_keyframe(tx(i * step), policy, timestamp=float(i))
    return g


class TestKeyframePolicy:
    def test_first_call_creates_origin_keyframe(self):
        g = SGraph()
        kf = g.maybe_add_keyframe(tx(5.0), KeyframePolicy(), timestamp=0.0)
        assert kf == 0
        assert g.keyframes[0].pose.almost_equal(Pose3.identity())

    def test_below_threshold_no_keyframe(self):
        g = SGraph()
        g.maybe_add_keyframe(tx(0.0), KeyframePolicy(min_translation=1.0))
        assert g.maybe_add_keyframe(tx(0.1), KeyframePolicy(min_translation=1.0)) is None
        assert len(g.keyframes) == 1

    def test_motion_creates_keyframe_with_odometry_factor(self):
        g = SGraph()
        g.maybe_add_keyframe(tx(0.0), KeyframePolicy(min_translation=1.0))
        kf = g.maybe_add_keyframe(tx(1.5), KeyframePolicy(min_translation=1.0))
        assert kf == 1
        assert len(g.factors) == 1
        meas = g.factors[0].measurement
        assert meas.almost_equal(tx(1.5))


class TestOptimize:
    def test_consistent_chain_zero_cost(self):
        g = make_chain(5)
        report = optimize(g, SolverConfig())
        assert report.initial_cost == pytest.approx(0.0, abs=1e-12)
        assert report.final_cost == pytest.approx(0.0, abs=1e-12)

    def test_perturbed_chain_recovers(self):
        g = make_chain(5)
        truth = {k: g.keyframes[k].pose for k in g.keyframes}
        rng = np.random.default_rng(0)
        for k in list(g.keyframes)[1:]:
            g.keyframes[k].pose = g.keyframes[k].pose.retract(rng.normal(0, 0.3, 6))
        report = optimize(g, SolverConfig())
        assert report.final_cost < 1e-16
        for k, pose in truth.items():
            assert g.keyframes[k].pose.almost_equal(pose, tol=1e-6)

    def test_single_plane_distance_converges(self):
        # one keyframe, one plane factor, plane d off by 1 m: 1-D quadratic
        g = make_chain(1)
        from sgraph.graph import PlaneLandmark
        from sgraph.geometry import PlaneClass

        meas = PlaneMinimal(0.0, 0.0, 3.0)
        g.planes[0] = PlaneLandmark(
            id=0,
            params=PlaneMinimal(0.0, 0.0, 4.0),
            plane_class=PlaneClass.X_VERTICAL,
            extent=np.array([1.0, 1.0]),
            centroid=np.zeros(3),
        )
        info = np.diag([2500.0, 2500.0, 2500.0])
        g.factors.append(
            Factor(FactorKind.POSE_PLANE, (("kf", 0), ("plane", 0)), meas, info)
        )
        report = optimize(g, SolverConfig())
        assert g.planes[0].params.distance == pytest.approx(3.0, abs=1e-8)
        assert report.final_cost < 1e-12

    def test_accepted_steps_never_increase_cost(self):
        g = make_chain(8)
        rng = np.random.default_rng(1)
        for k in list(g.keyframes)[1:]:
            g.keyframes[k].pose = g.keyframes[k].pose.retract(rng.normal(0, 0.2, 6))
        report = optimize(g, SolverConfig())
        assert report.final_cost <= report.initial_cost

    def test_gauge_unique_minimum_from_perturbation(self):
        g = make_chain(6)
        truth = {k: g.keyframes[k].pose for k in g.keyframes}
        rng = np.random.default_rng(2)
        for k in list(g.keyframes)[1:]:
            delta = np.concatenate([rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.2, 0.2, 3)])
            g.keyframes[k].pose = g.keyframes[k].pose.retract(delta)
        optimize(g, SolverConfig())
        for k, pose in truth.items():
            assert g.keyframes[k].pose.almost_equal(pose, tol=1e-6)

    def test_layer_cost_decomposition(self):
        g = make_chain(4)
        rng = np.random.default_rng(3)
        for k in list(g.keyframes)[1:]:
            g.keyframes[k].pose = g.keyframes[k].pose.retract(rng.normal(0, 0.1, 6))
        costs = layer_costs(g)
        assert sum(costs.values()) == pytest.approx(total_cost(g), abs=1e-12)

    def test_singular_system_detected(self):
        # a free-floating plane variable with no factor makes H singular
        g = make_chain(3)
        from sgraph.graph import PlaneLandmark
        from sgraph.geometry import PlaneClass

        g.planes[0] = PlaneLandmark(
            id=0,
            params=PlaneMinimal(0.0, 0.0, 4.0),
            plane_class=PlaneClass.X_VERTICAL,
            extent=np.array([1.0, 1.0]),
            centroid=np.zeros(3),
        )
        with pytest.raises(SingularSystem) as err:
            optimize(g, SolverConfig(check_rank=True))
        assert err.value.nullity == 3
