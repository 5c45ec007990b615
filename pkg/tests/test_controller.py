import numpy as np
import pytest

from prunekit.collision import CollisionWorld
from prunekit.controller import (
    STATUS_COLLISION,
    STATUS_INCOMPLETE,
    STATUS_JOINT_LIMIT,
    STATUS_SUCCESS,
    STATUS_VELOCITY_LIMIT,
    ExecutionOutcome,
    ServoConfig,
    load_execution_log,
    pbs_step,
    pose_error,
    save_execution_log,
    simulate_approach,
)
from prunekit.errors import InputError
from prunekit.kinematics import default_chain, forward_kinematics, jacobian
from prunekit.rotations import Pose, quat_mul, rotvec_to_quat
from prunekit.treemodel import CapsuleSet


class TestPoseError:
    def test_zero_at_goal(self):
        p = Pose(np.array([0.3, -0.1, 1.2]), rotvec_to_quat(np.array([0, 0, 0.4])))
        np.testing.assert_array_equal(pose_error(p, p), np.zeros(6))

    def test_translation_component(self):
        a = Pose(np.zeros(3), np.array([1.0, 0, 0, 0]))
        b = Pose(np.array([0.2, -0.3, 0.5]), np.array([1.0, 0, 0, 0]))
        np.testing.assert_allclose(pose_error(a, b), [0.2, -0.3, 0.5, 0, 0, 0], atol=1e-15)

    def test_rotation_component_is_world_rotvec(self):
        q0 = rotvec_to_quat(np.array([0, 0.3, 0]))
        q1 = quat_mul(rotvec_to_quat(np.array([0, 0, 0.25])), q0)
        err = pose_error(Pose(np.zeros(3), q0), Pose(np.zeros(3), q1))
        np.testing.assert_allclose(err[3:], [0, 0, 0.25], atol=1e-12)


class TestPbsStep:
    def test_integration_identity(self):
        chain = default_chain()
        goal = forward_kinematics(chain, chain.home + 0.2)
        cfg = ServoConfig()
        qdot, q_next = pbs_step(chain, chain.home, goal, cfg)
        np.testing.assert_array_equal(q_next, chain.home + qdot * cfg.dt)

    def test_matches_damped_normal_equations(self):
        chain = default_chain()
        cfg = ServoConfig(k_t=1.7, k_r=0.9, damping=0.05)
        q = chain.home + 0.1
        goal = forward_kinematics(chain, chain.home + 0.3)
        qdot, _ = pbs_step(chain, q, goal, cfg)
        J = jacobian(chain, q)
        e = pose_error(forward_kinematics(chain, q), goal)
        v = np.concatenate([1.7 * e[:3], 0.9 * e[3:]])
        expected = J.T @ np.linalg.solve(J @ J.T + 0.05 ** 2 * np.eye(6), v)
        np.testing.assert_allclose(qdot, expected, atol=1e-12)

    def test_bounded_at_singularity(self):
        """Fully stretched the Jacobian loses rank; the damped update must stay
        finite where the plain pseudo-inverse would blow up."""
        chain = default_chain()
        q_sing = np.zeros(chain.n)
        cur = forward_kinematics(chain, q_sing)
        goal = Pose(cur.t + np.array([0.0, 0.0, 0.5]), cur.o)
        cfg = ServoConfig()
        qdot, _ = pbs_step(chain, q_sing, goal, cfg)
        assert np.all(np.isfinite(qdot))
        e = pose_error(cur, goal)
        v_norm = np.linalg.norm(np.concatenate([cfg.k_t * e[:3], cfg.k_r * e[3:]]))
        assert np.linalg.norm(qdot) <= v_norm / (2 * cfg.damping) + 1e-9

    def test_config_validation(self):
        with pytest.raises(InputError):
            ServoConfig(dt=0.0)
        with pytest.raises(InputError):
            ServoConfig(damping=-1.0)


def plateau_goal(chain):
    """A pose just beyond the arm's reach along the current approach axis."""
    cur = forward_kinematics(chain, chain.home)
    away = cur.t / np.linalg.norm(cur.t)
    return Pose(cur.t + 5.0 * away, cur.o)


class TestSimulateApproach:
    def test_unobstructed_success_and_monotone_error(self):
        chain = default_chain()
        world = CollisionWorld.empty()
        q0 = chain.home
        goal = forward_kinematics(chain, q0 + 0.08)
        out = simulate_approach(world, chain, q0, goal)
        assert out.status == STATUS_SUCCESS and out.success
        assert out.final_error_t <= 1e-3 and out.final_error_r <= 1e-2
        norms = np.linalg.norm(out.log_error, axis=1)
        assert np.all(np.diff(norms) < 0)
        assert out.steps == len(out.log_q) == len(out.log_qdot) == len(out.log_error)
        # replaying the last logged config reproduces the reported error
        end = forward_kinematics(chain, out.log_q[-1])
        err = pose_error(end, goal)
        np.testing.assert_allclose(np.linalg.norm(err[:3]), out.final_error_t, atol=1e-12)

    def test_already_at_goal(self):
        chain = default_chain()
        goal = forward_kinematics(chain, chain.home)
        out = simulate_approach(CollisionWorld.empty(), chain, chain.home, goal)
        assert out.success and out.steps == 0
        assert out.log_q.shape == (0, chain.n)

    def test_joint_limit_fixture(self):
        """Start next to a stop, goal on the far side of it: the servo walks
        the base joint through the stop and must say so."""
        chain = default_chain()
        q0 = chain.home.copy()
        q0[0] = chain.upper[0] - 0.03
        q_goal = q0.copy()
        q_goal[0] = chain.upper[0] + 0.25
        goal = forward_kinematics(chain, q_goal)
        out = simulate_approach(CollisionWorld.empty(), chain, q0, goal)
        assert out.status == STATUS_JOINT_LIMIT
        assert np.any(out.log_q[-1] > chain.upper)

    def test_velocity_limit_fixture(self):
        """A goal metres away makes the first raw command exceed the joint
        speed ratings even though the integrated step would be tame."""
        chain = default_chain()
        cur = forward_kinematics(chain, chain.home)
        goal = Pose(cur.t + np.array([0.0, 0.0, 2.5]), cur.o)
        out = simulate_approach(CollisionWorld.empty(), chain, chain.home, goal)
        assert out.status == STATUS_VELOCITY_LIMIT
        assert out.steps == 1
        assert np.any(np.abs(out.log_qdot[0]) > chain.vel_limits)

    def test_collision_fixture(self):
        """A post planted across the advance corridor stops the servo with a
        collision verdict and names the offending pair."""
        chain = default_chain()
        q0 = chain.home
        cur = forward_kinematics(chain, q0)
        goal_q = q0 + 0.12
        goal = forward_kinematics(chain, goal_q)
        mid = 0.5 * (cur.t + goal.t)
        world = CollisionWorld.from_capsule_set(
            CapsuleSet.from_arrays([mid - [0, 0, 0.4]], [mid + [0, 0, 0.4]], [0.05]))
        out = simulate_approach(world, chain, q0, goal)
        assert out.status == STATUS_COLLISION
        assert out.offending_pair is not None

    def test_incomplete_on_budget_exhaustion(self):
        chain = default_chain()
        goal = forward_kinematics(chain, chain.home + 0.3)
        out = simulate_approach(CollisionWorld.empty(), chain, chain.home, goal,
                                ServoConfig(max_steps=2))
        assert out.status == STATUS_INCOMPLETE
        assert out.steps == 2

    def test_invalid_start_raises(self):
        chain = default_chain()
        goal = forward_kinematics(chain, chain.home)
        with pytest.raises(InputError):
            simulate_approach(CollisionWorld.empty(), chain, chain.upper + 1.0, goal)
        blob = CollisionWorld.from_capsule_set(
            CapsuleSet.from_arrays([[0, 0, -5]], [[0, 0, 5]], [4.0]))
        with pytest.raises(InputError):
            simulate_approach(blob, chain, chain.home, goal)


class TestExecutionLog:
    def test_roundtrip(self, tmp_path):
        chain = default_chain()
        goal = forward_kinematics(chain, chain.home + 0.08)
        out = simulate_approach(CollisionWorld.empty(), chain, chain.home, goal)
        path = tmp_path / "run.json"
        save_execution_log(out, path)
        back = load_execution_log(path)
        assert back.status == out.status
        assert back.steps == out.steps
        np.testing.assert_allclose(back.log_q, out.log_q)
        np.testing.assert_allclose(back.log_qdot, out.log_qdot)
        np.testing.assert_allclose(back.final_error_t, out.final_error_t)
        assert back.offending_pair == out.offending_pair

    def test_foreign_file_rejected(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text('{"format": "nope"}')
        with pytest.raises(InputError):
            load_execution_log(p)
