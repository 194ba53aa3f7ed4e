import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autoft.core import (
    Observation,
    TaskSpec,
    Trajectory,
    Transition,
    compute_mc_returns,
    validate_task_pairing,
    validate_trajectory,
)


def make_trajectory(rewards, task_id=0, terminal_end=True):
    """Chain a synthetic trajectory with the given reward sequence."""
    transitions = []
    n = len(rewards)
    obs_seq = [
        Observation(image=None, proprio=np.array([float(i), 0.0], dtype=np.float32))
        for i in range(n + 1)
    ]
    for i, r in enumerate(rewards):
        last = i == n - 1
        transitions.append(
            Transition(
                obs=obs_seq[i],
                action=np.zeros(3, dtype=np.float32),
                next_obs=obs_seq[i + 1],
                reward=float(r),
                terminal=last and terminal_end,
                timeout=last and not terminal_end,
                task_id=task_id,
                mc_return=None,
            )
        )
    return Trajectory(transitions=tuple(transitions), task_id=task_id, success=terminal_end)


def mc_returns_bruteforce(rewards, gamma):
    """O(T^2) double-loop oracle for discounted returns."""
    out = []
    for t in range(len(rewards)):
        total = 0.0
        for k, r in enumerate(rewards[t:]):
            total += (gamma**k) * r
        out.append(total)
    return out


class TestComputeMcReturns:
    def test_undiscounted_sum(self):
        traj = compute_mc_returns(make_trajectory([0, 0, 1]), gamma=1.0)
        assert traj.mc_returns.tolist() == [1.0, 1.0, 1.0]

    def test_geometric_discounting(self):
        traj = compute_mc_returns(make_trajectory([0, 0, 1]), gamma=0.99)
        assert np.allclose(traj.mc_returns, [0.9801, 0.99, 1.0])

    def test_timeout_all_zero(self):
        traj = compute_mc_returns(make_trajectory([0, 0, 0], terminal_end=False), gamma=0.9)
        assert traj.mc_returns.tolist() == [0.0, 0.0, 0.0]

    def test_matches_bruteforce_oracle_len12(self):
        # gamma=0.5 keeps every intermediate exactly representable, so the
        # two summation orders must agree bit-for-bit; 0.95 is checked to
        # within accumulated rounding in the property test below
        rng = np.random.default_rng(0)
        for _ in range(50):
            rewards = rng.integers(0, 2, size=12).astype(float).tolist()
            traj = compute_mc_returns(make_trajectory(rewards, terminal_end=False), gamma=0.5)
            assert traj.mc_returns.tolist() == mc_returns_bruteforce(rewards, 0.5)
            traj95 = compute_mc_returns(make_trajectory(rewards, terminal_end=False), gamma=0.95)
            assert traj95.mc_returns.tolist() == pytest.approx(
                mc_returns_bruteforce(rewards, 0.95), abs=1e-12
            )

    @given(
        rewards=st.lists(st.sampled_from([0.0, 1.0]), min_size=1, max_size=50),
        gamma=st.sampled_from([0.5, 0.9, 0.95, 0.99, 1.0]),
    )
    @settings(max_examples=200, deadline=None)
    def test_matches_bruteforce_oracle_property(self, rewards, gamma):
        traj = compute_mc_returns(make_trajectory(rewards, terminal_end=False), gamma=gamma)
        oracle = mc_returns_bruteforce(rewards, gamma)
        assert np.allclose(traj.mc_returns, oracle, rtol=0, atol=1e-12)

    def test_returns_monotone_for_terminal_only_reward(self):
        # with a single terminal reward and gamma < 1, returns shrink as the
        # success recedes into the future
        traj = compute_mc_returns(make_trajectory([0] * 9 + [1]), gamma=0.9)
        returns = traj.mc_returns
        assert np.all(np.diff(returns) >= 0)
        assert returns[-1] == 1.0

    def test_rejects_empty_trajectory(self):
        empty = Trajectory(transitions=(), task_id=0, success=False)
        with pytest.raises(ValueError):
            compute_mc_returns(empty, gamma=0.99)

    def test_rejects_bad_gamma(self):
        with pytest.raises(ValueError):
            compute_mc_returns(make_trajectory([1]), gamma=0.0)

    def test_nonnegative_for_sparse_rewards(self):
        traj = compute_mc_returns(make_trajectory([0, 1, 0, 1], terminal_end=False), 0.9)
        assert np.all(traj.mc_returns >= 0)


class TestTypes:
    def test_observation_rejects_out_of_range_image(self):
        with pytest.raises(ValueError):
            Observation(image=np.full((4, 4, 3), 1.5, dtype=np.float32), proprio=np.zeros(3))

    def test_observation_rejects_nonfinite_proprio(self):
        with pytest.raises(ValueError):
            Observation(image=None, proprio=np.array([np.nan, 0.0]))

    def test_transition_rejects_terminal_and_timeout(self):
        obs = Observation(image=None, proprio=np.zeros(2, dtype=np.float32))
        with pytest.raises(ValueError):
            Transition(
                obs=obs, action=np.zeros(3), next_obs=obs, reward=1.0,
                terminal=True, timeout=True, task_id=0,
            )

    def test_trajectory_chain_validation(self):
        traj = make_trajectory([0, 0, 1])
        validate_trajectory(traj)
        broken = Trajectory(
            transitions=(traj.transitions[0], traj.transitions[2]),
            task_id=0,
            success=True,
        )
        with pytest.raises(ValueError, match="chain"):
            validate_trajectory(broken)

    def test_task_pairing_symmetry(self):
        t0 = TaskSpec(task_id=0, name="a", instruction="a", paired_task_id=1, is_forward=True)
        t1 = TaskSpec(task_id=1, name="b", instruction="b", paired_task_id=0, is_forward=False)
        validate_task_pairing([t0, t1])
        bad = TaskSpec(task_id=1, name="b", instruction="b", paired_task_id=1, is_forward=False)
        with pytest.raises(ValueError):
            validate_task_pairing([t0, bad])

    def test_task_requires_instruction(self):
        with pytest.raises(ValueError):
            TaskSpec(task_id=0, name="x", instruction="", paired_task_id=1, is_forward=True)
