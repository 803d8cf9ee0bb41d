import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import kernel_for
from pome.envs import (
    ActionError,
    ChainMDP,
    DetGrid,
    NoisyCorridor,
    VecEnv,
    WorkerError,
    make_env,
    make_vec_env,
    vec_step,
    worker_seed,
)
from pome.errors import ContractError


def onehot(i, n):
    v = np.zeros(n)
    v[i] = 1.0
    return v


# reset ------------------------------------------------------------------------
@pytest.mark.parametrize("seed", [0, 1, 123])
def test_reset_start_states(seed):
    assert np.array_equal(ChainMDP().reset(seed), onehot(0, 20))
    assert np.array_equal(DetGrid().reset(seed), onehot(0, 25))
    corridor = NoisyCorridor()
    assert np.array_equal(corridor.reset(seed), onehot(corridor.cell(2, 0), 45))


def test_reset_zeroes_counters():
    env = DetGrid()
    env.reset(0)
    for _ in range(5):
        env.step(0)
    env.reset(0)
    assert env.steps == 0 and env.episode_return == 0.0


# chain --------------------------------------------------------------------------
def test_chain_right_moves_and_pays_at_end():
    env = ChainMDP()
    env.reset(0)
    for cell in range(1, 19):
        res = env.step(ChainMDP.RIGHT)
        assert res.reward == 0.0 and not res.done
        assert res.observation.argmax() == cell
    res = env.step(ChainMDP.RIGHT)
    assert res.done and res.reward == 1.0 and res.episode_return == 1.0
    assert res.observation.argmax() == 19


def test_chain_left_trap():
    env = ChainMDP()
    env.reset(0)
    res = env.step(ChainMDP.LEFT)
    assert res.done and res.reward == pytest.approx(0.001) and not res.truncated


def test_chain_left_moves_back():
    env = ChainMDP()
    env.reset(0)
    env.step(ChainMDP.RIGHT)
    res = env.step(ChainMDP.LEFT)
    assert res.observation.argmax() == 0 and res.reward == 0.0 and not res.done


def test_chain_sparse_flag():
    env = ChainMDP(sparse=True)
    env.reset(0)
    assert env.step(ChainMDP.LEFT).reward == 0.0


# grids ---------------------------------------------------------------------------
def test_detgrid_costs_and_goal():
    env = DetGrid()
    env.reset(0)
    total = 0.0
    for action in [1, 1, 1, 1, 2, 2, 2]:
        res = env.step(action)
        assert res.reward == pytest.approx(-0.01) and not res.done
        total += res.reward
    res = env.step(2)
    assert res.done and res.observation.argmax() == 24
    assert res.episode_return == pytest.approx(total + res.reward)
    assert res.reward + 0.01 == pytest.approx(1.0)


def test_detgrid_walls_keep_position():
    env = DetGrid()
    env.reset(0)
    assert env.step(0).observation.argmax() == 0
    assert env.step(3).observation.argmax() == 0


def test_episode_cap_truncates():
    env = DetGrid(max_steps=100)
    env.reset(0)
    for t in range(100):
        res = env.step(0)
    assert res.done and res.truncated
    assert res.episode_return == pytest.approx(-1.0)


def test_step_after_done_is_contract_error():
    env = ChainMDP()
    env.reset(0)
    env.step(ChainMDP.LEFT)
    with pytest.raises(ContractError):
        env.step(ChainMDP.RIGHT)


@pytest.mark.parametrize("action", [-1, 2, 1.5, True])
def test_invalid_action(action):
    env = ChainMDP()
    env.reset(0)
    with pytest.raises(ActionError):
        env.step(action)


def test_dynamics_match_independent_kernel():
    """Every deterministic (state, action) pair agrees with the oracle's transition table."""
    for env_id in ("chain20", "detgrid5", "noisycorridor"):
        env = make_env(env_id)
        kern = kernel_for(env_id)
        terminal = env.n_states - 1 if env_id == "chain20" else env.goal_state
        for s in range(env.n_states):
            if s == terminal:
                continue
            for a in range(env.n_actions):
                outcomes = kern.outcomes[s][a]
                if len(outcomes) != 1:
                    continue
                _, nxt, rew, term = outcomes[0]
                env.reset(0)
                env.set_state(s)
                res = env.step(a)
                assert res.observation.argmax() == nxt
                assert res.reward == pytest.approx(rew, abs=1e-15)
                assert res.done == term or (res.truncated and not term)


def test_noisy_zone_moves_to_uniform_neighbour():
    env = NoisyCorridor()
    state = env.cell(0, 4)  # top edge, three in-grid neighbours
    assert env.in_zone(state)
    env.reset(3)
    counts = {}
    for _ in range(3000):
        env.set_state(state)
        nxt = int(env.step(0).observation.argmax())
        counts[nxt] = counts.get(nxt, 0) + 1
    assert set(counts) == set(env.neighbors(state))
    for c in counts.values():
        assert abs(c / 3000 - 1 / 3) < 0.04


def test_noise_confined_to_zone():
    env = NoisyCorridor()
    for s in range(env.n_states):
        if env.in_zone(s) or s == env.goal_state:
            continue
        for a in range(4):
            seen = set()
            for seed in range(5):
                env.reset(seed)
                env.set_state(s)
                seen.add(int(env.step(a).observation.argmax()))
            assert len(seen) == 1


def test_zone_must_sit_between_start_and_goal():
    with pytest.raises(ValueError):
        NoisyCorridor(zone=(0, 3))


# encoding --------------------------------------------------------------------------
def test_encodings():
    assert np.array_equal(DetGrid().encode_observation(0), onehot(0, 25))
    assert np.array_equal(ChainMDP().encode_observation(19), onehot(19, 20))
    with pytest.raises(ContractError):
        ChainMDP().encode_observation(20)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["chain20", "detgrid5", "noisycorridor"]), st.integers(0, 2**31), st.lists(st.integers(0, 3), min_size=1, max_size=300))
def test_random_streams_stay_in_bounds_and_terminate(env_id, seed, actions):
    env = make_env(env_id)
    obs = env.reset(seed)
    lows, highs = np.array(env.spec.observation_bounds).T
    steps = 0
    for a in actions:
        res = env.step(a % env.n_actions)
        steps += 1
        obs = res.observation
        assert np.all(obs >= lows) and np.all(obs <= highs)
        assert obs.sum() == 1.0 and np.count_nonzero(obs) == 1
        assert np.isfinite(res.reward)
        if res.done:
            assert steps <= env.max_steps
            obs = env.reset()
            steps = 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.lists(st.integers(0, 3), min_size=1, max_size=150))
def test_same_seed_same_stream(seed, actions):
    def run():
        env = NoisyCorridor()
        env.reset(seed)
        out = []
        for a in actions:
            res = env.step(a)
            out.append((res.observation.argmax(), res.reward, res.done))
            if res.done:
                env.reset()
        return out

    assert run() == run()


# vectorised ------------------------------------------------------------------------
def test_single_worker_equals_step_plus_reset():
    venv = make_vec_env("chain20", 1, seed=4)
    env = ChainMDP()
    venv.reset()
    env.reset(worker_seed(4, 0))
    for a in [1, 0, 0, 1, 1]:
        (vres,) = vec_step(venv, [a])
        res = env.step(a)
        obs = env.reset() if res.done else res.observation
        assert np.array_equal(vres.observation, obs)
        assert vres.reward == res.reward and vres.done == res.done
        if res.done:
            assert np.array_equal(vres.final_observation, res.observation)
            assert vres.episode_return == res.episode_return


def test_identical_seeds_identical_streams():
    venv = VecEnv([DetGrid() for _ in range(8)], worker_seeds=[7] * 8)
    venv.reset()
    rng = np.random.default_rng(0)
    for _ in range(150):
        results = venv.step([int(rng.integers(4))] * 8)
        first = results[0]
        for res in results[1:]:
            assert np.array_equal(res.observation, first.observation)
            assert res.reward == first.reward and res.done == first.done


def test_distinct_seeds_diverge_only_in_zone():
    venv = make_vec_env("noisycorridor", 8, seed=0)
    envs = venv.envs
    for env in envs:
        env.reset()
    zone_state = envs[0].cell(2, 4)
    outside = envs[0].cell(2, 1)
    zone_next, outside_next = set(), set()
    for _ in range(10):
        venv.reset()
        for env in envs:
            env.set_state(zone_state)
        zone_next |= {int(r.observation.argmax()) for r in venv.step([1] * 8)}
        for env in envs:
            env.set_state(outside)
        outside_next |= {int(r.observation.argmax()) for r in venv.step([1] * 8)}
    assert len(zone_next) > 1
    assert outside_next == {envs[0].cell(2, 2)}


def test_worker_stream_independent_of_worker_count():
    small = make_vec_env("noisycorridor", 2, seed=9)
    large = make_vec_env("noisycorridor", 6, seed=9)
    small.reset(), large.reset()
    for _ in range(60):
        a = small.step([1, 1])
        b = large.step([1] * 6)
        assert np.array_equal(a[1].observation, b[1].observation)


def test_worker_errors_carry_index():
    venv = make_vec_env("chain20", 3, seed=0)
    venv.reset()
    with pytest.raises(WorkerError) as info:
        venv.step([0, 5, 1])
    assert info.value.worker == 1


def test_wrong_action_count():
    venv = make_vec_env("chain20", 2, seed=0)
    venv.reset()
    with pytest.raises(ContractError):
        venv.step([0])


def test_unknown_env_id():
    with pytest.raises(ValueError):
        make_env("atari")
