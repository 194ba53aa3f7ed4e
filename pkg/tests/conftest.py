import numpy as np
import pytest
import torch

from autoft.sim import SimConfig, TabletopEnv, build_catalog, generate_bundle


@pytest.fixture(autouse=True)
def _single_thread_torch():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def catalog():
    return build_catalog(4)


@pytest.fixture(scope="session")
def state_config():
    return SimConfig(observation_mode="state", n_prior_tasks=4)


@pytest.fixture(scope="session")
def image_config():
    return SimConfig(observation_mode="image", n_prior_tasks=4, image_size=32)


@pytest.fixture()
def state_env(state_config, catalog):
    return TabletopEnv(state_config, catalog)


@pytest.fixture()
def image_env(image_config, catalog):
    return TabletopEnv(image_config, catalog)


@pytest.fixture(scope="session")
def small_bundle(state_config, catalog):
    env = TabletopEnv(state_config, catalog)
    counts = {"prior_per_task": 3, "forward": 4, "backward": 4, "failures": 6}
    return generate_bundle(env, counts, seed=11)


def rollout_random(env, task_id, steps, seed):
    rng = np.random.default_rng(seed)
    obs = env.reset(seed, task_id)
    for _ in range(steps):
        obs, flags = env.step(rng.uniform(-1, 1, size=3))
    return obs
