import os

import pytest
from hypothesis import HealthCheck, settings

from ctrlbench import envs

from .stubs import CountingEnv, RaggedEnv

settings.register_profile("ctrlbench", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ctrlbench"))


@pytest.fixture
def stub_envs():
    CountingEnv.total_steps = 0
    envs.ENVS["counting"] = CountingEnv
    envs.ENVS["ragged"] = RaggedEnv
    yield CountingEnv
    envs.ENVS.pop("counting", None)
    envs.ENVS.pop("ragged", None)
