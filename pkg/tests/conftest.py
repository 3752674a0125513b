import numpy as np
import pytest
import simpy

from shardmap import DocStore, Mapper, StoreConfig


@pytest.fixture
def env():
    return simpy.Environment()


@pytest.fixture
def store(env):
    return DocStore(StoreConfig(), env)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def mapper(store, rng):
    return Mapper(store, rng)
