import numpy as np
import pytest

from langsteer.world import (GridSpec, ObjectInstance, generate_environment,
                             make_environment)


@pytest.fixture(scope="session")
def spec():
    return GridSpec()


@pytest.fixture(scope="session")
def env(spec):
    return generate_environment(seed=7, spec=spec)


@pytest.fixture(scope="session")
def empty_env(spec):
    return make_environment("empty", 0, spec, ())


@pytest.fixture(scope="session")
def boxed_env(spec):
    """One cheezit box centered in the world."""
    obj = ObjectInstance(0, (1024.0, 1024.0), 0)
    return make_environment("boxed", 0, spec, (obj,))
