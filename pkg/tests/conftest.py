import random

import pytest

from uipbatch import _kernels
from uipbatch.field import get_field

_kernels.warm_up()


@pytest.fixture(scope="session")
def f4():
    return get_field(4)


@pytest.fixture(scope="session")
def f16():
    return get_field(16)


@pytest.fixture(scope="session")
def f64():
    return get_field(64)


@pytest.fixture()
def rnd():
    return random.Random(0xC0FFEE)
