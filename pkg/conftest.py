import pytest

from urn import Composition, build_spec


@pytest.fixture
def spec6():
    """Large urn (6,1,2,5): S=7, m=4, sigma=4/7"""
    return build_spec(6, 1, 2, 5)


@pytest.fixture
def spec18():
    """Large urn (18,2,3,17): S=20, m=15, sigma=3/4"""
    return build_spec(18, 2, 3, 17)


@pytest.fixture
def one_red():
    return Composition(1, 0)
