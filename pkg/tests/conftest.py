import numpy as np
import pytest

from ginshop.instance import Instance


@pytest.fixture
def tiny2x2() -> Instance:
    """2 jobs x 2 machines; job 0 on machines (0,1) with durations (3,2),
    job 1 on (1,0) with (2,4).  Hand-checked facts: lower bound 7, reset
    clbs {3,5,2,6}, spread 2, optimum 7 over 6 dispatch interleavings."""
    return Instance(2, 2, np.array([[0, 1], [1, 0]]), np.array([[3, 2], [2, 4]]))


@pytest.fixture
def one_by_one() -> Instance:
    return Instance(1, 1, np.array([[0]]), np.array([[5]]))
