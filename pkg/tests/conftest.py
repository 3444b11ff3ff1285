import numpy as np
import pytest

from taskorder.core import Task, TaskCollection
from taskorder.generators import gen_isotropic


@pytest.fixture(scope="session")
def iso_small():
    """Small isotropic collection shared by read-only tests."""
    return gen_isotropic(d=20, r=4, T=10, seed=7)


@pytest.fixture(scope="session")
def iso_fig():
    """The d=100, r=10, T=50 configuration used by several experiments."""
    return gen_isotropic(d=100, r=10, T=50, seed=42)


@pytest.fixture()
def two_axis_tasks():
    """d=2 tasks with axis-aligned rows: A kills x, B kills y; w* = 0."""
    task_a = Task(features=np.array([[1.0, 0.0]]), targets=np.array([0.0]))
    task_b = Task(features=np.array([[0.0, 1.0]]), targets=np.array([0.0]))
    return TaskCollection.build([task_a, task_b], w0=np.array([3.0, 4.0]))
