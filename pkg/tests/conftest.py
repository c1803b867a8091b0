import pytest

from demoaug.demos import reference_demo
from demoaug.tasks import TaskKind


@pytest.fixture(scope="session")
def push_demo():
    return reference_demo(TaskKind.PUSH)


@pytest.fixture(scope="session")
def pick_place_demo():
    return reference_demo(TaskKind.PICK_PLACE)


@pytest.fixture(scope="session")
def stack_demo():
    return reference_demo(TaskKind.STACK)
