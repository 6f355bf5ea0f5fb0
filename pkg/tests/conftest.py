import sys
import pytest

from renvol import conformal as cf
from renvol import end_geometry as eg
from renvol import fixtures as fx
from renvol import tensorfield as tf


@pytest.fixture(scope="session")
def octagon3():
    return fx.octagon_g2(3)


@pytest.fixture(scope="session")
def hyp3(octagon3):
    return cf.hyperbolize(octagon3.mesh, octagon3.metric, tol=1e-12)


@pytest.fixture(scope="session")
def octagon2():
    return fx.octagon_g2(2)


@pytest.fixture(scope="session")
def hyp2(octagon2):
    return cf.hyperbolize(octagon2.mesh, octagon2.metric, tol=1e-12)


@pytest.fixture(scope="session")
def basis3(octagon3, hyp3):
    return tf.codazzi_basis(octagon3.mesh, hyp3)


@pytest.fixture(scope="session")
def fuchsian3(octagon3, hyp3):
    return eg.fuchsian_data(octagon3.mesh, hyp3)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "SUMMARY", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
