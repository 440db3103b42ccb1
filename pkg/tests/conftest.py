import os

os.environ["HARNACKLAB_WORKERS"] = "1"
os.environ.pop("HARNACKLAB_METRICS_FILE", None)
os.environ.pop("HARNACKLAB_LOG_LEVEL", None)

import pytest

from harnacklab.geometry import Domain, SegmentObstacle


@pytest.fixture
def disc():
    """The unit disc with no obstacles."""
    return Domain(2)


@pytest.fixture
def slit_domain():
    """Unit disc minus the slit [-1, 0] x {0}."""
    return Domain(2, (SegmentObstacle((-1.0, 0.0), (0.0, 0.0)),))
