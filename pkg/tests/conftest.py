import numpy as np
import pytest

from racebench.dynamics import VehicleParams
from racebench.track import distance_field, grid_from_centerline, parameterize
from racebench.tracks import make_oval, make_stadium


@pytest.fixture(scope="session")
def vehicle():
    return VehicleParams(mu=0.9)


@pytest.fixture(scope="session")
def oval_bundle():
    track = make_oval()
    param = parameterize(track)
    grid = grid_from_centerline(track, resolution=0.05)
    return track, param, grid, distance_field(grid)


@pytest.fixture(scope="session")
def stadium_bundle():
    track = make_stadium()
    param = parameterize(track)
    grid = grid_from_centerline(track, resolution=0.05)
    return track, param, grid, distance_field(grid)
