import math
from pathlib import Path

import pytest

from config import TestingConfig
from numkit import SeededRng
from protocol import ScenarioConfig, ca_setup

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

EXAMPLE_SCENE = {
    "user_location": [2, 4],
    "history": [[4, 4]],
    "pois": [[0, 0], [10, 0], [0, 10]],
    "t": 2,
    "world_diameter": 20,
    "k_nn": 1,
    "seed": 3
}


def _collinear(points):
    (x0, y0) = points[0]
    for (x1, y1) in points[1:]:
        for (x2, y2) in points[1:]:
            if (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0) != 0:
                return False
    return True


@pytest.fixture
def rng():
    return SeededRng(1234)


@pytest.fixture
def settings():
    return TestingConfig


@pytest.fixture
def scene_factory():
    def make(**overrides):
        data = {**EXAMPLE_SCENE, **overrides}
        return ScenarioConfig.from_dict(data)
    return make


@pytest.fixture
def keys(scene_factory, settings):
    return ca_setup(scene_factory(), SeededRng(99), settings)


@pytest.fixture
def random_scene():
    """Seeded random non-collinear scene; D covers every coordinate and pairwise distance"""
    def make(seed, n_range=(3, 10), coord_bound=10**4, t_range=(2, 5), **overrides):
        r = SeededRng(seed)
        while True:
            n = r.randint(*n_range)
            t = r.randint(*t_range)
            points = [[r.randint(-coord_bound, coord_bound), r.randint(-coord_bound, coord_bound)]
                      for _ in range(n + t)]
            pois = points[:n]
            if not _collinear(pois):
                break
        max_sq = max((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 for a in points for b in points)
        diameter = max(max(abs(v) for p in points for v in p), math.isqrt(max_sq) + 1)
        data = {
            "user_location": points[n],
            "history": points[n + 1:],
            "pois": pois,
            "t": t,
            "world_diameter": diameter,
            "k_nn": r.randint(1, n),
            "seed": seed
        }
        data.update(overrides)
        return ScenarioConfig.from_dict(data)
    return make
