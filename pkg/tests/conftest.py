import numpy as np
import pytest

from arthro_rig.geometry import RigidTransform, Rotation


def random_rotation(rng) -> Rotation:
    return Rotation(rng.normal(size=4))


def random_rigid(rng, trans_scale: float = 50.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng),
                          rng.uniform(-trans_scale, trans_scale, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
