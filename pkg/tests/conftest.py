import numpy as np
import pytest

from fibrewise_anosov.cones import ConeField, check_cone_invariance
from fibrewise_anosov.linear import compute_splitting
from fibrewise_anosov.torus import Grid
from fibrewise_anosov.zoo import CAT, perturbed_cat, rotation_base
from fibrewise_anosov.system import FibrewiseSystem


@pytest.fixture(scope="session")
def cat_split():
    return compute_splitting(CAT)


@pytest.fixture(scope="session")
def fixture_system():
    return perturbed_cat(0.05)


@pytest.fixture(scope="session")
def affine_system():
    return FibrewiseSystem(rotation_base(), CAT)


@pytest.fixture(scope="session")
def fixture_cert(fixture_system, cat_split):
    cones = ConeField.from_splitting(cat_split, 0.5)
    return check_cone_invariance(fixture_system, cones, 1, Grid([16, 32, 32]))


@pytest.fixture(scope="session")
def affine_cert(affine_system, cat_split):
    cones = ConeField.from_splitting(cat_split, 0.5)
    return check_cone_invariance(affine_system, cones, 1, Grid([4, 8, 8]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
