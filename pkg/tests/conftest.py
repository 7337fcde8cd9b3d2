"""Shared fixtures: terrain presets, wheel geometry, coefficient tables and a coarse oracle grid."""

import os

import numpy as np
import pytest

from terrasense.coeffs import FactorFunction, GFunCoeffs, load_coeffs
from terrasense.presets import DATA_DIR, get_terrain_preset
from terrasense.scm import ScmConfig
from terrasense.surrogate import reset_extrapolation_warnings
from terrasense.terrain import WheelGeometry
from terrasense.vehicle import VehicleParams


@pytest.fixture
def clay():
    return get_terrain_preset("clay")


@pytest.fixture
def sand():
    return get_terrain_preset("sand")


@pytest.fixture
def sandy_loam():
    return get_terrain_preset("sandy_loam")


@pytest.fixture
def geom():
    return WheelGeometry()


@pytest.fixture
def vehicle():
    # Per-wheel static loads stay inside the correction functions' load range
    return VehicleParams(M_t=1400.0, I_zz=2300.0)


@pytest.fixture
def coarse_scm():
    return ScmConfig(spacing=0.02)


@pytest.fixture
def identity_coeffs(clay):
    """g1 = 1, g2 = 0, g3 = k on every range: the surrogate collapses to the base model."""
    return GFunCoeffs.identity(clay.name, clay.k)


@pytest.fixture
def scaled_coeffs(clay):
    """Identity tables with g1 = 1.2 everywhere."""
    coeffs = GFunCoeffs.identity(clay.name, clay.k)
    for gset in list(coeffs.sets.values()):
        factors = dict(gset.factors)
        factors["g1_s"] = FactorFunction.constant("g1_s", 1.2)
        coeffs = coeffs.with_set(type(gset)(gset.slip_range, gset.branch, factors))
    return coeffs


@pytest.fixture
def published_coeffs():
    return load_coeffs(os.path.join(DATA_DIR, "clay_published.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _fresh_extrapolation_warnings():
    reset_extrapolation_warnings()
    yield
    reset_extrapolation_warnings()
