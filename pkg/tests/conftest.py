import numpy as np
import pytest

from causalchef import FeatureSchema, KitchenLayout, schema_for_pots


@pytest.fixture
def cr_layout() -> KitchenLayout:
    layout = KitchenLayout(name="cramped_room", num_pots=1, cook_time=20)
    layout.validate()
    return layout


@pytest.fixture
def two_pot_layout() -> KitchenLayout:
    layout = KitchenLayout(name="two_pot", num_pots=2, cook_time=20)
    layout.validate()
    return layout


@pytest.fixture
def cr_schema() -> FeatureSchema:
    return schema_for_pots(1)


@pytest.fixture
def two_pot_schema() -> FeatureSchema:
    return schema_for_pots(2)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
