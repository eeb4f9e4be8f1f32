import pytest

from core.model import table_preset
from core.state_models import ChannelParams, DopplerParams


@pytest.fixture
def d2d_params() -> ChannelParams:
    return table_preset("d2d")[0]


@pytest.fixture
def on_body_params() -> ChannelParams:
    return table_preset("on-body")[0]


@pytest.fixture
def rayleigh_params() -> ChannelParams:
    return ChannelParams(kappa=0.0, mu=1.0, m=1.0, r_bar=1.0)


@pytest.fixture
def unit_doppler() -> DopplerParams:
    return DopplerParams(f_m=1.0)
