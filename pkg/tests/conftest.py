import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from scaffdiff.diffusion import DenoiserConfig, TrainConfig, init_diffusion_model
from scaffdiff.iprior import IpNetConfig, ShiftNetConfig, init_ipnet
from scaffdiff.numerics import Rng
from scaffdiff.synthetic import make_dataset

TINY_IPNET = IpNetConfig(hidden_dim=8, message_dim=8, n_layers=1, attention_dim=4)
TINY_DENOISER = DenoiserConfig(hidden_dim=8, message_dim=8, n_layers=2, time_dim=4)
TINY_SHIFT = ShiftNetConfig(hidden_dim=8, time_dim=4)


def random_rotation(seed):
    return Rotation.random(random_state=seed).as_matrix()


@pytest.fixture(scope="session")
def dataset():
    tuples, a3ms = make_dataset(4, seed=11)
    return tuples


@pytest.fixture(scope="session")
def a3m_texts():
    return make_dataset(4, seed=11)[1]


@pytest.fixture
def tiny_ipnet():
    return init_ipnet(Rng.from_seed(3), TINY_IPNET)


@pytest.fixture
def tiny_model():
    cfg = TrainConfig(T=20, denoiser=TINY_DENOISER, shift=TINY_SHIFT)
    model = init_diffusion_model(Rng.from_seed(4), TINY_IPNET.hidden_dim, cfg)
    model.rgroup_sizes = {3: 1, 4: 1}
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
