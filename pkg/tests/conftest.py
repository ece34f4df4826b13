import numpy as np
import pytest

from thzfmtl.sensing import build_ensemble
from thzfmtl.system import DESK_PROFILE, child_rng


@pytest.fixture
def desk():
    return DESK_PROFILE


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def desk_ensemble():
    return build_ensemble(DESK_PROFILE, child_rng(0, "sensing"))


def synthetic_dataset(seed, D=12, n_rf=3, n_t=4, N=6, user_id=1):
    """Small random dataset with the shapes of a real LocalDataset."""
    from thzfmtl.fmtl.data import LocalDataset

    r = np.random.default_rng(seed)
    h = r.standard_normal((D, n_t)) + 1j * r.standard_normal((D, n_t))
    return LocalDataset(
        user_id=user_id,
        features=r.standard_normal((D, n_rf, 3)),
        label_channel=np.concatenate([h.real, h.imag], axis=1),
        label_support=np.abs(r.standard_normal((D, N))),
        true_channel=h,
        true_doas=r.uniform(-1, 1, (D, 1)),
        subcarrier=np.zeros(D, dtype=int),
        is_train=np.ones(D, dtype=bool),
        doa_sector=(-1.0, 1.0),
    )
