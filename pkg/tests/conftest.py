"""Session fixtures; the heavy lifting lives in desk_setup."""

import pytest

from desk_setup import (cached_pretrain, cached_stage1, desk_train_config,
                        sweep_train_config)
from iclsim.model import ModelParams
from iclsim.training import TrainConfig


@pytest.fixture(scope="session")
def desk_cfg() -> TrainConfig:
    return desk_train_config()


@pytest.fixture(scope="session")
def desk_params(desk_cfg) -> ModelParams:
    return cached_pretrain(desk_cfg)


@pytest.fixture(scope="session")
def sweep_params_by_d() -> dict[int, ModelParams]:
    return {d: cached_pretrain(sweep_train_config(d)) for d in (16, 32)}


@pytest.fixture(scope="session")
def narrow_stage1_params() -> ModelParams:
    return cached_stage1(desk_train_config(m=500))
