"""Shared fixtures: micro synthetic dataset and a micro-trained checkpoint.

The micro configuration is deliberately tiny (32 px, narrow nets, a handful
of iterations): it exercises every code path in seconds. Quality-bearing
thresholds live in test_acceptance.py, which trains at desk scale.
"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from garmentgan.data import SyntheticSpec, generate_synthetic
from garmentgan.training import TrainConfig, run_full


MICRO_KWARGS = dict(
    image_size=32,
    base_channels=8,
    n_downsample=2,
    n_res_blocks=1,
    disc_base_channels=8,
    disc_layers=2,
    batch_size=4,
    recon_iters=6,
    adv_iters=8,
    seed=11,
)


def micro_config(**overrides) -> TrainConfig:
    kwargs = dict(MICRO_KWARGS)
    kwargs.update(overrides)
    return TrainConfig(**kwargs)


@pytest.fixture(scope="session")
def micro_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("micro_data")
    return generate_synthetic(SyntheticSpec(image_size=32, n_images=24, n_collar_shapes=3), seed=5, out_dir=out)


@pytest.fixture(scope="session")
def micro_ckpt_dir(tmp_path_factory, micro_dataset):
    out = tmp_path_factory.mktemp("micro_ckpt")
    config = micro_config(checkpoint_dir=str(out))
    run_full(config, micro_dataset)
    return out


@pytest.fixture(scope="session")
def micro_adv_ckpt(micro_ckpt_dir):
    from garmentgan.training import load_checkpoint

    return load_checkpoint(micro_ckpt_dir / "adversarial")
