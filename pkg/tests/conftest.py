import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(1)

from attredit.networks import NetworkConfig
from attredit.schema import AttributeSchema


@pytest.fixture(scope="session")
def toy_schema() -> AttributeSchema:
    return AttributeSchema.from_group_values(
        {"color": ["red", "green", "blue"], "sleeve": ["long", "short"]}
    )


@pytest.fixture(scope="session")
def paper_sized_schema() -> AttributeSchema:
    """A 22-value schema shaped like the public garment dataset: 4 sleeves + 18 colors."""
    sleeves = ["no_sleeve", "short_sleeve", "mid_sleeve", "long_sleeve"]
    colors = [
        "black", "white", "gray", "red", "orange", "yellow", "green", "cyan",
        "blue", "navy", "purple", "pink", "brown", "beige", "olive", "teal",
        "maroon", "multicolor",
    ]
    return AttributeSchema.from_group_values({"sleeve": sleeves, "color": colors})


@pytest.fixture()
def micro_config() -> NetworkConfig:
    """8x8 images, n=2, tiny channels, float64: the finite-difference scale."""
    return NetworkConfig(
        num_attributes=2,
        image_size=8,
        base_channels=4,
        num_downsamples=2,
        latent_channels=8,
        dtype="float64",
    )
