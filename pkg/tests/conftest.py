import pytest

from bido.models.enums import LabelEnum
from bido.schemas.config import CliConfig, CorpusConfig
from bido.services.corpus import CorpusServices
from bido.utils.session import experiment_session


@pytest.fixture
def session():
    """float64 defaults, seeded sources, one thread."""
    with experiment_session(0) as generator:
        yield generator


@pytest.fixture
def small_config() -> CliConfig:
    """A configuration small enough to train in well under a second per epoch."""
    return CliConfig(
        width=32,
        height=32,
        dex_channels="4,8",
        xml_channels="4,8",
        k=4,
        l=8,
        h=8,
        rank=2,
        dex_mlp_hidden="8",
        batch_size=4,
        epochs=1,
        corpus_n=12,
        seed=0,
    )


@pytest.fixture
def corpus_config() -> CorpusConfig:
    return CorpusConfig(n=8, seed=3)


@pytest.fixture
def sample_spec(corpus_config):
    return CorpusServices.sample_spec(LabelEnum.MALICIOUS, 11, corpus_config)


@pytest.fixture
def dex_bytes(sample_spec) -> bytes:
    return CorpusServices.build_synthetic_dex(sample_spec)


@pytest.fixture
def xml_bytes(sample_spec) -> bytes:
    return CorpusServices.build_synthetic_xml(sample_spec)
