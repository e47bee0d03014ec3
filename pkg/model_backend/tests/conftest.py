import pytest

from model_backend.config import BackendConfig
from model_backend.samples import write_samples
from model_backend.server import ModelBackendHandler


@pytest.fixture(scope="session")
def samples_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("samples")
    write_samples(out)
    return out


@pytest.fixture(scope="session")
def handler():
    return ModelBackendHandler(BackendConfig(engine="heuristic"))
