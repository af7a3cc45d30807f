import pytest

from pathgate.config import load_config
from pathgate.service import SimClock, build_service

B1 = "http://building1.com#"


@pytest.fixture(scope="session")
def config():
    cfg = load_config()
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def building(config):
    return config.load_building()


@pytest.fixture(scope="session")
def weights(config):
    return config.load_weights()


@pytest.fixture()
def service(config):
    return build_service(config, seed=7, clock=SimClock())


@pytest.fixture(scope="session")
def host_address(config):
    return config.hosts[0]


@pytest.fixture(scope="session")
def host_secret(config, host_address):
    return config.load_keyring()[host_address]
