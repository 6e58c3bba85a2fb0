import pytest

from sdbridge import BridgeServer, ServerConfig, TinyDepthModel


@pytest.fixture(scope="session")
def bridge():
    config = ServerConfig(listen="127.0.0.1:0", model="tiny")
    with BridgeServer(TinyDepthModel(), config) as server:
        yield server
