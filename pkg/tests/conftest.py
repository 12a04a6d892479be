import pytest

from acquisition.builders import build_clients
from mockserver.fixture import load_fixture
from mockserver.server import serve
from ncforensic.transport import Credentials, Transport

ADMIN_PASSWORD = 'admin-app-password'
PASSWORDS = {'admin': ADMIN_PASSWORD, 'alice': 'alice-app-password', 'bob': 'bob-app-password'}


@pytest.fixture
def fixture_spec():
    return load_fixture()


@pytest.fixture
def mock(fixture_spec):
    instance = serve(fixture_spec)
    yield instance
    instance.stop()


@pytest.fixture
def start_mock():
    """Factory for mocks seeded from a custom fixture; all are stopped afterwards."""
    started = []

    def start(fixture):
        instance = serve(fixture)
        started.append(instance)
        return instance
    yield start
    for instance in started:
        instance.stop()


@pytest.fixture
def make_clients():
    def make(base_url, username='admin', password=None):
        password = PASSWORDS.get(username, '') if password is None else password
        return build_clients(Transport(Credentials(base_url, username, password)))
    return make


@pytest.fixture
def clients(mock, make_clients):
    return make_clients(mock.base_url)


@pytest.fixture
def cli_env(mock, monkeypatch):
    monkeypatch.setenv('NC_BASE_URL', mock.base_url)
    monkeypatch.setenv('NC_USERNAME', 'admin')
    monkeypatch.setenv('NC_APP_PASSWORD', ADMIN_PASSWORD)
    monkeypatch.delenv('NC_CREDENTIAL_FILE', raising=False)
    return mock
