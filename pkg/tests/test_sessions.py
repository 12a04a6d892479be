import pytest

from ncforensic.errors import AuthFailed, NotFoundError, PartialFailure, RefusingSelf
from ncforensic.sessions import DeviceSession


def test_list_sessions(clients):
    sessions = clients.sessions.list_sessions()
    assert [s.token_id for s in sessions] == [1, 2, 3]
    assert [s.is_current for s in sessions] == [True, False, False]
    android = sessions[1]
    assert android.agent_name == 'Mozilla/5.0 (Android) Nextcloud-android/3.29.0'
    assert android.session_type == 'app'
    assert sessions[2].session_type == 'browser'
    assert DeviceSession.from_dict(android.to_dict()) == android
    assert android.raw['id'] == 2


def test_revoke_session(clients, mock, make_clients):
    android = make_clients(mock.base_url, password='android-app-password')
    android.ocs.get_current_user()
    confirmation = clients.sessions.revoke_session(2)
    assert (confirmation.token_id, confirmation.status) == (2, 200)
    assert not confirmation.self_revoked
    assert [s.token_id for s in clients.sessions.list_sessions()] == [1, 3]
    with pytest.raises(AuthFailed):
        android.ocs.get_current_user()


def test_revoke_unknown_session(clients):
    with pytest.raises(NotFoundError):
        clients.sessions.revoke_session(999)


def test_revoke_own_session_needs_force(clients, mock):
    with pytest.raises(RefusingSelf):
        clients.sessions.revoke_session(1)
    assert mock.method_counts()['DELETE'] == 0
    assert 1 in mock.state.accounts['admin'].tokens


def test_forced_self_revocation(clients, mock):
    confirmation = clients.sessions.revoke_session(1, force=True)
    assert confirmation.self_revoked
    assert 1 not in mock.state.accounts['admin'].tokens
    with pytest.raises(AuthFailed):
        clients.sessions.list_sessions()


def test_revoke_all(clients, mock):
    assert clients.sessions.revoke_all() == 2
    assert [s.token_id for s in clients.sessions.list_sessions()] == [1]
    assert clients.sessions.revoke_all() == 0
    assert mock.method_counts()['DELETE'] == 2


def test_revoke_all_reports_partial_failure(clients, mock):
    mock.inject_fault('DELETE', r'/apptokens/2$', 500)
    with pytest.raises(PartialFailure) as info:
        clients.sessions.revoke_all()
    assert info.value.failed_ids == [2]
    assert info.value.completed == 1
    assert sorted(mock.state.accounts['admin'].tokens) == [1, 2]


def test_revocation_is_recorded_in_ledger(clients):
    clients.sessions.revoke_session(3)
    methods = [r.method for r in clients.transport.ledger.records]
    assert methods == ['GET', 'DELETE']
