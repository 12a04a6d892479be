import json

import pytest

from ncforensic.errors import AuthFailed, Forbidden, InputError, NotFoundError, ParseError
from ncforensic.ocs import ServerCapabilities, ShareEntry, UserInfo, parse_envelope


def envelope(statuscode, data=None):
    return json.dumps({'ocs': {'meta': {'status': 'x', 'statuscode': statuscode,
                                        'message': 'm'}, 'data': data}}).encode('utf-8')


def test_envelope_statuscodes():
    assert parse_envelope(envelope(100, {'a': 1})) == {'a': 1}
    assert parse_envelope(envelope(200, [])) == []
    with pytest.raises(Forbidden):
        parse_envelope(envelope(997))
    with pytest.raises(NotFoundError):
        parse_envelope(envelope(998))
    with pytest.raises(ParseError):
        parse_envelope(envelope(555))
    with pytest.raises(ParseError):
        parse_envelope(b'<ocs/>')


def test_current_user(clients):
    user = clients.ocs.get_current_user()
    assert user.uid == 'admin'
    assert user.quota.total == 10 * 1024 ** 3
    assert user.quota.used == 1024 ** 3
    assert user.quota.relative == 10.0
    assert UserInfo.from_dict(user.to_dict()) == user


def test_revoked_password(mock, make_clients):
    with pytest.raises(AuthFailed):
        make_clients(mock.base_url, password='revoked').ocs.get_current_user()


def test_list_users(clients, mock, make_clients):
    assert clients.ocs.list_users() == ['admin', 'alice', 'bob']
    with pytest.raises(Forbidden):
        make_clients(mock.base_url, 'alice').ocs.list_users()


def test_list_users_single_user(start_mock, make_clients):
    instance = start_mock({'users': [{'uid': 'admin', 'admin': True,
                                      'tokens': [{'id': 1, 'password': 'pw'}]}]})
    assert make_clients(instance.base_url, 'admin', 'pw').ocs.list_users() == ['admin']


def test_get_user(clients, mock, make_clients):
    assert clients.ocs.get_user('alice').groups == ['staff']
    with pytest.raises(Forbidden):
        make_clients(mock.base_url, 'bob').ocs.get_user('alice')
    with pytest.raises(NotFoundError):
        clients.ocs.get_user('ghost')


def test_search_users(clients):
    assert [u.uid for u in clients.ocs.search_users('ali')] == ['alice']
    assert clients.ocs.search_users('zzz') == []
    with pytest.raises(InputError):
        clients.ocs.search_users('')


def test_capabilities(clients):
    capabilities = clients.ocs.get_capabilities()
    assert capabilities.version.major == 23
    assert capabilities.version.string == '23.0.0'
    assert capabilities.capability_map['files']['versioning'] is True
    assert json.loads(capabilities.raw)['ocs']['data']['version']['major'] == 23
    restored = ServerCapabilities.from_dict(capabilities.to_dict())
    assert restored == capabilities


def test_capabilities_without_version_block(start_mock, make_clients):
    instance = start_mock({'server': {'version': ''},
                           'users': [{'uid': 'admin', 'admin': True,
                                      'tokens': [{'id': 1, 'password': 'pw'}]}]})
    with pytest.raises(ParseError):
        make_clients(instance.base_url, 'admin', 'pw').ocs.get_capabilities()


def test_file_activity(clients):
    entries = clients.ocs.get_file_activity(77)
    assert len(entries) == 3
    assert {e.type for e in entries} == {'file_created', 'file_changed', 'file_deleted'}
    assert [e.activity_id for e in entries] == [6, 5, 4]


def test_activity_of_purged_file(clients):
    assert [e.type for e in clients.ocs.get_file_activity(99)] == ['file_deleted', 'file_created']
    assert clients.ocs.get_file_activity(123456) == []


def test_activity_pagination(clients):
    assert [e.activity_id for e in clients.ocs.get_file_activity(42, limit=2)] == [3, 2]
    assert [e.activity_id for e in clients.ocs.get_file_activity(42, since=3)] == [2, 1]


def test_shares(clients):
    shares = dict((s.share_id, s) for s in clients.ocs.list_shares())
    link = shares[7]
    assert link.share_type == 3
    assert link.token == '3kXXKCtn7WyyNS3'
    assert link.shared_with is None
    assert link.url.endswith('/index.php/s/3kXXKCtn7WyyNS3')
    assert link.password_protected
    user = shares[8]
    assert user.share_type == 0
    assert user.shared_with == 'alice'
    assert ShareEntry.from_dict(link.to_dict()) == link


def test_shares_filters(clients, mock, make_clients):
    assert [s.share_id for s in clients.ocs.list_shares(subfiles_of='Docs')] == [7]
    incoming = make_clients(mock.base_url, 'alice').ocs.list_shares(shared_with_me=True)
    assert [s.share_id for s in incoming] == [8]
    assert make_clients(mock.base_url, 'bob').ocs.list_shares() == []
