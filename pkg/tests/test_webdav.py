import hashlib
import io

import lxml.etree as etree
import pytest

from mockserver.fixture import random_fixture
from ncforensic.errors import HttpError, NotFoundError, ParseError, PartialFailure
from ncforensic.webdav import (
    DAV, FILE_PROPERTIES, OC, ResourceEntry, TrashEntry, build_propfind_body,
    parse_multistatus, strip_etag)


def requested(body):
    root = etree.fromstring(body)
    return [(etree.QName(e).namespace, etree.QName(e).localname)
            for e in root.find('{DAV:}prop')]


def test_propfind_body():
    assert requested(build_propfind_body([(DAV, 'getetag')])) == [(DAV, 'getetag')]
    assert requested(build_propfind_body(FILE_PROPERTIES)) == FILE_PROPERTIES
    body = build_propfind_body([(OC, 'fileid'), (DAV, 'getetag'), (OC, 'fileid')])
    assert requested(body) == [(OC, 'fileid'), (DAV, 'getetag')]


def test_multistatus_ignores_404_propstat():
    body = b'''<?xml version="1.0"?>
<d:multistatus xmlns:d="DAV:" xmlns:oc="http://owncloud.org/ns">
  <d:response><d:href>/remote.php/dav/files/admin/</d:href>
    <d:propstat><d:prop><d:getetag>"abc"</d:getetag></d:prop>
      <d:status>HTTP/1.1 200 OK</d:status></d:propstat>
    <d:propstat><d:prop><oc:fileid/></d:prop>
      <d:status>HTTP/1.1 404 Not Found</d:status></d:propstat>
  </d:response>
</d:multistatus>'''
    [(href, props)] = parse_multistatus(body)
    assert href == '/remote.php/dav/files/admin/'
    assert list(props) == [(DAV, 'getetag')]
    assert strip_etag(props[(DAV, 'getetag')].text) == 'abc'


def test_multistatus_refuses_entities():
    body = b'''<?xml version="1.0"?>
<!DOCTYPE d [<!ENTITY x SYSTEM "file:///etc/passwd">]>
<d:multistatus xmlns:d="DAV:"><d:response><d:href>&x;</d:href></d:response></d:multistatus>'''
    with pytest.raises(ParseError):
        parse_multistatus(body)


def test_propfind_root_depth_zero(clients):
    [root] = clients.webdav.propfind('', 0)
    assert root.is_directory
    assert root.relative_path == ''
    assert root.file_id == 1


def test_propfind_docs_depth_one(clients):
    entries = clients.webdav.propfind('Docs', 1)
    assert [e.relative_path for e in entries] == ['Docs', 'Docs/notes.txt', 'Docs/report.pdf']
    report = entries[2]
    assert (report.file_id, report.size, report.content_type) == (42, 5, 'application/pdf')
    assert report.etag and '"' not in report.etag
    assert ResourceEntry.from_dict(report.to_dict()) == report


def test_propfind_missing(clients):
    with pytest.raises(NotFoundError):
        clients.webdav.propfind('nope', 1)


def test_walk_fixture(clients, fixture_spec):
    entries = list(clients.webdav.walk(''))
    paths = [e.relative_path for e in entries]
    assert paths[0] == ''
    assert len(paths) == len(set(paths))
    assert set(paths[1:]) == fixture_spec.file_paths('admin')
    assert paths.index('Docs') < paths.index('Docs/report.pdf')


def test_walk_small_tree(start_mock, make_clients):
    instance = start_mock({'users': [{'uid': 'u', 'tokens': [{'id': 1, 'password': 'pw'}],
                                      'files': [{'path': 'd', 'dir': True},
                                                {'path': 'd/a', 'content': 'a'},
                                                {'path': 'd/b', 'content': 'b'}]}]})
    webdav = make_clients(instance.base_url, 'u', 'pw').webdav
    entries = list(webdav.walk('d'))
    assert [e.relative_path for e in entries] == ['d', 'd/a', 'd/b']
    assert entries[0].is_directory


def test_walk_empty_root(start_mock, make_clients):
    instance = start_mock({'users': [{'uid': 'u', 'tokens': [{'id': 1, 'password': 'pw'}]}]})
    assert len(list(make_clients(instance.base_url, 'u', 'pw').webdav.walk(''))) == 1


def test_walk_records_failed_sublisting(clients, mock):
    mock.inject_fault('PROPFIND', r'/files/admin/Docs/?$', 404)
    errors = []
    paths = [e.relative_path for e in clients.webdav.walk('', errors=errors)]
    assert [e.path for e in errors] == ['Docs']
    assert 'Photos/holiday.jpg' in paths
    assert 'Docs/report.pdf' not in paths


def test_walk_raises_partial_without_error_list(clients, mock):
    mock.inject_fault('PROPFIND', r'/files/admin/Photos/?$', 404)
    with pytest.raises(PartialFailure) as info:
        list(clients.webdav.walk(''))
    assert info.value.failed_ids == ['Photos']


@pytest.mark.parametrize('seed', [3, 11])
def test_walk_random_tree(start_mock, make_clients, seed):
    spec = random_fixture(seed)
    instance = start_mock(spec)
    webdav = make_clients(instance.base_url, 'admin', 'app-password').webdav
    paths = [e.relative_path for e in webdav.walk('')]
    assert set(paths[1:]) == spec.file_paths('admin')


def test_content(clients):
    entry = clients.webdav.propfind('Docs/report.pdf', 0)[0]
    assert clients.webdav.get_content(entry.href) == b'hello'
    sink = io.BytesIO()
    length, digest = clients.webdav.download(entry.href, sink)
    assert (length, sink.getvalue()) == (5, b'hello')
    assert digest == hashlib.sha256(b'hello').hexdigest()


def test_zero_byte_file(start_mock, make_clients):
    instance = start_mock({'users': [{'uid': 'u', 'tokens': [{'id': 1, 'password': 'pw'}],
                                      'files': [{'path': 'empty.bin', 'content': ''}]}]})
    webdav = make_clients(instance.base_url, 'u', 'pw').webdav
    assert webdav.get_content(webdav.propfind('empty.bin', 0)[0].href) == b''


def test_directory_content_refused(clients):
    entry = clients.webdav.propfind('Docs', 0)[0]
    with pytest.raises(HttpError) as info:
        clients.webdav.get_content(entry.href)
    assert info.value.status == 405


def test_list_trash(clients):
    trash = dict((e.trash_name, e) for e in clients.webdav.list_trash())
    screenshot = trash['screenshot.jpg.d1728237675']
    assert screenshot.deletion_time == 1728237675
    assert screenshot.original_location == 'Photos/screenshot.jpg'
    assert screenshot.suffix_consistent
    assert TrashEntry.from_dict(screenshot.to_dict()) == screenshot
    project = trash['OldProject.d1728100000']
    assert project.is_directory
    children = dict((c.trash_name, c) for c in clients.webdav.walk_trash(project))
    assert set(children) == {'OldProject.d1728100000/plan.txt', 'OldProject.d1728100000/drafts',
                             'OldProject.d1728100000/drafts/v1.txt'}
    v1 = children['OldProject.d1728100000/drafts/v1.txt']
    assert v1.original_location == 'OldProject/drafts/v1.txt'
    assert v1.deletion_time == 1728100000
    assert clients.webdav.get_content(v1.href) == b'draft\n'


def test_empty_trash(mock, clients):
    mock.state.empty_trash('admin')
    assert clients.webdav.list_trash() == []


def test_versions(clients):
    versions = clients.webdav.list_versions(42)
    assert [v.version_timestamp for v in versions] == [1728100000, 1728000000]
    assert versions[0].href.endswith('/remote.php/dav/versions/admin/versions/42/1728100000')
    contents = dict((v.version_timestamp, clients.webdav.version_content(v)) for v in versions)
    assert contents == {1728000000: b'hel', 1728100000: b'hell'}
    assert clients.webdav.list_versions(43) == []


def test_resolve_file_id(clients):
    assert clients.webdav.resolve_file_id(42) == 'Docs/report.pdf'
    assert clients.webdav.resolve_file_id(1) == ''
    with pytest.raises(NotFoundError):
        clients.webdav.resolve_file_id(9999)
