import base64
import hashlib
import json
import os
import stat

import pytest

from acquisition.builders import build_config, read_credential_file, resolve_app_password
from acquisition.collect import acquire_paths, bundle_path, dump
from acquisition.manifest import LEDGER_NAME, MANIFEST_NAME, EvidenceManifest
from acquisition.verify import VerificationReport, verify_bundle
from mockserver.fixture import random_fixture
from ncforensic.errors import (
    InputError, InvalidCredentials, ManifestCorrupt, ManifestMissing, OutDirNotEmpty,
    ResourceNotFound)
from ncforensic.utils import sha256_file


def read(bundle, relative):
    with open(os.path.join(bundle, *relative.split('/')), 'rb') as f:
        return f.read()


@pytest.fixture
def bundle(clients, tmp_path):
    out = str(tmp_path / 'case')
    manifest = dump(clients, '', True, True, out)
    return out, manifest


def test_dump_sends_only_read_methods(bundle, mock):
    counts = mock.method_counts()
    assert set(counts) <= {'GET', 'PROPFIND'}
    assert counts['MOVE'] == 0
    assert counts['DELETE'] == 0


def test_dump_layout(bundle):
    out, manifest = bundle
    assert read(out, 'files/Docs/report.pdf') == b'hello'
    assert read(out, 'files/Docs/notes.txt') == b'meeting at noon\n'
    assert read(out, 'trash/OldProject.d1728100000/drafts/v1.txt') == b'draft\n'
    assert os.path.isfile(os.path.join(out, 'trash', 'screenshot.jpg.d1728237675'))
    assert read(out, 'versions/42/1728000000') == b'hel'
    assert read(out, 'versions/42/1728100000') == b'hell'
    sidecar = json.loads(read(out, 'metadata/trash/screenshot.jpg.d1728237675.json'))
    assert sidecar['entry']['original_location'] == 'Photos/screenshot.jpg'
    assert sidecar['entry']['deletion_time'] == 1728237675


def test_manifest_records(bundle, fixture_spec):
    out, manifest = bundle
    assert manifest.complete
    assert manifest.failures == []
    files = manifest.by_category('files')
    assert set(r.extra['relative_path'] for r in files) == \
        fixture_spec.file_paths('admin', directories=False)
    report = next(r for r in files if r.extra['relative_path'] == 'Docs/report.pdf')
    assert report.sha256 == hashlib.sha256(b'hello').hexdigest()
    assert report.byte_length == 5
    assert report.bundle_path == 'files/Docs/report.pdf'
    assert report.source_url.endswith('/remote.php/dav/files/admin/Docs/report.pdf')
    trash = dict((r.extra['trash_name'], r) for r in manifest.by_category('trash'))
    assert trash['screenshot.jpg.d1728237675'].extra['original_location'] == \
        'Photos/screenshot.jpg'
    assert trash['OldProject.d1728100000/plan.txt'].extra['deletion_time'] == 1728100000
    assert [r.extra['version_timestamp'] for r in manifest.by_category('versions')] == \
        [1728100000, 1728000000]
    stamps = [r.retrieved_at for r in manifest.records]
    assert stamps == sorted(stamps)


def test_manifest_on_disk(bundle):
    out, manifest = bundle
    loaded = EvidenceManifest.load(out)
    assert len(loaded.records) == len(manifest.records)
    assert loaded.serialize() == read(out, MANIFEST_NAME)
    assert loaded.request_ledger_digest == sha256_file(os.path.join(out, LEDGER_NAME))
    text = read(out, MANIFEST_NAME).decode('utf-8') + read(out, LEDGER_NAME).decode('utf-8')
    assert 'admin-app-password' not in text


def test_metadata_preserves_raw_listings(bundle):
    out, manifest = bundle
    metadata = manifest.by_category('metadata')
    methods = set(r.extra.get('method') for r in metadata)
    assert {'GET', 'PROPFIND'} <= methods
    for record in metadata:
        assert hashlib.sha256(read(out, record.bundle_path)).hexdigest() == record.sha256


@pytest.mark.parametrize('seed', range(20))
def test_dump_is_complete_on_random_trees(start_mock, make_clients, tmp_path, seed):
    spec = random_fixture(seed)
    instance = start_mock(spec)
    clients = make_clients(instance.base_url, 'admin', 'app-password')
    out = str(tmp_path / 'case')
    manifest = dump(clients, '', False, False, out)
    expected = dict((item['path'], base64.b64decode(item['content_b64']))
                    for item in spec.user('admin')['files'] if not item.get('dir'))
    records = dict((r.extra['relative_path'], r) for r in manifest.by_category('files'))
    assert set(records) == set(expected)
    for path, content in expected.items():
        assert read(out, 'files/' + path) == content
        assert records[path].sha256 == hashlib.sha256(content).hexdigest()
    assert verify_bundle(out).ok


def test_dump_of_subtree(clients, tmp_path):
    out = str(tmp_path / 'case')
    manifest = dump(clients, 'Docs', False, False, out)
    paths = sorted(r.extra['relative_path'] for r in manifest.by_category('files'))
    assert paths == ['Docs/notes.txt', 'Docs/report.pdf']


def test_dump_records_failed_listing(clients, mock, tmp_path):
    mock.inject_fault('PROPFIND', r'/files/admin/Photos/?$', 500)
    out = str(tmp_path / 'case')
    manifest = dump(clients, '', False, False, out)
    [failure] = manifest.failures
    assert failure.extra['relative_path'] == 'Photos'
    assert failure.bundle_path is None
    assert '500' in failure.error
    assert read(out, 'files/Docs/report.pdf') == b'hello'


def test_dump_as_non_admin(mock, make_clients, tmp_path):
    out = str(tmp_path / 'case')
    manifest = dump(make_clients(mock.base_url, 'alice'), '', True, True, out)
    assert manifest.failures == []
    assert read(out, 'files/Notes/todo.txt') == b'buy milk\n'


def test_dump_refuses_non_empty_directory(bundle, clients):
    out, _ = bundle
    with pytest.raises(OutDirNotEmpty):
        dump(clients, '', True, True, out)


def test_resume_refetches_only_what_is_missing(bundle, clients):
    out, first = bundle
    os.remove(os.path.join(out, 'files', 'Docs', 'notes.txt'))
    sent_before = len(clients.transport.ledger)
    manifest = dump(clients, '', True, True, out, resume=True)
    assert read(out, 'files/Docs/notes.txt') == b'meeting at noon\n'
    assert len(manifest.by_category('files')) == len(first.by_category('files'))
    assert len(manifest.by_category('versions')) == 2
    assert os.path.isfile(os.path.join(out, 'ledger.previous-1.jsonl'))
    downloads = [r.url for r in clients.transport.ledger.records[sent_before:]
                 if r.method == 'GET' and '/remote.php/dav/' in r.url]
    assert len(downloads) == 1
    assert downloads[0].endswith('/files/admin/Docs/notes.txt')
    assert verify_bundle(out).ok


def test_verify_clean_bundle(bundle):
    out, manifest = bundle
    report = verify_bundle(out)
    assert report.ok
    assert report.exit_status == 0
    assert report.mismatches == [] and report.missing == []
    assert len(report.matches) == len(manifest.records)
    assert report.ledger_ok is True
    assert report.manifest_digest == sha256_file(os.path.join(out, MANIFEST_NAME))
    assert VerificationReport.from_dict(report.to_dict()) == report


def test_verify_detects_flipped_byte(bundle):
    out, _ = bundle
    target = os.path.join(out, 'files', 'Docs', 'notes.txt')
    with open(target, 'r+b') as f:
        first = f.read(1)
        f.seek(0)
        f.write(bytes([first[0] ^ 0x01]))
    report = verify_bundle(out)
    assert [m.bundle_path for m in report.mismatches] == ['files/Docs/notes.txt']
    assert report.missing == []
    assert report.exit_status == 1


def test_verify_detects_missing_object(bundle):
    out, _ = bundle
    os.remove(os.path.join(out, 'versions', '42', '1728000000'))
    report = verify_bundle(out)
    assert report.missing == ['versions/42/1728000000']
    assert not report.ok


def test_verify_detects_altered_ledger(bundle):
    out, _ = bundle
    with open(os.path.join(out, LEDGER_NAME), 'a') as f:
        f.write('{}\n')
    report = verify_bundle(out)
    assert report.ledger_ok is False
    assert report.exit_status == 1


def test_verify_without_manifest(tmp_path):
    with pytest.raises(ManifestMissing):
        verify_bundle(str(tmp_path))


def test_dumps_of_same_instance_agree(clients, tmp_path):
    first = dump(clients, '', True, True, str(tmp_path / 'one'))
    second = dump(clients, '', True, True, str(tmp_path / 'two'))

    def shape(manifest):
        # session listings carry last-activity stamps, so only metadata paths are compared
        return [(r.category, r.source_url, r.bundle_path,
                 None if r.category == 'metadata' else r.sha256) for r in manifest.records]
    assert shape(first) == shape(second)


def test_aborted_dump_leaves_manifest_open(clients, tmp_path):
    out = str(tmp_path / 'case')
    with pytest.raises(ResourceNotFound):
        dump(clients, 'nope', False, False, out)
    with pytest.raises(ManifestCorrupt):
        EvidenceManifest.load(out)
    with pytest.raises(ManifestCorrupt):
        verify_bundle(out)
    manifest = EvidenceManifest.load(out, require_footer=False)
    assert not manifest.complete
    [failure] = manifest.failures
    assert failure.extra == {'aborted': True}
    assert 'acquisition aborted' in failure.error
    resumed = dump(clients, 'Docs', False, False, out, resume=True)
    assert resumed.complete
    assert resumed.failures == []
    assert verify_bundle(out).ok


def test_acquire_paths(clients, tmp_path):
    out = str(tmp_path / 'cycle')
    records = acquire_paths(clients.webdav, ['Docs/report.pdf', 'missing.txt'], out)
    assert [r.bundle_path for r in records] == ['files/Docs/report.pdf']
    manifest = EvidenceManifest.load(out)
    assert [r.extra['relative_path'] for r in manifest.failures] == ['missing.txt']


def test_bundle_path_refuses_escapes():
    assert bundle_path('files', 'a//b/') == 'files/a/b'
    for unsafe in ('../etc/passwd', 'a/./b', 'a\\b'):
        with pytest.raises(InputError):
            bundle_path('files', unsafe)


def test_activity_survives_purge(clients, mock):
    mock.state.delete_to_trash('admin', 'Docs/notes.txt')
    mock.state.empty_trash('admin')
    assert clients.webdav.list_trash() == []
    kinds = [e.type for e in clients.ocs.get_file_activity(43)]
    assert kinds[0] == 'file_deleted'


def test_credential_file_permissions(tmp_path):
    path = tmp_path / 'secret'
    path.write_text('app-secret\nignored\n')
    os.chmod(str(path), stat.S_IRUSR | stat.S_IWUSR)
    assert read_credential_file(str(path)) == 'app-secret'
    os.chmod(str(path), 0o644)
    with pytest.raises(InvalidCredentials):
        read_credential_file(str(path))


def test_build_config_precedence():
    environ = {'NC_BASE_URL': 'http://env.test', 'NC_USERNAME': 'env-user'}
    config = build_config({'base_url': 'http://flag.test', 'username': None,
                           'concurrency': 16}, environ)
    assert config.base_url == 'http://flag.test'
    assert config.username == 'env-user'
    assert config.concurrency == 4
    with pytest.raises(InvalidCredentials):
        resolve_app_password(config, environ)
    assert resolve_app_password(config, dict(environ, NC_APP_PASSWORD='pw')) == 'pw'
