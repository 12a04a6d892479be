"""
Preservation & collection. Everything lands in one self-contained bundle:

    <out_dir>/files/<relative path>              mirror of the walked tree
    <out_dir>/trash/<trash name>[/<child>]       trashed items, ".d<ts>" kept
    <out_dir>/versions/<file id>/<timestamp>     prior versions
    <out_dir>/metadata/                          raw PROPFIND / OCS bodies,
                                                 trash sidecars under trash/
    <out_dir>/manifest.jsonl                     see acquisition.manifest
    <out_dir>/ledger.jsonl                       every request sent

Only GET and PROPFIND are issued; the acquisition method policy refuses
anything else before it reaches the wire.
"""
import json
import logging
import os
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional
from urllib.parse import urlsplit

from tqdm import tqdm

from acquisition.manifest import (
    LEDGER_NAME, MANIFEST_NAME, EvidenceManifest, EvidenceRecord, ManifestWriter, new_manifest)
from ncforensic.errors import Forbidden, ForensicError, InputError, OutDirNotEmpty
from ncforensic.utils import format_instant, sha256_bytes, sha256_file, timeit, utcnow
from ncforensic.webdav import MAX_WALK_WORKERS

logger = logging.getLogger(__name__)

OCS_MARKER = '/ocs/'


def bundle_path(*parts):
    """
    Join server-derived names into a bundle-relative path, refusing anything
    that could escape the bundle.
    """
    segments = []
    for part in parts:
        for segment in str(part).split('/'):
            if not segment:
                continue
            if segment in ('.', '..') or '\\' in segment or '\x00' in segment:
                raise InputError('unsafe path component {!r}'.format(segment))
            segments.append(segment)
    if not segments:
        raise InputError('empty bundle path')
    return '/'.join(segments)


@dataclass
class FetchJob:
    category: str
    href: str
    bundle_path: str
    server_etag: Optional[str] = None
    server_mtime: Optional[int] = None
    extra: dict = field(default_factory=dict)


class EvidenceBundle(object):
    """
    An open evidence bundle. Use as a context manager; closing writes the
    manifest footer with the request-ledger digest.
    """

    def __init__(self, out_dir, webdav, resume=False, concurrency=MAX_WALK_WORKERS,
                 own_ledger=True, capture_metadata=True, show_progress=False):
        self.out_dir = out_dir
        self.webdav = webdav
        self.transport = webdav.transport
        self.resume = resume
        self.concurrency = max(1, min(concurrency, MAX_WALK_WORKERS))
        self.own_ledger = own_ledger
        self.capture_metadata = capture_metadata
        self.show_progress = show_progress
        self.writer = None
        self._resumed = {}
        self._metadata_counts = Counter()
        self._pending_metadata = []
        self._lock = threading.Lock()

    @property
    def manifest(self):
        return self.writer.manifest

    def path(self, relative):
        return os.path.join(self.out_dir, *relative.split('/'))

    def open(self):
        if os.path.isdir(self.out_dir) and os.listdir(self.out_dir) and not self.resume:
            raise OutDirNotEmpty('{} is not empty'.format(self.out_dir))
        kept = self._resumable_records() if self.resume else []
        os.makedirs(self.out_dir, exist_ok=True)
        if self.own_ledger:
            ledger_path = os.path.join(self.out_dir, LEDGER_NAME)
            if os.path.exists(ledger_path):
                n = 1
                while os.path.exists(os.path.join(self.out_dir, 'ledger.previous-{}.jsonl'.format(n))):
                    n += 1
                os.replace(ledger_path, os.path.join(self.out_dir, 'ledger.previous-{}.jsonl'.format(n)))
            self.transport.ledger.attach(ledger_path)
        manifest = new_manifest(self.transport.credentials, format_instant(utcnow()))
        manifest.records.extend(kept)
        self.writer = ManifestWriter(os.path.join(self.out_dir, MANIFEST_NAME), manifest)
        self._resumed = dict((r.bundle_path, r) for r in kept)
        if self.capture_metadata:
            self.transport.add_hook(self._capture)
        logger.info('Evidence bundle opened at {} ({} records resumed)'.format(
            self.out_dir, len(kept)))
        return self

    def close(self):
        self.transport.remove_hook(self._capture)
        self.flush_metadata()
        manifest = self.writer.close(format_instant(utcnow()), self.transport.ledger.digest())
        if self.own_ledger:
            self.transport.ledger.detach()
        logger.info('Manifest closed: {} records, {} failed'.format(
            len(manifest.records), len(manifest.failures)))
        return manifest

    def abort(self, error):
        """
        Record why the acquisition stopped and leave the manifest without a
        footer, so it loads only with require_footer=False (resume).
        """
        self.transport.remove_hook(self._capture)
        self.flush_metadata()
        self.commit_error('metadata', self.transport.base_url,
                          'acquisition aborted: {!r}'.format(error), {'aborted': True})
        manifest = self.writer.abort()
        if self.own_ledger:
            self.transport.ledger.detach()
        logger.error('Manifest left open after abort: {} records'.format(len(manifest.records)))
        return manifest

    def __enter__(self):
        return self.open()

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort(exc)
        return False

    def _resumable_records(self):
        """Earlier records whose stored bytes still match their digest."""
        if not os.path.isfile(os.path.join(self.out_dir, MANIFEST_NAME)):
            return []
        previous = EvidenceManifest.load(self.out_dir, require_footer=False)
        kept = []
        for record in previous.records:
            if record.failed or record.category == 'metadata' or not record.sha256:
                continue
            stored = self.path(record.bundle_path)
            if os.path.isfile(stored) and sha256_file(stored) == record.sha256:
                kept.append(record)
            else:
                logger.warning('Re-acquiring {}: stored copy missing or altered'.format(
                    record.bundle_path))
        return kept

    # -- records -------------------------------------------------------------------

    def commit(self, **fields):
        """Stamp and append one record; stamps are taken in append order."""
        with self._lock:
            record = EvidenceRecord(retrieved_at=format_instant(utcnow()), **fields)
            return self.writer.append(record)

    def commit_error(self, category, source_url, error, extra=None):
        logger.error('{} acquisition of {} failed: {}'.format(category, source_url, error))
        return self.commit(source_url=source_url, category=category, sha256=None,
                           byte_length=0, bundle_path=None, error=str(error),
                           extra=extra or {})

    def _store_metadata(self, relative, payload, source_url, extra=None):
        target = self.path(relative)
        os.makedirs(os.path.dirname(target), exist_ok=True)
        with open(target, 'wb') as f:
            f.write(payload)
        return dict(source_url=source_url, category='metadata',
                    sha256=sha256_bytes(payload), byte_length=len(payload),
                    bundle_path=relative, extra=extra or {})

    def write_metadata(self, relative, payload, source_url, extra=None):
        return self.commit(**self._store_metadata(relative, payload, source_url, extra))

    def flush_metadata(self):
        """
        Commit captured responses sorted by (method, url, occurrence); the
        walk issues its listings from worker threads in no fixed order.
        """
        with self._lock:
            pending, self._pending_metadata = self._pending_metadata, []
        for _, fields in sorted(pending, key=lambda item: item[0]):
            self.commit(**fields)
        return len(pending)

    def _capture(self, record, response, streamed):
        if streamed or response.status == 304:
            return
        if record.method == 'PROPFIND':
            extension = 'xml'
        elif record.method == 'GET' and OCS_MARKER in urlsplit(record.url).path:
            extension = 'json'
        else:
            return
        with self._lock:
            key = (record.method, record.url)
            self._metadata_counts[key] += 1
            n = self._metadata_counts[key]
        relative = 'metadata/{}-{}-{}.{}'.format(
            record.method.lower(), sha256_bytes(record.url.encode('utf-8'))[:12], n, extension)
        fields = self._store_metadata(relative, response.body, record.url,
                                      {'method': record.method, 'status': response.status})
        with self._lock:
            self._pending_metadata.append(((record.method, record.url, n), fields))

    # -- content -------------------------------------------------------------------

    def _fetch(self, job):
        source_url = self.transport.url_for_href(job.href)
        fields = dict(source_url=source_url, category=job.category,
                      server_etag=job.server_etag, server_mtime=job.server_mtime,
                      extra=job.extra)
        target = self.path(job.bundle_path)
        partial = target + '.part'
        try:
            os.makedirs(os.path.dirname(target), exist_ok=True)
            with open(partial, 'wb') as f:
                length, digest = self.webdav.download(job.href, f)
            os.replace(partial, target)
        except (ForensicError, OSError) as e:
            if os.path.exists(partial):
                os.remove(partial)
            logger.error('Download of {} failed: {}'.format(source_url, e))
            fields.update(sha256=None, byte_length=0, bundle_path=None, error=str(e))
            return fields
        fields.update(sha256=digest, byte_length=length, bundle_path=job.bundle_path)
        return fields

    def fetch_all(self, jobs, desc='download'):
        """
        Download `jobs` with at most `concurrency` in flight. Records are
        appended in job order, whatever order the downloads finish in.
        """
        self.flush_metadata()
        records = []
        if not jobs:
            return records
        with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
            futures = [None if job.bundle_path in self._resumed else pool.submit(self._fetch, job)
                       for job in jobs]
            for job, future in tqdm(list(zip(jobs, futures)), desc=desc,
                                    disable=not self.show_progress):
                if future is None:
                    records.append(self._resumed[job.bundle_path])
                    continue
                records.append(self.commit(**future.result()))
        return records


@contextmanager
def _opened(bundle, out_dir, webdav):
    """Use `bundle` as given, or own a fresh one for the duration."""
    if bundle is not None:
        yield bundle
        return
    with EvidenceBundle(out_dir, webdav) as owned:
        yield owned


def _collect_account_metadata(clients, bundle):
    """Raw OCS responses are preserved by the bundle's capture hook."""
    calls = [('current user', clients.ocs.get_current_user),
             ('capabilities', clients.ocs.get_capabilities),
             ('users', clients.ocs.list_users),
             ('shares', clients.ocs.list_shares),
             ('incoming shares', lambda: clients.ocs.list_shares(shared_with_me=True)),
             ('sessions', clients.sessions.list_sessions)]
    for label, call in calls:
        try:
            call()
        except Forbidden as e:
            logger.info('Skipping {}: {}'.format(label, e))
        except ForensicError as e:
            bundle.commit_error('metadata', label, e, {'listing': label})


def acquire_trash(webdav, out_dir, bundle=None):
    """
    Download every trashed item under its in-trash name and write one sidecar
    per top-level entry with its original location and deletion time.
    Outputs:
    - list of EvidenceRecord for the trashed content
    """
    with _opened(bundle, out_dir, webdav) as bundle:
        jobs = []
        for entry in webdav.list_trash():
            sidecar = {'entry': entry.to_dict(), 'children': []}
            top = bundle_path('trash', entry.trash_name)
            context = {'trash_name': entry.trash_name,
                       'original_location': entry.original_location,
                       'deletion_time': entry.deletion_time, 'file_id': entry.file_id}
            if entry.is_directory:
                os.makedirs(bundle.path(top), exist_ok=True)
                try:
                    for child in webdav.walk_trash(entry):
                        sidecar['children'].append(child.to_dict())
                        relative = bundle_path('trash', child.trash_name)
                        if child.is_directory:
                            os.makedirs(bundle.path(relative), exist_ok=True)
                            continue
                        extra = dict(context, trash_name=child.trash_name,
                                     original_location=child.original_location,
                                     file_id=child.file_id)
                        jobs.append(FetchJob('trash', child.href, relative, extra=extra))
                except ForensicError as e:
                    bundle.commit_error('trash', webdav.transport.url_for_href(entry.href), e,
                                        context)
            else:
                jobs.append(FetchJob('trash', entry.href, top, extra=context))
            payload = json.dumps(sidecar, sort_keys=True, indent=2, ensure_ascii=False)
            bundle.write_metadata(bundle_path('metadata/trash', entry.trash_name + '.json'),
                                  payload.encode('utf-8'),
                                  webdav.transport.url_for_href(entry.href),
                                  {'sidecar': 'trash'})
        return bundle.fetch_all(jobs, desc='trash')


def acquire_versions(webdav, file_id, out_dir, bundle=None):
    with _opened(bundle, out_dir, webdav) as bundle:
        jobs = []
        for version in webdav.list_versions(file_id):
            mtime = version.last_modified
            jobs.append(FetchJob(
                'versions', version.href,
                bundle_path('versions', str(file_id), str(version.version_timestamp)),
                server_etag=version.etag,
                server_mtime=int(mtime.timestamp()) if mtime is not None else None,
                extra={'file_id': file_id, 'version_timestamp': version.version_timestamp}))
        return bundle.fetch_all(jobs, desc='versions {}'.format(file_id))


def acquire_paths(webdav, relative_paths, out_dir, bundle=None, prefix='files'):
    """Targeted re-acquisition of individual files by relative path."""
    with _opened(bundle, out_dir, webdav) as bundle:
        jobs = []
        for relative in relative_paths:
            try:
                entry = webdav.propfind(relative, 0)[0]
                if entry.is_directory:
                    os.makedirs(bundle.path(bundle_path(prefix, relative)), exist_ok=True)
                    continue
                jobs.append(FetchJob('files', entry.href, bundle_path(prefix, entry.relative_path),
                                     entry.etag, entry.mtime,
                                     {'file_id': entry.file_id,
                                      'relative_path': entry.relative_path}))
            except ForensicError as e:
                bundle.commit_error('files', webdav.files_url(relative), e,
                                    {'relative_path': relative})
        return bundle.fetch_all(jobs, desc='re-acquire')


def dump(clients, root_path, include_trash, include_versions, out_dir,
         include_activity=False, concurrency=MAX_WALK_WORKERS, resume=False,
         show_progress=False):
    """
    Inputs:
    - clients: AttrDict from acquisition.builders.build_clients
    - root_path: subtree to acquire, relative to the user's files root
    - include_trash / include_versions / include_activity: optional domains
    - out_dir: empty or absent directory (or a bundle to resume)
    Outputs:
    - the closed EvidenceManifest; failed objects appear as error records
    """
    webdav = clients.webdav
    bundle = EvidenceBundle(out_dir, webdav, resume=resume, concurrency=concurrency,
                            show_progress=show_progress)
    with timeit('dump of {!r}'.format(root_path)), bundle:
        _collect_account_metadata(clients, bundle)
        walk_errors = []
        files = []
        jobs = []
        for entry in webdav.walk(root_path, errors=walk_errors):
            try:
                relative = bundle_path('files', entry.relative_path)
            except InputError as e:
                bundle.commit_error('files', webdav.transport.url_for_href(entry.href), e)
                continue
            if entry.is_directory:
                os.makedirs(bundle.path(relative), exist_ok=True)
                continue
            files.append(entry)
            jobs.append(FetchJob('files', entry.href, relative, entry.etag, entry.mtime,
                                 {'file_id': entry.file_id,
                                  'relative_path': entry.relative_path,
                                  'content_type': entry.content_type}))
        for failure in walk_errors:
            bundle.commit_error('files', webdav.files_url(failure.path), failure.error,
                                {'relative_path': failure.path})
        bundle.fetch_all(jobs, desc='files')

        if include_activity:
            for entry in files:
                try:
                    clients.ocs.get_file_activity(entry.file_id)
                except ForensicError as e:
                    bundle.commit_error('metadata', 'activity {}'.format(entry.file_id), e,
                                        {'file_id': entry.file_id})
        if include_trash:
            try:
                acquire_trash(webdav, out_dir, bundle=bundle)
            except ForensicError as e:
                bundle.commit_error('trash', webdav.trash_url(), e)
        if include_versions:
            for entry in files:
                try:
                    acquire_versions(webdav, entry.file_id, out_dir, bundle=bundle)
                except ForensicError as e:
                    bundle.commit_error('versions', webdav.versions_url(entry.file_id), e,
                                        {'file_id': entry.file_id})
    return bundle.manifest
