"""
Evidence manifest: one canonical JSON line per entry, written incrementally

    {"kind":"header", ...}    tool, account fingerprint, start time
    {"kind":"record", ...}    one per preserved object, in retrieval order
    {"kind":"footer", ...}    end time, counts, request-ledger digest

The manifest digest is the SHA-256 of exactly these bytes.
"""
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from typing import List, Optional

from ncforensic import __version__
from ncforensic.errors import InputError, ManifestCorrupt, ManifestMissing
from ncforensic.utils import canonical_line, sha256_bytes

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.jsonl'
LEDGER_NAME = 'ledger.jsonl'

CATEGORIES = ('files', 'trash', 'versions', 'metadata')

HEADER_KEYS = ('kind', 'tool_version', 'credentials_fingerprint', 'account', 'started_at')
RECORD_KEYS = ('kind', 'source_url', 'category', 'retrieved_at', 'sha256', 'byte_length',
               'bundle_path', 'server_etag', 'server_mtime', 'error', 'extra')
FOOTER_KEYS = ('kind', 'finished_at', 'record_count', 'failed_count',
               'request_ledger_digest')


@dataclass
class EvidenceRecord:
    source_url: str
    category: str
    retrieved_at: str
    sha256: Optional[str]
    byte_length: int
    bundle_path: Optional[str]
    server_etag: Optional[str] = None
    server_mtime: Optional[int] = None
    error: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise InputError('unknown evidence category {}'.format(self.category))

    @property
    def failed(self):
        return self.error is not None

    def to_dict(self):
        data = dict((k, getattr(self, k)) for k in RECORD_KEYS if k != 'kind')
        data['kind'] = 'record'
        data['extra'] = dict(sorted(self.extra.items()))
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(**dict((k, data.get(k)) for k in RECORD_KEYS if k not in ('kind', 'extra')),
                   extra=dict(data.get('extra') or {}))

    def line(self):
        return canonical_line(self.to_dict(), RECORD_KEYS)


@dataclass
class EvidenceManifest:
    tool_version: str
    credentials_fingerprint: str
    account: str
    started_at: str
    finished_at: Optional[str] = None
    records: List[EvidenceRecord] = field(default_factory=list)
    request_ledger_digest: Optional[str] = None

    @property
    def complete(self):
        return self.finished_at is not None

    @property
    def failures(self):
        return [r for r in self.records if r.failed]

    def by_category(self, category):
        return [r for r in self.records if r.category == category]

    def header_line(self):
        return canonical_line({'kind': 'header', 'tool_version': self.tool_version,
                               'credentials_fingerprint': self.credentials_fingerprint,
                               'account': self.account, 'started_at': self.started_at},
                              HEADER_KEYS)

    def footer_line(self):
        return canonical_line({'kind': 'footer', 'finished_at': self.finished_at,
                               'record_count': len(self.records),
                               'failed_count': len(self.failures),
                               'request_ledger_digest': self.request_ledger_digest},
                              FOOTER_KEYS)

    def serialize(self):
        lines = [self.header_line()] + [r.line() for r in self.records]
        if self.complete:
            lines.append(self.footer_line())
        return ''.join(lines).encode('utf-8')

    def digest(self):
        return sha256_bytes(self.serialize())

    @classmethod
    def load(cls, path, require_footer=True):
        """
        Inputs:
        - path: manifest file, or a bundle directory containing one
        - require_footer: False accepts the manifest of an interrupted run
        """
        if os.path.isdir(path):
            path = os.path.join(path, MANIFEST_NAME)
        if not os.path.isfile(path):
            raise ManifestMissing('no manifest at {}'.format(path))
        with open(path, 'r', encoding='utf-8') as f:
            lines = [line for line in f.read().split('\n') if line]
        try:
            entries = [json.loads(line) for line in lines]
        except ValueError as e:
            raise ManifestCorrupt('{} is not line-delimited JSON: {}'.format(path, e))
        if not entries or entries[0].get('kind') != 'header':
            raise ManifestCorrupt('{} does not start with a header'.format(path))
        header = entries[0]
        manifest = cls(tool_version=header.get('tool_version'),
                       credentials_fingerprint=header.get('credentials_fingerprint'),
                       account=header.get('account'), started_at=header.get('started_at'))
        seen = set()
        for position, entry in enumerate(entries[1:], start=1):
            kind = entry.get('kind')
            if kind == 'record':
                try:
                    record = EvidenceRecord.from_dict(entry)
                except (TypeError, InputError) as e:
                    raise ManifestCorrupt('bad record on line {}: {}'.format(position + 1, e))
                if record.bundle_path is not None:
                    if record.bundle_path in seen:
                        raise ManifestCorrupt('duplicate bundle_path {}'.format(record.bundle_path))
                    seen.add(record.bundle_path)
                manifest.records.append(record)
            elif kind == 'footer' and position == len(entries) - 1:
                manifest.finished_at = entry.get('finished_at')
                manifest.request_ledger_digest = entry.get('request_ledger_digest')
                if entry.get('record_count') != len(manifest.records):
                    raise ManifestCorrupt('footer counts {} records, found {}'.format(
                        entry.get('record_count'), len(manifest.records)))
            else:
                raise ManifestCorrupt('unexpected {!r} entry on line {}'.format(kind, position + 1))
        if require_footer and not manifest.complete:
            raise ManifestCorrupt('{} has no footer (interrupted acquisition?)'.format(path))
        return manifest


class ManifestWriter(object):
    """Appends manifest lines and flushes each one to disk."""

    def __init__(self, path, manifest):
        self.path = path
        self.manifest = manifest
        self._lock = threading.Lock()
        self._f = open(path, 'w', encoding='utf-8', newline='\n')
        self._write(manifest.header_line())
        for record in manifest.records:
            self._write(record.line())

    def _write(self, line):
        self._f.write(line)
        self._f.flush()
        os.fsync(self._f.fileno())

    def append(self, record):
        with self._lock:
            self.manifest.records.append(record)
            self._write(record.line())
        return record

    def close(self, finished_at, ledger_digest):
        with self._lock:
            self.manifest.finished_at = finished_at
            self.manifest.request_ledger_digest = ledger_digest
            self._write(self.manifest.footer_line())
            self._f.close()
        return self.manifest

    def abort(self):
        """Close without a footer; the manifest then reads as interrupted."""
        with self._lock:
            self._f.close()
        return self.manifest


def new_manifest(credentials, started_at):
    return EvidenceManifest(tool_version=__version__,
                            credentials_fingerprint=credentials.fingerprint,
                            account=credentials.account_id, started_at=started_at)
