import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import timedelta
from typing import Dict, FrozenSet, Optional, Tuple

from ncforensic.errors import ForensicError
from ncforensic.utils import format_instant, parse_instant, utcnow

logger = logging.getLogger(__name__)

DOMAINS = ('files', 'trash', 'sessions', 'shares')


@dataclass(frozen=True)
class EntryState:
    file_id: int
    etag: str
    last_modified: Optional[int]
    size: int
    is_directory: bool = False

    def to_dict(self):
        return {'file_id': self.file_id, 'etag': self.etag, 'mtime': self.last_modified,
                'size': self.size, 'is_directory': self.is_directory}

    @classmethod
    def from_dict(cls, data):
        return cls(file_id=data['file_id'], etag=data['etag'], last_modified=data['mtime'],
                   size=data['size'], is_directory=data.get('is_directory', False))


@dataclass(frozen=True)
class Snapshot:
    captured_at: object  # aware UTC datetime
    entries: Dict[str, EntryState] = field(default_factory=dict)
    trash_ids: FrozenSet[Tuple[str, int]] = frozenset()
    session_ids: FrozenSet[int] = frozenset()
    share_ids: FrozenSet[int] = frozenset()
    partial_domains: FrozenSet[str] = frozenset()
    # earliest capture whose disappearances are still unclassified
    deferred_since: object = None

    @property
    def partial(self):
        return bool(self.partial_domains)

    @property
    def window_start(self):
        return self.deferred_since if self.deferred_since is not None else self.captured_at

    def same_state(self, other):
        return (self.entries == other.entries and self.trash_ids == other.trash_ids
                and self.session_ids == other.session_ids
                and self.share_ids == other.share_ids
                and self.partial_domains == other.partial_domains)

    def carry_forward(self, reference):
        """
        Fill the domains this snapshot failed to list from `reference`, so the
        next diff compares against the last known state of every domain.

        Without a trash listing a vanished entry cannot be told apart from a
        permanent deletion; such entries stay in the carried tree and are
        classified by the next diff that has one.
        """
        if reference is None or not self.partial_domains:
            return self
        values = {}
        still_partial = set()
        for domain, attribute in (('files', 'entries'), ('trash', 'trash_ids'),
                                  ('sessions', 'session_ids'), ('shares', 'share_ids')):
            if domain in self.partial_domains:
                values[attribute] = getattr(reference, attribute)
                if domain in reference.partial_domains:
                    still_partial.add(domain)
        if 'trash' in self.partial_domains and 'files' not in self.partial_domains:
            vanished = dict((path, state) for path, state in reference.entries.items()
                            if path not in self.entries)
            if vanished:
                merged = dict(self.entries)
                merged.update(vanished)
                values['entries'] = merged
                values['deferred_since'] = reference.window_start
        return replace(self, partial_domains=frozenset(still_partial), **values)

    def to_dict(self):
        return {'captured_at': format_instant(self.captured_at),
                'entries': dict((k, v.to_dict()) for k, v in sorted(self.entries.items())),
                'trash_ids': sorted([name, ts] for name, ts in self.trash_ids),
                'session_ids': sorted(self.session_ids),
                'share_ids': sorted(self.share_ids),
                'partial_domains': sorted(self.partial_domains),
                'deferred_since': (format_instant(self.deferred_since)
                                   if self.deferred_since is not None else None)}

    @classmethod
    def from_dict(cls, data):
        deferred = data.get('deferred_since')
        return cls(captured_at=parse_instant(data['captured_at']),
                   entries=dict((k, EntryState.from_dict(v))
                                for k, v in data['entries'].items()),
                   trash_ids=frozenset((name, ts) for name, ts in data['trash_ids']),
                   session_ids=frozenset(data['session_ids']),
                   share_ids=frozenset(data['share_ids']),
                   partial_domains=frozenset(data['partial_domains']),
                   deferred_since=parse_instant(deferred) if deferred else None)


def _list_files(clients, root_path):
    errors = []
    entries = {}
    for entry in clients.webdav.walk(root_path, errors=errors):
        if entry.relative_path == root_path.strip('/'):
            continue
        entries[entry.relative_path] = EntryState(entry.file_id, entry.etag, entry.mtime,
                                                  entry.size, entry.is_directory)
    return entries, bool(errors)


def _list_trash(clients):
    return frozenset((e.trash_name, e.deletion_time) for e in clients.webdav.list_trash()), False


def _list_sessions(clients):
    return frozenset(s.token_id for s in clients.sessions.list_sessions()), False


def _list_shares(clients):
    return frozenset(s.share_id for s in clients.ocs.list_shares()), False


def take_snapshot(clients, root_path='', previous=None):
    """
    One walk, one trash listing, one session listing and one share listing,
    run concurrently. A failing sub-listing leaves its domain empty and
    flagged in partial_domains instead of failing the snapshot.
    """
    listings = {'files': lambda: _list_files(clients, root_path),
                'trash': lambda: _list_trash(clients),
                'sessions': lambda: _list_sessions(clients),
                'shares': lambda: _list_shares(clients)}
    values = {}
    partial = set()
    with ThreadPoolExecutor(max_workers=len(listings)) as pool:
        futures = dict((domain, pool.submit(call)) for domain, call in listings.items())
        for domain in DOMAINS:
            try:
                value, incomplete = futures[domain].result()
            except ForensicError as e:
                logger.warning('Snapshot {} listing failed: {}'.format(domain, e))
                value, incomplete = ({} if domain == 'files' else frozenset()), True
            values[domain] = value
            if incomplete:
                partial.add(domain)
    captured_at = utcnow()
    if previous is not None and captured_at <= previous.captured_at:
        captured_at = previous.captured_at + timedelta(milliseconds=1)
    snapshot = Snapshot(captured_at=captured_at, entries=values['files'],
                        trash_ids=values['trash'], session_ids=values['sessions'],
                        share_ids=values['shares'], partial_domains=frozenset(partial))
    logger.debug('Snapshot at {}: {} entries, {} trash, {} sessions, {} shares{}'.format(
        format_instant(captured_at), len(snapshot.entries), len(snapshot.trash_ids),
        len(snapshot.session_ids), len(snapshot.share_ids),
        ', partial: ' + ','.join(sorted(partial)) if partial else ''))
    return snapshot
