"""
Snapshot comparison. Events are derived from two snapshots only, so anything
that appears and disappears between them is invisible apart from what the
trash still holds.
"""
import logging
import math
import posixpath
from dataclasses import dataclass
from typing import Optional

from ncforensic.errors import InvalidOrder
from ncforensic.utils import format_instant

logger = logging.getLogger(__name__)

KINDS = ('created', 'modified', 'deleted', 'trashed', 'trash_emptied',
         'new_session', 'session_gone', 'share_added', 'share_removed')


@dataclass(frozen=True)
class ChangeEvent:
    kind: str
    subject: str
    observed_at: str
    before: Optional[dict] = None
    after: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError('unknown event kind {}'.format(self.kind))

    @property
    def sort_key(self):
        return KINDS.index(self.kind), self.subject

    def identity(self):
        """Everything but observed_at."""
        return self.kind, self.subject, _freeze(self.before), _freeze(self.after)

    def to_dict(self):
        return {'kind': self.kind, 'subject': self.subject, 'observed_at': self.observed_at,
                'before': self.before, 'after': self.after}

    @classmethod
    def from_dict(cls, data):
        return cls(kind=data['kind'], subject=data['subject'],
                   observed_at=data['observed_at'], before=data.get('before'),
                   after=data.get('after'))


def _freeze(value):
    if value is None:
        return None
    return tuple(sorted(value.items()))


def _state(entry):
    return {'file_id': entry.file_id, 'etag': entry.etag, 'size': entry.size,
            'mtime': entry.last_modified, 'is_directory': entry.is_directory}


def _trash_matches(path, trash_ids, low, high):
    base = posixpath.basename(path)
    for trash_name, deletion_time in sorted(trash_ids):
        if trash_name == '{}.d{}'.format(base, deletion_time) and low <= deletion_time <= high:
            return trash_name, deletion_time
    return None


def diff(old, new):
    """
    Inputs:
    - old, new: Snapshot, old.captured_at < new.captured_at
    Outputs:
    - list of ChangeEvent sorted by kind then subject. Appearances are
      suppressed for domains `old` failed to list, disappearances for
      domains `new` failed to list. Vanished tree entries also wait for a
      snapshot with a trash listing.
    """
    if old.captured_at >= new.captured_at:
        if old.captured_at == new.captured_at and old.same_state(new):
            return []
        raise InvalidOrder('snapshot taken at {} is not older than {}'.format(
            format_instant(old.captured_at), format_instant(new.captured_at)))
    observed_at = format_instant(new.captured_at)
    events = []

    def emit(kind, subject, before=None, after=None):
        events.append(ChangeEvent(kind, subject, observed_at, before, after))

    files_old_ok = 'files' not in old.partial_domains
    files_new_ok = 'files' not in new.partial_domains
    trash_old_ok = 'trash' not in old.partial_domains
    trash_new_ok = 'trash' not in new.partial_domains

    if files_old_ok:
        for path in sorted(set(new.entries) - set(old.entries)):
            emit('created', path, after=_state(new.entries[path]))
    for path in sorted(set(old.entries) & set(new.entries)):
        before, after = old.entries[path], new.entries[path]
        if before.is_directory or after.is_directory:
            continue
        if before.etag != after.etag:
            emit('modified', path, before=_state(before), after=_state(after))

    low = math.floor(old.window_start.timestamp())
    high = math.ceil(new.captured_at.timestamp())
    fresh_trash = set(new.trash_ids) - set(old.trash_ids) if trash_old_ok else set(new.trash_ids)
    claimed = set()
    trashed_roots = {}
    # without a trash listing a disappearance cannot be classified yet
    if files_new_ok and trash_new_ok:
        vanished = sorted(set(old.entries) - set(new.entries))
        for path in vanished:
            parent = posixpath.dirname(path)
            inherited = None
            while parent:
                if parent in trashed_roots:
                    inherited = trashed_roots[parent]
                    break
                parent = posixpath.dirname(parent)
            match = inherited
            if match is None:
                match = _trash_matches(path, fresh_trash, low, high)
                if match is not None:
                    trashed_roots[path] = match
                    claimed.add(match)
            before = _state(old.entries[path])
            if match is None:
                emit('deleted', path, before=before)
            else:
                emit('trashed', path, before=before,
                     after={'trash_name': match[0], 'deletion_time': match[1]})

    if trash_old_ok and trash_new_ok:
        for trash_name, deletion_time in sorted(fresh_trash - claimed):
            emit('trashed', trash_name,
                 after={'trash_name': trash_name, 'deletion_time': deletion_time})
    if trash_new_ok:
        for trash_name, deletion_time in sorted(set(old.trash_ids) - set(new.trash_ids)):
            emit('trash_emptied', trash_name,
                 before={'trash_name': trash_name, 'deletion_time': deletion_time})

    _id_events(emit, old, new, 'sessions', 'session_ids', 'new_session', 'session_gone')
    _id_events(emit, old, new, 'shares', 'share_ids', 'share_added', 'share_removed')

    events.sort(key=lambda e: e.sort_key)
    return events


def _id_events(emit, old, new, domain, attribute, appeared, vanished):
    before, after = getattr(old, attribute), getattr(new, attribute)
    if domain not in old.partial_domains:
        for item in sorted(set(after) - set(before)):
            emit(appeared, str(item))
    if domain not in new.partial_domains:
        for item in sorted(set(before) - set(after)):
            emit(vanished, str(item))


def replay(snapshots):
    """Concatenated diffs over consecutive snapshots."""
    events = []
    for old, new in zip(snapshots, snapshots[1:]):
        events.extend(diff(old, new))
    return events
