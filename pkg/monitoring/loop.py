"""
Live monitoring: snapshot every `interval` seconds, diff against the previous
snapshot, append events to an append-only log and optionally re-acquire what
changed. Layout under the output directory:

    monitor/events.jsonl           snapshot, event, acquisition and error lines
    monitor/ledger.jsonl           every request sent while monitoring
    monitor/cycle-NNNN/            sub-bundle per re-acquisition (own manifest)
"""
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from typing import List

from acquisition.collect import EvidenceBundle, acquire_paths, acquire_trash
from acquisition.manifest import LEDGER_NAME, MANIFEST_NAME
from monitoring.diff import ChangeEvent, diff
from monitoring.snapshot import take_snapshot
from ncforensic.errors import ForensicError, InputError, OutDirNotEmpty
from ncforensic.utils import canonical_line, format_instant, sha256_file, utcnow

logger = logging.getLogger(__name__)

MIN_INTERVAL = 1
MAX_INTERVAL = 86400
DEFAULT_INTERVAL = 300

MONITOR_DIR = 'monitor'
EVENTS_NAME = 'events.jsonl'


class MonitorPolicy(object):
    """Observe only. Subclasses return the re-acquisitions a cycle triggers."""

    def plan(self, events):
        """
        Outputs:
        - (paths, trash): relative file paths to re-download, and whether the
          trash should be re-acquired
        """
        return [], False


class ReacquirePolicy(MonitorPolicy):

    def __init__(self, on_created=True, on_modified=True, on_trashed=True):
        self.on_created = on_created
        self.on_modified = on_modified
        self.on_trashed = on_trashed

    def plan(self, events):
        wanted = set()
        if self.on_created:
            wanted.add('created')
        if self.on_modified:
            wanted.add('modified')
        paths = [e.subject for e in events if e.kind in wanted
                 and not (e.after or {}).get('is_directory')]
        trash = self.on_trashed and any(e.kind == 'trashed' for e in events)
        return sorted(set(paths)), trash


@dataclass
class EventLog:
    path: str
    lines: List[dict] = field(default_factory=list)

    @property
    def events(self):
        return [ChangeEvent.from_dict(line['event']) for line in self.lines
                if line['kind'] == 'event']

    @property
    def snapshots(self):
        return [line for line in self.lines if line['kind'] == 'snapshot']

    @property
    def acquisitions(self):
        return [line for line in self.lines if line['kind'] == 'acquisition']

    def cycle_events(self, cycle):
        return [ChangeEvent.from_dict(line['event']) for line in self.lines
                if line['kind'] == 'event' and line['cycle'] == cycle]

    @classmethod
    def load(cls, path):
        if os.path.isdir(path):
            path = os.path.join(path, MONITOR_DIR, EVENTS_NAME)
        with open(path, 'r', encoding='utf-8') as f:
            lines = [json.loads(line) for line in f if line.strip()]
        return cls(path=path, lines=lines)


class EventWriter(object):
    """Append-only; lines of one cycle are flushed and synced together."""

    def __init__(self, path):
        self.log = EventLog(path=path)
        self._pending = []
        self._f = open(path, 'a', encoding='utf-8', newline='\n')

    def add(self, kind, cycle, **fields):
        line = {'kind': kind, 'cycle': cycle}
        line.update(sorted(fields.items()))
        self._pending.append(line)
        self.log.lines.append(line)

    def flush(self):
        for line in self._pending:
            self._f.write(canonical_line(line))
        self._f.flush()
        os.fsync(self._f.fileno())
        self._pending = []

    def close(self):
        self.flush()
        self._f.close()


def _reacquire(clients, out_dir, cycle, paths, trash):
    relative = '{}/cycle-{:04d}'.format(MONITOR_DIR, cycle)
    cycle_dir = os.path.join(out_dir, MONITOR_DIR, 'cycle-{:04d}'.format(cycle))
    bundle = EvidenceBundle(cycle_dir, clients.webdav, own_ledger=False)
    with bundle:
        records = []
        if paths:
            records.extend(acquire_paths(clients.webdav, paths, cycle_dir, bundle=bundle))
        if trash:
            try:
                records.extend(acquire_trash(clients.webdav, cycle_dir, bundle=bundle))
            except ForensicError as e:
                records.append(bundle.commit_error('trash', clients.webdav.trash_url(), e))
    return {'manifest': relative + '/' + MANIFEST_NAME,
            'manifest_digest': sha256_file(os.path.join(cycle_dir, MANIFEST_NAME)),
            'records': [r.to_dict() for r in records]}


def run_monitor(clients, out_dir, interval=DEFAULT_INTERVAL, policy=None, max_cycles=None,
                stop_event=None, on_cycle=None, root_path=''):
    """
    Inputs:
    - clients: AttrDict from acquisition.builders.build_clients
    - out_dir: bundle directory; monitoring output goes under monitor/
    - interval: seconds between snapshots, within [1, 86400]
    - policy: MonitorPolicy deciding re-acquisition (default: observe only)
    - max_cycles: stop after this many snapshots (None runs until stop_event)
    - on_cycle: callable(cycle) run before each snapshot
    Outputs:
    - EventLog of everything appended during this run
    """
    if not MIN_INTERVAL <= interval <= MAX_INTERVAL:
        raise InputError('interval must be within [{}, {}] seconds, got {}'.format(
            MIN_INTERVAL, MAX_INTERVAL, interval))
    if max_cycles is not None and max_cycles < 1:
        raise InputError('max_cycles must be >= 1')
    policy = policy or MonitorPolicy()
    stop_event = stop_event or threading.Event()
    monitor_dir = os.path.join(out_dir, MONITOR_DIR)
    if os.path.isdir(monitor_dir) and os.listdir(monitor_dir):
        raise OutDirNotEmpty('{} already holds a monitoring run'.format(monitor_dir))
    os.makedirs(monitor_dir, exist_ok=True)

    ledger = clients.transport.ledger
    ledger.attach(os.path.join(monitor_dir, LEDGER_NAME))
    writer = EventWriter(os.path.join(monitor_dir, EVENTS_NAME))
    reference = None
    cycle = 0
    logger.info('Monitoring {!r} every {}s into {}'.format(root_path, interval, monitor_dir))
    try:
        while not stop_event.is_set():
            cycle += 1
            try:
                if on_cycle is not None:
                    on_cycle(cycle)
                snapshot = take_snapshot(clients, root_path, previous=reference)
                writer.add('snapshot', cycle, captured_at=format_instant(snapshot.captured_at),
                           entries=len(snapshot.entries),
                           partial=sorted(snapshot.partial_domains))
                events = [] if reference is None else diff(reference, snapshot)
                # logged events are never diffed again
                reference = snapshot.carry_forward(reference)
                for event in events:
                    writer.add('event', cycle, observed_at=event.observed_at,
                               event=event.to_dict())
                if events:
                    logger.info('Cycle {}: {}'.format(
                        cycle, ', '.join('{} {}'.format(e.kind, e.subject) for e in events)))
            except ForensicError as e:
                logger.error('Cycle {} failed: {}'.format(cycle, e))
                writer.add('error', cycle, observed_at=format_instant(utcnow()),
                           stage='snapshot', message=str(e))
                events = []
            try:
                paths, trash = policy.plan(events) if events else ([], False)
                if paths or trash:
                    acquisition = _reacquire(clients, out_dir, cycle, paths, trash)
                    writer.add('acquisition', cycle,
                               observed_at=format_instant(utcnow()), **acquisition)
            except ForensicError as e:
                logger.error('Cycle {} re-acquisition failed: {}'.format(cycle, e))
                writer.add('error', cycle, observed_at=format_instant(utcnow()),
                           stage='reacquire', message=str(e))
            finally:
                writer.flush()
            if max_cycles is not None and cycle >= max_cycles:
                break
            stop_event.wait(interval)
    finally:
        writer.close()
        ledger.detach()
        logger.info('Monitoring stopped after {} cycles'.format(cycle))
    return writer.log
