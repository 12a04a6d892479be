import os
import random
from collections import Counter
from datetime import timedelta

import pytest

from acquisition.manifest import EvidenceManifest
from mockserver.fixture import random_fixture
from mockserver.mutations import MutationScript, MutationStep, random_script
from monitoring.diff import ChangeEvent, diff, replay
from monitoring.loop import EventLog, MonitorPolicy, ReacquirePolicy, run_monitor
from monitoring.snapshot import EntryState, Snapshot, take_snapshot
from ncforensic.errors import InputError, InvalidOrder, OutDirNotEmpty
from ncforensic.utils import utcnow


def random_snapshot(rng):
    entries = {}
    for n in range(rng.randint(0, 30)):
        path = '/'.join('d{}'.format(rng.randint(0, 3)) for _ in range(rng.randint(0, 2)))
        path = (path + '/' if path else '') + 'f{}'.format(n)
        entries[path] = EntryState(n, 'etag{}'.format(rng.randint(0, 5)),
                                   rng.randint(0, 2 ** 31), rng.randint(0, 4096))
    return Snapshot(captured_at=utcnow(), entries=entries,
                    trash_ids=frozenset(('t{}.d{}'.format(i, i), i)
                                        for i in range(rng.randint(0, 4))),
                    session_ids=frozenset(rng.sample(range(50), rng.randint(0, 5))),
                    share_ids=frozenset(rng.sample(range(50), rng.randint(0, 5))))


def test_diff_of_snapshot_with_itself_is_empty():
    rng = random.Random(5)
    for _ in range(50):
        snapshot = random_snapshot(rng)
        assert diff(snapshot, snapshot) == []


def test_diff_requires_increasing_capture_time(clients):
    first = take_snapshot(clients)
    second = take_snapshot(clients, previous=first)
    assert second.captured_at > first.captured_at
    assert diff(first, second) == []
    with pytest.raises(InvalidOrder):
        diff(second, first)


def kinds(events):
    return [(e.kind, e.subject) for e in events]


def test_modified_file(clients, mock):
    before = take_snapshot(clients)
    mock.state.modify_file('admin', 'Docs/notes.txt', b'meeting moved\n')
    events = diff(before, take_snapshot(clients, previous=before))
    assert kinds(events) == [('modified', 'Docs/notes.txt')]
    assert events[0].before['etag'] != events[0].after['etag']
    assert events[0].before['file_id'] == events[0].after['file_id'] == 43


def test_created_file(clients, mock):
    before = take_snapshot(clients)
    mock.state.create_file('admin', 'Photos/new/beach.jpg', b'\xff\xd8')
    events = diff(before, take_snapshot(clients, previous=before))
    assert kinds(events) == [('created', 'Photos/new'), ('created', 'Photos/new/beach.jpg')]
    assert events[0].after['is_directory']


def test_trashed_file(clients, mock):
    before = take_snapshot(clients)
    trashed = mock.state.delete_to_trash('admin', 'Photos/holiday.jpg')
    events = diff(before, take_snapshot(clients, previous=before))
    assert kinds(events) == [('trashed', 'Photos/holiday.jpg')]
    assert events[0].after == {'trash_name': trashed.trash_name,
                               'deletion_time': trashed.deletion_time}
    assert events[0].before['file_id'] == 44


def test_trashed_directory(clients, mock):
    before = take_snapshot(clients)
    trashed = mock.state.delete_to_trash('admin', 'Docs')
    events = diff(before, take_snapshot(clients, previous=before))
    assert kinds(events) == [('trashed', 'Docs'), ('trashed', 'Docs/notes.txt'),
                             ('trashed', 'Docs/report.pdf')]
    assert set(e.after['trash_name'] for e in events) == {trashed.trash_name}


def test_deleted_without_trash(clients, mock):
    before = take_snapshot(clients)
    with mock.state.lock:
        del mock.state.accounts['admin'].files['Docs/notes.txt']
    events = diff(before, take_snapshot(clients, previous=before))
    assert kinds(events) == [('deleted', 'Docs/notes.txt')]


def test_trash_emptied(clients, mock):
    before = take_snapshot(clients)
    mock.state.empty_trash('admin')
    events = diff(before, take_snapshot(clients, previous=before))
    assert kinds(events) == [('trash_emptied', 'OldProject.d1728100000'),
                             ('trash_emptied', 'screenshot.jpg.d1728237675')]


def test_session_and_share_events(clients, mock):
    before = take_snapshot(clients)
    token = mock.state.add_token('admin', 'Thunderbird', 'tb-password')
    mock.state.remove_token('admin', 3)
    share = mock.state.add_share('admin', 'Photos/holiday.jpg', 3, token='AbCdEf')
    events = diff(before, take_snapshot(clients, previous=before))
    assert kinds(events) == [('new_session', str(token.token_id)), ('session_gone', '3'),
                             ('share_added', str(share.share_id))]


def test_failed_listing_suppresses_disappearance(clients, mock):
    before = take_snapshot(clients)
    mock.inject_fault('GET', r'/core/apptokens$', 401)
    mock.inject_fault('PROPFIND', r'/files/admin/Photos/?$', 500)
    after = take_snapshot(clients, previous=before)
    assert after.partial_domains == frozenset({'sessions', 'files'})
    assert after.session_ids == frozenset()
    assert 'Photos/holiday.jpg' not in after.entries
    assert diff(before, after) == []
    carried = after.carry_forward(before)
    assert carried.session_ids == before.session_ids
    assert carried.entries == before.entries
    assert not carried.partial


def test_failed_listing_suppresses_appearance(clients, mock):
    mock.inject_fault('GET', r'/core/apptokens$', 401)
    before = take_snapshot(clients)
    assert before.partial_domains == frozenset({'sessions'})
    after = take_snapshot(clients, previous=before)
    assert diff(before, after) == []


def test_failed_trash_listing_defers_disappearance(clients, mock):
    before = take_snapshot(clients)
    trashed = mock.state.delete_to_trash('admin', 'Photos/holiday.jpg')
    mock.inject_fault('PROPFIND', r'/trashbin/admin/trash/?$', 500)
    during = take_snapshot(clients, previous=before)
    assert during.partial_domains == frozenset({'trash'})
    assert diff(before, during) == []
    carried = during.carry_forward(before)
    assert 'Photos/holiday.jpg' in carried.entries
    assert carried.deferred_since == before.captured_at
    after = take_snapshot(clients, previous=carried)
    events = diff(carried, after)
    assert kinds(events) == [('trashed', 'Photos/holiday.jpg')]
    assert events[0].after['trash_name'] == trashed.trash_name


@pytest.mark.parametrize('seed', range(100))
def test_diffs_compose(start_mock, make_clients, seed):
    spec = random_fixture(seed)
    instance = start_mock(spec)
    clients = make_clients(instance.base_url, 'admin', 'app-password')
    script = random_script(seed, spec.file_paths('admin', directories=False), cycles=2)
    first = take_snapshot(clients)
    script.apply_cycle(instance.state, 1)
    second = take_snapshot(clients, previous=first)
    script.apply_cycle(instance.state, 2)
    third = take_snapshot(clients, previous=second)
    stepwise = replay([first, second, third])
    assert stepwise == diff(first, second) + diff(second, third)
    assert Counter(e.identity() for e in diff(first, third)) == \
        Counter(e.identity() for e in stepwise)


def test_event_round_trip():
    event = ChangeEvent('trashed', 'a.txt', '2024-10-06T18:01:15.000Z',
                        before={'file_id': 1}, after={'trash_name': 'a.txt.d1'})
    assert ChangeEvent.from_dict(event.to_dict()) == event
    with pytest.raises(ValueError):
        ChangeEvent('renamed', 'a.txt', '2024-10-06T18:01:15.000Z')


def test_snapshot_round_trip(clients):
    data = take_snapshot(clients).to_dict()
    restored = Snapshot.from_dict(data)
    assert restored.to_dict() == data
    assert restored.entries['Docs/report.pdf'].file_id == 42
    assert ('screenshot.jpg.d1728237675', 1728237675) in restored.trash_ids


def test_reacquire_policy():
    observed = '2024-10-06T18:01:15.000Z'
    events = [ChangeEvent('created', 'b.txt', observed, after={'is_directory': False}),
              ChangeEvent('created', 'dir', observed, after={'is_directory': True}),
              ChangeEvent('modified', 'a.txt', observed, after={'is_directory': False}),
              ChangeEvent('new_session', '9', observed)]
    assert ReacquirePolicy().plan(events) == (['a.txt', 'b.txt'], False)
    assert ReacquirePolicy(on_created=False).plan(events) == (['a.txt'], False)
    trashed = [ChangeEvent('trashed', 'c.txt', observed)]
    assert ReacquirePolicy().plan(trashed) == ([], True)


@pytest.mark.parametrize('interval', [0, 86401])
def test_interval_bounds(clients, tmp_path, interval):
    with pytest.raises(InputError):
        run_monitor(clients, str(tmp_path), interval=interval, max_cycles=1)


def test_quiescent_instance_logs_no_events(clients, tmp_path):
    log = run_monitor(clients, str(tmp_path), interval=1, max_cycles=3)
    assert len(log.snapshots) == 3
    assert log.events == []
    stamps = [line['captured_at'] for line in log.snapshots]
    assert stamps == sorted(stamps) and len(set(stamps)) == 3
    assert EventLog.load(str(tmp_path)).lines == log.lines


def test_monitor_run_detects_and_reacquires(clients, mock, tmp_path):
    script = MutationScript([
        MutationStep('create', path='Docs/new.txt', content='fresh', at_cycle=2),
        MutationStep('modify', path='Docs/notes.txt', content='meeting moved\n', at_cycle=3),
        MutationStep('delete-to-trash', path='Photos/holiday.jpg', at_cycle=4),
        MutationStep('add-token', name='Thunderbird', password='tb-password', at_cycle=5),
    ])
    out = str(tmp_path)
    log = run_monitor(clients, out, interval=1, policy=ReacquirePolicy(), max_cycles=6,
                      on_cycle=lambda cycle: script.apply_cycle(mock.state, cycle))
    assert script.pending == []
    assert [(e.kind, e.subject) for e in log.events] == [
        ('created', 'Docs/new.txt'), ('modified', 'Docs/notes.txt'),
        ('trashed', 'Photos/holiday.jpg'), ('new_session', '6')]
    assert [log.cycle_events(c)[0].kind for c in (2, 3, 4, 5)] == \
        ['created', 'modified', 'trashed', 'new_session']
    assert log.cycle_events(6) == []

    def stored(cycle, *parts):
        with open(os.path.join(out, 'monitor', 'cycle-{:04d}'.format(cycle), *parts), 'rb') as f:
            return f.read()
    assert stored(2, 'files', 'Docs', 'new.txt') == b'fresh'
    assert stored(3, 'files', 'Docs', 'notes.txt') == b'meeting moved\n'
    trash_name = log.cycle_events(4)[0].after['trash_name']
    assert stored(4, 'trash', trash_name) == mock.state.accounts['admin'].trash[trash_name].node.content
    assert [line['cycle'] for line in log.acquisitions] == [2, 3, 4]
    manifest = EvidenceManifest.load(os.path.join(out, 'monitor', 'cycle-0003'))
    assert [r.bundle_path for r in manifest.by_category('files')] == ['files/Docs/notes.txt']

    assert EventLog.load(out).events == log.events
    ledger = os.path.join(out, 'monitor', 'ledger.jsonl')
    with open(ledger, 'r', encoding='utf-8') as f:
        assert 'admin-app-password' not in f.read()
    with pytest.raises(OutDirNotEmpty):
        run_monitor(clients, out, interval=1, max_cycles=1)


def test_captured_at_never_repeats(clients):
    first = take_snapshot(clients)
    ahead = Snapshot(captured_at=first.captured_at + timedelta(hours=1))
    second = take_snapshot(clients, previous=ahead)
    assert second.captured_at == ahead.captured_at + timedelta(milliseconds=1)


class TrashOutagePolicy(ReacquirePolicy):
    """Breaks the next trash listing right after the events are planned."""

    def __init__(self, mock):
        super(TrashOutagePolicy, self).__init__()
        self.mock = mock

    def plan(self, events):
        self.mock.inject_fault('PROPFIND', r'/trashbin/admin/trash/?$', 500)
        return super(TrashOutagePolicy, self).plan(events)


class RefusingPolicy(MonitorPolicy):

    def plan(self, events):
        raise InputError('re-acquisition refused')


def trash_holiday_at_cycle_2(mock):
    script = MutationScript([MutationStep('delete-to-trash', path='Photos/holiday.jpg',
                                          at_cycle=2)])
    return lambda cycle: script.apply_cycle(mock.state, cycle)


def test_failed_reacquisition_is_not_logged_twice(clients, mock, tmp_path):
    out = str(tmp_path)
    log = run_monitor(clients, out, interval=1, policy=TrashOutagePolicy(mock), max_cycles=3,
                      on_cycle=trash_holiday_at_cycle_2(mock))
    assert [(line['cycle'], line['event']['subject']) for line in log.lines
            if line['kind'] == 'event'] == [(2, 'Photos/holiday.jpg')]
    assert [line['cycle'] for line in log.acquisitions] == [2]
    manifest = EvidenceManifest.load(os.path.join(out, 'monitor', 'cycle-0002'))
    assert [r.category for r in manifest.failures] == ['trash']


def test_refused_reacquisition_logs_error(clients, mock, tmp_path):
    log = run_monitor(clients, str(tmp_path), interval=1, policy=RefusingPolicy(),
                      max_cycles=3, on_cycle=trash_holiday_at_cycle_2(mock))
    assert kinds(log.events) == [('trashed', 'Photos/holiday.jpg')]
    errors = [line for line in log.lines if line['kind'] == 'error']
    assert [(line['cycle'], line['stage']) for line in errors] == [(2, 'reacquire')]
    assert log.acquisitions == []


def test_file_created_and_removed_within_one_interval(clients, mock):
    before = take_snapshot(clients)
    mock.state.create_file('admin', 'Docs/flash.txt', b'gone soon')
    trashed = mock.state.delete_to_trash('admin', 'Docs/flash.txt')
    mock.state.create_file('admin', 'Docs/vanished.txt', b'gone for good')
    with mock.state.lock:
        del mock.state.accounts['admin'].files['Docs/vanished.txt']
    events = diff(before, take_snapshot(clients, previous=before))
    assert kinds(events) == [('trashed', trashed.trash_name)]
    assert events[0].before is None
