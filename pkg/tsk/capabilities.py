"""
Capability subcommands: thin bindings over the client, acquisition and
monitoring operations, sharing the connection flags of the nc-* tools.

    python -m tsk.capabilities user-info
    python -m tsk.capabilities trash-bin --output_format machine
    python -m tsk.capabilities dump --out case-042/
    python -m tsk.capabilities revoke-all --yes
"""
import logging
import os
import sys
from datetime import datetime, timezone

from acquisition.collect import dump
from acquisition.manifest import MANIFEST_NAME
from acquisition.verify import verify_bundle
from monitoring.loop import DEFAULT_INTERVAL, MonitorPolicy, ReacquirePolicy, run_monitor
from ncforensic.errors import EXIT_PARTIAL, InputError, WrongKind
from ncforensic.utils import bool_flag, sha256_file
from tsk.common import (
    ArgumentParser, add_connection_args, connect, emit, instant, machine, run)

logger = logging.getLogger(__name__)


def _require_confirmation(args):
    if not args.yes:
        raise InputError('{} changes server state; pass --yes to confirm'.format(args.command))


def user_info(args, config, clients):
    user = clients.ocs.get_user(args.user) if args.user else clients.ocs.get_current_user()
    if machine(config):
        emit(user.to_dict())
        return
    print('User ID: {}'.format(user.uid))
    print('Display Name: {}'.format(user.display_name))
    print('Email: {}'.format(user.email or '-'))
    print('Groups: {}'.format(', '.join(user.groups) or '-'))
    print('Quota: {} used of {} ({}%)'.format(user.quota.used, user.quota.total,
                                             user.quota.relative))
    last_login = datetime.fromtimestamp(user.last_login / 1000.0, timezone.utc) \
        if user.last_login else None
    print('Last Login: {}'.format(instant(last_login)))
    print('Enabled: {}'.format('yes' if user.enabled else 'no'))


def list_users(args, config, clients):
    users = clients.ocs.list_users()
    if machine(config):
        emit({'users': users})
        return
    for uid in users:
        print(uid)


def search_user(args, config, clients):
    for user in clients.ocs.search_users(args.term):
        if machine(config):
            emit(user.to_dict())
        else:
            print('{}\t{}\t{}'.format(user.uid, user.display_name, user.email or '-'))


def list_files(args, config, clients):
    # a failed sub-listing surfaces as PartialFailure once the rest is printed
    entries = clients.webdav.walk(args.path)
    next(entries)
    for entry in entries:
        if machine(config):
            emit(entry.to_dict())
        else:
            print('{}\t{}\t{}\t{}\t{}'.format('d' if entry.is_directory else 'r', entry.file_id,
                                              entry.size, entry.etag, entry.relative_path))


def file_id_to_path(args, config, clients):
    path = clients.webdav.resolve_file_id(args.file_id)
    if machine(config):
        emit({'file_id': args.file_id, 'path': path})
    else:
        print(path)


def download_file(args, config, clients):
    entry = clients.webdav.propfind(args.path, 0)[0]
    if entry.is_directory:
        raise WrongKind('{} is a directory'.format(args.path))
    partial = args.out + '.part'
    with open(partial, 'wb') as f:
        byte_length, digest = clients.webdav.download(entry.href, f)
    os.replace(partial, args.out)
    source_url = clients.transport.url_for_href(entry.href)
    if machine(config):
        emit({'path': entry.relative_path, 'source_url': source_url, 'out': args.out,
              'byte_length': byte_length, 'sha256': digest, 'server_etag': entry.etag})
    else:
        print('{}  {}  {}'.format(digest, byte_length, args.out))


def trash_bin(args, config, clients):
    entries = clients.webdav.list_trash()
    if machine(config):
        for entry in entries:
            emit(entry.to_dict())
        return
    print('DELETION_TIME\tDELETED_AT\tSIZE\tFILE_ID\tTRASH_NAME\tORIGINAL_LOCATION')
    for entry in entries:
        deleted_at = instant(datetime.fromtimestamp(entry.deletion_time, timezone.utc))
        print('{}\t{}\t{}\t{}\t{}\t{}'.format(entry.deletion_time, deleted_at, entry.size,
                                              entry.file_id, entry.trash_name,
                                              entry.original_location))


def file_versions(args, config, clients):
    versions = clients.webdav.list_versions(args.file_id)
    if machine(config):
        for version in versions:
            emit(version.to_dict())
        return
    print('TIMESTAMP\tSIZE\tETAG')
    for version in versions:
        print('{}\t{}\t{}'.format(version.version_timestamp, version.size, version.etag))


def file_activity(args, config, clients):
    for item in clients.ocs.get_file_activity(args.file_id, since=args.since, limit=args.limit):
        if machine(config):
            emit(item.to_dict())
        else:
            print('{}\t{}\t{}\t{}\t{}'.format(item.activity_id, instant(item.timestamp),
                                              item.type, item.user, item.subject))


def list_devices(args, config, clients):
    sessions = clients.sessions.list_sessions()
    if machine(config):
        for session in sessions:
            emit(session.to_dict())
        return
    print('TOKEN_ID\tTYPE\tLAST_ACTIVITY\tCURRENT\tNAME')
    for session in sessions:
        last = datetime.fromtimestamp(session.last_activity, timezone.utc)
        print('{}\t{}\t{}\t{}\t{}'.format(session.token_id, session.session_type, instant(last),
                                          '*' if session.is_current else '',
                                          session.agent_name))


def revoke_device(args, config, clients):
    _require_confirmation(args)
    confirmation = clients.sessions.revoke_session(args.token_id, force=args.force)
    if machine(config):
        emit(confirmation.to_dict())
    else:
        print('Revoked session {} (HTTP {})'.format(confirmation.token_id, confirmation.status))


def revoke_all(args, config, clients):
    _require_confirmation(args)
    count = clients.sessions.revoke_all(keep_current=args.keep_current)
    if machine(config):
        emit({'revoked': count})
    else:
        print(count)


def dump_instance(args, config, clients):
    manifest = dump(clients, args.path, args.include_trash, args.include_versions, args.out,
                    include_activity=args.include_activity, concurrency=config.concurrency,
                    resume=args.resume, show_progress=args.progress)
    digest = sha256_file(os.path.join(args.out, MANIFEST_NAME))
    failures = manifest.failures
    if machine(config):
        emit({'bundle_dir': args.out, 'manifest_digest': digest,
              'record_count': len(manifest.records), 'failed_count': len(failures),
              'request_ledger_digest': manifest.request_ledger_digest})
    else:
        print('Manifest digest: {}'.format(digest))
        print('Records: {} ({} failed)'.format(len(manifest.records), len(failures)))
    if failures:
        for record in failures:
            logger.warning('Not preserved: {} ({})'.format(record.source_url, record.error))
        return EXIT_PARTIAL


def verify(args, config):
    report = verify_bundle(args.bundle_dir, include_cycles=args.include_cycles,
                           show_progress=args.progress)
    if machine(config):
        emit(report.to_dict())
    else:
        print('Manifest digest: {}'.format(report.manifest_digest))
        print('Matches: {}'.format(len(report.matches)))
        for mismatch in report.mismatches:
            print('MISMATCH {}: expected {}, found {}'.format(
                mismatch.bundle_path, mismatch.expected, mismatch.actual))
        for path in report.missing:
            print('MISSING {}'.format(path))
        print('Failed records: {}'.format(report.failed_records))
        print('Ledger: {}'.format({None: 'absent', True: 'ok', False: 'MISMATCH'}[report.ledger_ok]))
    return report.exit_status


def monitor(args, config, clients):
    policy = ReacquirePolicy() if args.reacquire else MonitorPolicy()
    try:
        log = run_monitor(clients, args.out, interval=args.interval, policy=policy,
                          max_cycles=args.max_cycles, root_path=args.path)
    except KeyboardInterrupt:
        logger.info('Monitoring interrupted; event log is complete up to the last cycle')
        return 0
    if machine(config):
        emit({'events_path': log.path, 'snapshots': len(log.snapshots),
              'events': len(log.events), 'acquisitions': len(log.acquisitions)})
    else:
        for event in log.events:
            print('{}\t{}\t{}'.format(event.observed_at, event.kind, event.subject))
        print('Snapshots: {}, events: {}, re-acquisitions: {}'.format(
            len(log.snapshots), len(log.events), len(log.acquisitions)))


COMMANDS = {
    'user-info': user_info,
    'list-users': list_users,
    'search-user': search_user,
    'list-files': list_files,
    'file-id-to-path': file_id_to_path,
    'download-file': download_file,
    'trash-bin': trash_bin,
    'file-versions': file_versions,
    'file-activity': file_activity,
    'list-devices': list_devices,
    'revoke-device': revoke_device,
    'revoke-all': revoke_all,
    'dump': dump_instance,
    'monitor': monitor,
}


def build_parser():
    parser = ArgumentParser(description='Forensic capabilities against one account',
                            prog='nc-capabilities')
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    def command(name, help, connection=True):
        sub = subparsers.add_parser(name, help=help)
        if connection:
            add_connection_args(sub)
        else:
            sub.add_argument('--output_format', default='text', choices=('text', 'machine'))
            sub.add_argument('--verbose', default=0, type=bool_flag)
        return sub

    sub = command('user-info', 'details of the authenticated (or given) user')
    sub.add_argument('--user', default=None, type=str)
    command('list-users', 'all user ids (administrators only)')
    sub = command('search-user', 'search users by name or email')
    sub.add_argument('term', type=str)
    sub = command('list-files', 'recursive listing with file ids and etags')
    sub.add_argument('path', nargs='?', default='', type=str)
    sub = command('file-id-to-path', 'resolve a file id to its path')
    sub.add_argument('file_id', type=int)
    sub = command('download-file', 'download one file by path')
    sub.add_argument('path', type=str)
    sub.add_argument('--out', required=True, type=str)
    command('trash-bin', 'trash entries with deletion times and original locations')
    sub = command('file-versions', 'versions of a file id')
    sub.add_argument('file_id', type=int)
    sub = command('file-activity', 'activity history of a file id')
    sub.add_argument('file_id', type=int)
    sub.add_argument('--since', default=None, type=int)
    sub.add_argument('--limit', default=None, type=int)
    command('list-devices', 'app tokens and browser sessions')
    sub = command('revoke-device', 'revoke one session by token id')
    sub.add_argument('token_id', type=int)
    sub.add_argument('--yes', action='store_true')
    sub.add_argument('--force', default=0, type=bool_flag,
                     help='allow revoking the token this tool authenticates with')
    sub = command('revoke-all', 'revoke every other session')
    sub.add_argument('--yes', action='store_true')
    sub.add_argument('--keep_current', default=1, type=bool_flag)
    sub = command('dump', 'acquire files, trash, versions and metadata into a bundle')
    sub.add_argument('--out', required=True, type=str)
    sub.add_argument('--path', default='', type=str)
    sub.add_argument('--include_trash', default=1, type=bool_flag)
    sub.add_argument('--include_versions', default=1, type=bool_flag)
    sub.add_argument('--include_activity', default=0, type=bool_flag)
    sub.add_argument('--resume', default=0, type=bool_flag)
    sub.add_argument('--progress', default=0, type=bool_flag)
    sub = command('verify-bundle', 're-hash a bundle against its manifest', connection=False)
    sub.add_argument('bundle_dir', type=str)
    sub.add_argument('--include_cycles', default=1, type=bool_flag)
    sub.add_argument('--progress', default=0, type=bool_flag)
    sub = command('monitor', 'periodic snapshots, change events and re-acquisition')
    sub.add_argument('--out', required=True, type=str)
    sub.add_argument('--path', default='', type=str)
    sub.add_argument('--interval', default=DEFAULT_INTERVAL, type=int)
    sub.add_argument('--max_cycles', default=None, type=int)
    sub.add_argument('--reacquire', default=1, type=bool_flag)
    return parser


def dispatch(args):
    if args.command == 'verify-bundle':
        return verify(args, args)
    config, clients = connect(args)
    return COMMANDS[args.command](args, config, clients)


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(dispatch, args)


if __name__ == '__main__':
    sys.exit(main())
