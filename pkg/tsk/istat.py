"""
nc-istat: metadata of one object by file id: current or trashed location,
WebDAV properties, file activity and available versions.

    python -m tsk.istat <object id>
"""
import logging
import sys
from datetime import datetime, timezone

from ncforensic.errors import EXIT_NOT_FOUND, InputError, NotFoundError
from tsk.common import build_parser, connect, emit, instant, locate_object, machine, optional, run

logger = logging.getLogger(__name__)


def collect(clients, object_id, activity_limit=None):
    if object_id < 0:
        raise InputError('object id must be >= 0')
    webdav = clients.webdav
    entry, trashed = locate_object(webdav, object_id)
    activity = optional(lambda: clients.ocs.get_file_activity(object_id, limit=activity_limit),
                        [])
    versions = []
    if entry is not None and not entry.is_directory:
        versions = optional(lambda: webdav.list_versions(object_id), [])
    return entry, trashed, activity, versions


def print_report(object_id, entry, trashed, activity, versions):
    print('OBJECT ID: {}'.format(object_id))
    if entry is not None:
        print('Location: current tree')
        print('Path: {}'.format(entry.relative_path))
        print('Type: {}'.format('directory' if entry.is_directory else 'file'))
        print('Size: {}'.format(entry.size))
        print('ETag: {}'.format(entry.etag or '-'))
        print('Last Modified: {}'.format(instant(entry.last_modified)))
        if not entry.is_directory:
            print('Content Type: {}'.format(entry.content_type or '-'))
        print('Owner: {}'.format(entry.owner_id or '-'))
        print('Permissions: {}'.format(entry.permissions or '-'))
    elif trashed is not None:
        print('Location: trash')
        print('Trash Name: {}'.format(trashed.trash_name))
        print('Original Location: {}'.format(trashed.original_location))
        print('Deleted: {} ({})'.format(
            instant(datetime.fromtimestamp(trashed.deletion_time, timezone.utc)),
            trashed.deletion_time))
        print('Type: {}'.format('directory' if trashed.is_directory else 'file'))
        print('Size: {}'.format(trashed.size))
    else:
        print('Location: none (content unavailable)')
    print('')
    print('ACTIVITY ({}):'.format(len(activity)))
    for item in activity:
        print('  {}\t{}\t{}\t{}'.format(instant(item.timestamp), item.type, item.user,
                                        item.subject))
    print('')
    print('VERSIONS ({}):'.format(len(versions)))
    for version in versions:
        print('  {}\t{}\t{}'.format(version.version_timestamp, version.size, version.etag))


def nc_istat(args):
    config, clients = connect(args)
    entry, trashed, activity, versions = collect(clients, args.object_id, args.activity_limit)
    if entry is None and trashed is None and not activity:
        raise NotFoundError('object {} is neither in the tree nor in the trash'.format(
            args.object_id))
    if machine(config):
        emit({'object_id': args.object_id,
              'location': 'tree' if entry is not None else 'trash' if trashed is not None else None,
              'entry': entry.to_dict() if entry is not None else None,
              'trash_entry': trashed.to_dict() if trashed is not None else None,
              'activity': [a.to_dict() for a in activity],
              'versions': [v.to_dict() for v in versions],
              'content_available': entry is not None or trashed is not None})
    else:
        print_report(args.object_id, entry, trashed, activity, versions)
    if entry is None and trashed is None:
        logger.warning('Object {} has activity but no retrievable content'.format(args.object_id))
        return EXIT_NOT_FOUND
    return 0


def main(argv=None):
    parser = build_parser('Display metadata of an object by file id', 'nc-istat')
    parser.add_argument('object_id', type=int)
    parser.add_argument('--activity_limit', default=None, type=int)
    args = parser.parse_args(argv)
    return run(nc_istat, args)


if __name__ == '__main__':
    sys.exit(main())
