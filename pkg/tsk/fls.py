"""
nc-fls: list files and directories, optionally recursing and showing deleted
(trashed) entries at their original locations.

Text columns, tab separated:

    [* ]<type>/<type> <file id>:  <size>  <mtime>  <path>

type is "d" or "r"; deleted entries start with "* " and show their deletion
time in the mtime column. Paths are relative to the account's files root.

    python -m tsk.fls [-r] [-d] [path]
"""
import logging
import posixpath
import sys
from datetime import datetime, timezone

from tsk.common import build_parser, connect, emit, instant, machine, run

logger = logging.getLogger(__name__)


def _within(location, path, recursive):
    location = location.strip('/')
    if not path:
        parent_ok = True
    else:
        parent_ok = location.startswith(path + '/')
    if not parent_ok:
        return False
    return recursive or posixpath.dirname(location) == path


def live_entries(webdav, path, recursive):
    if recursive:
        entries = list(webdav.walk(path))[1:]
        if not entries:
            root = webdav.propfind(path, 0)[0]
            return [] if root.is_directory else [root]
        return entries
    listing = webdav.propfind(path, 1)
    if not listing[0].is_directory:
        return listing[:1]
    return listing[1:]


def trash_entries(webdav, path, recursive):
    """Trashed entries whose original location lies under `path`."""
    found = []
    for entry in webdav.list_trash():
        if _within(entry.original_location, path, recursive):
            found.append(entry)
        if recursive and entry.is_directory:
            for child in webdav.walk_trash(entry):
                if _within(child.original_location, path, recursive):
                    found.append(child)
    return found


def format_line(entry, deleted=False):
    kind = 'd' if entry.is_directory else 'r'
    if deleted:
        mtime = instant(datetime.fromtimestamp(entry.deletion_time, timezone.utc))
        location = entry.original_location
    else:
        mtime = instant(entry.last_modified)
        location = entry.relative_path
    return '{}{}/{} {}:\t{}\t{}\t{}'.format('* ' if deleted else '', kind, kind,
                                          entry.file_id, entry.size, mtime, location)


def nc_fls(args):
    config, clients = connect(args)
    path = args.path.strip('/')
    rows = [(e.relative_path, 0, e) for e in live_entries(clients.webdav, path, args.recursive)]
    if args.deleted:
        rows.extend((e.original_location.strip('/'), 1, e)
                    for e in trash_entries(clients.webdav, path, args.recursive))
    rows.sort(key=lambda row: (row[0], row[1]))
    for _, deleted, entry in rows:
        if machine(config):
            emit({'deleted': bool(deleted), 'entry': entry.to_dict()})
        else:
            print(format_line(entry, bool(deleted)))
    return 0


def main(argv=None):
    parser = build_parser('List files and directories of the account', 'nc-fls')
    parser.add_argument('path', nargs='?', default='', type=str)
    parser.add_argument('-r', dest='recursive', action='store_true',
                        help='recurse into directories')
    parser.add_argument('-d', dest='deleted', action='store_true',
                        help='show deleted entries from the trash, marked with "*"')
    args = parser.parse_args(argv)
    return run(nc_fls, args)


if __name__ == '__main__':
    sys.exit(main())
