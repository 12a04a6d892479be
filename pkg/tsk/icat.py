"""
nc-icat: raw content of an object by file id, written to standard output
with nothing appended. Looks in the current tree first, then the trash.

    python -m tsk.icat <object id> [--version_timestamp TS] > evidence.bin
"""
import logging
import sys

from ncforensic.errors import InputError, NotFoundError, WrongKind
from tsk.common import build_parser, connect, locate_object, run

logger = logging.getLogger(__name__)


def source_href(webdav, object_id, version_timestamp=None):
    if object_id < 0:
        raise InputError('object id must be >= 0')
    entry, trashed = locate_object(webdav, object_id)
    target = entry if entry is not None else trashed
    if target is None:
        raise NotFoundError('object {} is neither in the tree nor in the trash'.format(object_id))
    if target.is_directory:
        raise WrongKind('object {} is a directory'.format(object_id))
    if version_timestamp is None:
        return target.href
    if entry is None:
        raise NotFoundError('versions of trashed object {} are not reachable'.format(object_id))
    for version in webdav.list_versions(object_id):
        if version.version_timestamp == version_timestamp:
            return version.href
    raise NotFoundError('object {} has no version {}'.format(object_id, version_timestamp))


def nc_icat(args, stdout=None):
    _, clients = connect(args)
    href = source_href(clients.webdav, args.object_id, args.version_timestamp)
    stdout = stdout if stdout is not None else sys.stdout.buffer
    byte_length, digest = clients.webdav.download(href, stdout)
    stdout.flush()
    logger.info('{} bytes, sha256 {}'.format(byte_length, digest))
    return 0


def main(argv=None, stdout=None):
    parser = build_parser('Output the content of an object by file id', 'nc-icat')
    parser.add_argument('object_id', type=int)
    parser.add_argument('--version_timestamp', default=None, type=int)
    args = parser.parse_args(argv)
    return run(lambda a: nc_icat(a, stdout), args)


if __name__ == '__main__':
    sys.exit(main())
