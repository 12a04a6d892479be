"""
Shared plumbing for the command-line tools: connection flags, logging,
output formats and the exit-code contract.

    0  success
    1  generic failure or usage error
    2  authentication failed / forbidden
    3  object not found
    4  wrong kind (e.g. directory where a file is required)
    5  partial failure (some objects failed, the rest completed)

The app password is read from NC_APP_PASSWORD or a credential file only.
"""
import argparse
import logging
import sys

from acquisition.builders import build_clients, build_config, build_transport
from ncforensic.errors import EXIT_FAILURE, ForensicError, NotFoundError, ResourceNotFound
from ncforensic.utils import bool_flag, canonical_line, format_instant

logger = logging.getLogger(__name__)

FORMAT = '[%(levelname)s: %(filename)s: %(lineno)4d]: %(message)s'

OUTPUT_FORMATS = ('text', 'machine')


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit 1; exit code 2 means authentication failure."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAILURE, '{}: error: {}\n'.format(self.prog, message))


def add_connection_args(parser):
    group = parser.add_argument_group('connection')
    group.add_argument('--base_url', default=None, type=str,
                       help='instance URL (default: $NC_BASE_URL)')
    group.add_argument('--username', default=None, type=str,
                       help='account name (default: $NC_USERNAME)')
    group.add_argument('--credential_file', default=None, type=str,
                       help='file holding the app password, mode 600 '
                            '(default: $NC_CREDENTIAL_FILE, then $NC_APP_PASSWORD)')
    group.add_argument('--timeout', default=None, type=int)
    group.add_argument('--verify_tls', default=None, type=bool_flag)
    group.add_argument('--concurrency', default=None, type=int)
    group.add_argument('--output_format', default='text', choices=OUTPUT_FORMATS)
    group.add_argument('--verbose', default=0, type=bool_flag)
    return parser


def build_parser(description, prog=None):
    parser = ArgumentParser(description=description, prog=prog)
    return add_connection_args(parser)


def setup_logging(verbose):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format=FORMAT, stream=sys.stderr)


def connect(args, environ=None):
    config = build_config(args, environ)
    transport = build_transport(config)
    return config, build_clients(transport, config.concurrency)


def machine(config):
    return config.output_format == 'machine'


def emit(payload, stream=None):
    """One canonical JSON line."""
    (stream or sys.stdout).write(canonical_line(payload))


def instant(value):
    text = format_instant(value)
    return text if text is not None else '-'


def locate_object(webdav, object_id):
    """
    Find `object_id` in the current tree, then in the trash.
    Outputs:
    - (ResourceEntry or None, TrashEntry or None)
    """
    try:
        path = webdav.resolve_file_id(object_id)
        return webdav.propfind(path, 0)[0], None
    except NotFoundError:
        pass
    for entry in webdav.list_trash():
        if entry.file_id == object_id:
            return None, entry
        if entry.is_directory:
            for child in webdav.walk_trash(entry):
                if child.file_id == object_id:
                    return None, child
    return None, None


def optional(call, default):
    """Run `call`, treating a 404 as `default`."""
    try:
        return call()
    except ResourceNotFound as e:
        logger.debug('Treating 404 as empty: {}'.format(e))
        return default


def run(command, args):
    """
    Run a tool body and translate its outcome into an exit code. The body
    returns an exit code or None for success.
    """
    setup_logging(args.verbose)
    try:
        status = command(args)
    except ForensicError as e:
        logger.error(str(e))
        return e.exit_code
    except KeyboardInterrupt:
        logger.error('Interrupted')
        return EXIT_FAILURE
    return status or 0
