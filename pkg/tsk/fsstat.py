"""
nc-fsstat: general information about the instance.

    python -m tsk.fsstat [--output_format machine]
"""
import logging
import sys

from ncforensic.errors import Forbidden
from tsk.common import build_parser, connect, emit, machine, run

logger = logging.getLogger(__name__)

NOTICE = 'user listing requires administrator rights; showing the authenticated account only'


def nc_fsstat(args):
    config, clients = connect(args)
    capabilities = clients.ocs.get_capabilities()
    current = clients.ocs.get_current_user()
    notice = None
    try:
        users = clients.ocs.list_users()
    except Forbidden as e:
        logger.debug('User listing refused: {}'.format(e))
        users = [current.uid]
        notice = NOTICE

    if machine(config):
        emit({'capabilities': capabilities.to_dict(), 'current_user': current.to_dict(),
              'users': users, 'notice': notice})
        return 0

    version = capabilities.version
    print('NEXTCLOUD INSTANCE INFORMATION')
    print('--------------------------------------------')
    print('Server Version: {} ({}.{}.{})'.format(version.string, version.major,
                                                 version.minor, version.micro))
    print('Base URL: {}'.format(clients.transport.base_url))
    print('Account: {}'.format(clients.transport.credentials.account_id))
    print('Capabilities: {}'.format(', '.join(sorted(capabilities.capability_map)) or '-'))
    if notice:
        print('NOTICE: {}'.format(notice))
    print('Users ({}):'.format(len(users)))
    for uid in users:
        print('  {}'.format(uid))
    return 0


def main(argv=None):
    parser = build_parser('Display general information about the instance', 'nc-fsstat')
    args = parser.parse_args(argv)
    return run(nc_fsstat, args)


if __name__ == '__main__':
    sys.exit(main())
