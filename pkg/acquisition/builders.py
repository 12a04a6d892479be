import logging
import os
import stat

from attrdict import AttrDict

from ncforensic.errors import InvalidCredentials
from ncforensic.ocs import OcsClient
from ncforensic.sessions import SessionControl
from ncforensic.transport import DEFAULT_TIMEOUT, Credentials, RequestLedger, Transport
from ncforensic.webdav import MAX_WALK_WORKERS, WebDavClient

logger = logging.getLogger(__name__)

ENV_BASE_URL = 'NC_BASE_URL'
ENV_USERNAME = 'NC_USERNAME'
ENV_APP_PASSWORD = 'NC_APP_PASSWORD'
ENV_CREDENTIAL_FILE = 'NC_CREDENTIAL_FILE'

DEFAULT_CONFIG = {
    'base_url': None,
    'username': None,
    'credential_file': None,
    'timeout': DEFAULT_TIMEOUT,
    'verify_tls': True,
    'concurrency': MAX_WALK_WORKERS,
    'output_format': 'text',
    'verbose': False,
}


def build_config(args=None, environ=None, **overrides):
    """
    Merge defaults, environment and parsed arguments into one AttrDict.
    Flags win over the environment; None-valued flags fall through.
    """
    environ = os.environ if environ is None else environ
    config = dict(DEFAULT_CONFIG)
    config['base_url'] = environ.get(ENV_BASE_URL)
    config['username'] = environ.get(ENV_USERNAME)
    config['credential_file'] = environ.get(ENV_CREDENTIAL_FILE)
    if args is not None:
        values = args if isinstance(args, dict) else vars(args)
        config.update((k, v) for k, v in values.items() if v is not None)
    config.update(overrides)
    config['concurrency'] = max(1, min(int(config['concurrency']), MAX_WALK_WORKERS))
    return AttrDict(config)


def read_credential_file(path):
    """
    First line of `path`. The file must not be readable or writable by group
    or others.
    """
    try:
        mode = os.stat(path).st_mode
    except OSError as e:
        raise InvalidCredentials('cannot read credential file {}: {}'.format(path, e))
    if mode & (stat.S_IRWXG | stat.S_IRWXO):
        raise InvalidCredentials(
            'credential file {} is accessible by group or others (mode {:o}); '
            'chmod 600 it'.format(path, stat.S_IMODE(mode)))
    with open(path, 'r', encoding='utf-8') as f:
        secret = f.readline().rstrip('\r\n')
    if not secret:
        raise InvalidCredentials('credential file {} is empty'.format(path))
    return secret


def resolve_app_password(config, environ=None):
    environ = os.environ if environ is None else environ
    if config.get('credential_file'):
        return read_credential_file(config.credential_file)
    secret = environ.get(ENV_APP_PASSWORD)
    if secret:
        return secret
    raise InvalidCredentials('no app password: set {} or use a credential file'.format(
        ENV_APP_PASSWORD))


def build_credentials(config, environ=None):
    if not config.get('base_url'):
        raise InvalidCredentials('no base URL: pass --base_url or set {}'.format(ENV_BASE_URL))
    if not config.get('username'):
        raise InvalidCredentials('no username: pass --username or set {}'.format(ENV_USERNAME))
    return Credentials(config.base_url, config.username, resolve_app_password(config, environ))


def build_transport(config, credentials=None, ledger=None):
    if credentials is None:
        credentials = build_credentials(config)
    transport = Transport(credentials, ledger=ledger or RequestLedger(),
                          timeout=config.timeout, verify=config.verify_tls)
    logger.debug('Transport for {} (fingerprint {})'.format(
        credentials.account_id, credentials.fingerprint[:12]))
    return transport


def build_clients(transport, concurrency=MAX_WALK_WORKERS):
    return AttrDict({
        'transport': transport,
        'ocs': OcsClient(transport),
        'webdav': WebDavClient(transport, workers=concurrency),
        'sessions': SessionControl(transport),
    })
