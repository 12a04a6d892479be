"""
Authenticated HTTP transport. Every call goes through `Transport.execute`,
which checks the method against a `MethodPolicy`, attaches the Basic-auth
header and appends exactly one `RequestRecord` to the request ledger.
"""
import base64
import hashlib
import logging
import threading
from dataclasses import dataclass, field
from urllib.parse import quote, urlsplit

import requests

from ncforensic.errors import (
    InputError, InvalidCredentials, PolicyViolation, TransportError,
    raise_for_status)
from ncforensic.utils import (
    CHUNK_SIZE, canonical_line, format_instant, sha256_bytes, utcnow)

logger = logging.getLogger(__name__)

READ_METHODS = frozenset({'GET', 'HEAD', 'PROPFIND'})
DEFAULT_TIMEOUT = 30

ACQUISITION = 'acquisition'
SESSION_CONTROL = 'session-control'

RECORD_KEYS = (
    'sequence', 'context', 'method', 'url', 'status', 'flag', 'started_at',
    'finished_at', 'response_digest')


@dataclass(frozen=True)
class Credentials:
    base_url: str
    username: str
    app_password: str = field(repr=False)

    def __post_init__(self):
        parts = urlsplit(self.base_url)
        if parts.scheme not in ('http', 'https') or not parts.netloc:
            raise InvalidCredentials(
                'base_url must be an absolute http(s) URL: {}'.format(self.base_url))
        if parts.query or parts.fragment:
            raise InvalidCredentials('base_url must not carry a query or fragment')
        if not self.username:
            raise InvalidCredentials('username must not be empty')
        if ':' in self.username:
            raise InvalidCredentials('username must not contain ":"')
        object.__setattr__(self, 'base_url', self.base_url.rstrip('/'))

    @property
    def account_id(self):
        parts = urlsplit(self.base_url)
        host = parts.hostname
        if parts.port:
            host = '{}:{}'.format(host, parts.port)
        return '{}@{}'.format(self.username, host)

    @property
    def fingerprint(self):
        return sha256_bytes((self.username + self.base_url).encode('utf-8'))


def build_auth_header(credentials):
    """
    Inputs:
    - credentials: Credentials (only username and app_password are used)
    Outputs:
    - 'Basic ' + base64(username:app_password), standard alphabet, padded
    """
    if ':' in credentials.username:
        raise InvalidCredentials('username must not contain ":"')
    token = '{}:{}'.format(credentials.username, credentials.app_password)
    return 'Basic ' + base64.b64encode(token.encode('utf-8')).decode('ascii')


@dataclass(frozen=True)
class MethodPolicy:
    allowed_methods: frozenset
    context_label: str

    def __post_init__(self):
        object.__setattr__(
            self, 'allowed_methods',
            frozenset(m.upper() for m in self.allowed_methods))
        if self.context_label == ACQUISITION and self.allowed_methods != READ_METHODS:
            raise InputError('acquisition policy must allow exactly GET, HEAD, PROPFIND')

    def allows(self, method):
        return method.upper() in self.allowed_methods


ACQUISITION_POLICY = MethodPolicy(READ_METHODS, ACQUISITION)
SESSION_CONTROL_POLICY = MethodPolicy(READ_METHODS | {'DELETE'}, SESSION_CONTROL)


@dataclass(frozen=True)
class RequestRecord:
    sequence: int
    context: str
    method: str
    url: str
    status: object  # HTTP status, or 'blocked' / 'transport-error'
    flag: str
    started_at: str
    finished_at: str
    response_digest: str

    def to_dict(self):
        return dict((k, getattr(self, k)) for k in RECORD_KEYS)

    @classmethod
    def from_dict(cls, data):
        return cls(**dict((k, data[k]) for k in RECORD_KEYS))


class RequestLedger(object):
    """Append-only, totally ordered record of every request."""

    def __init__(self, path=None):
        self._lock = threading.Lock()
        self._records = []
        self._path = None
        if path is not None:
            self.attach(path)

    def append(self, context, method, url, status, flag, started_at,
               finished_at, response_digest):
        with self._lock:
            record = RequestRecord(
                sequence=len(self._records) + 1, context=context,
                method=method, url=url, status=status, flag=flag,
                started_at=format_instant(started_at),
                finished_at=format_instant(finished_at),
                response_digest=response_digest)
            self._records.append(record)
            if self._path is not None:
                with open(self._path, 'a', encoding='utf-8', newline='\n') as f:
                    f.write(canonical_line(record.to_dict(), RECORD_KEYS))
            return record

    def attach(self, path):
        """Mirror the ledger into `path`, writing what is already recorded."""
        with self._lock:
            with open(path, 'w', encoding='utf-8', newline='\n') as f:
                for record in self._records:
                    f.write(canonical_line(record.to_dict(), RECORD_KEYS))
            self._path = path

    def detach(self):
        with self._lock:
            self._path = None

    @property
    def records(self):
        with self._lock:
            return tuple(self._records)

    def __len__(self):
        with self._lock:
            return len(self._records)

    def serialize(self):
        return ''.join(canonical_line(r.to_dict(), RECORD_KEYS)
                       for r in self.records).encode('utf-8')

    def digest(self):
        return sha256_bytes(self.serialize())

    def sent_methods(self, context=None):
        return set(r.method for r in self.records
                   if r.flag == 'sent' and (context is None or r.context == context))


@dataclass
class Response:
    status: int
    headers: dict
    body: bytes
    url: str
    digest: str
    byte_length: int


class Transport(object):
    timeout = DEFAULT_TIMEOUT

    def __init__(self, credentials, ledger=None, timeout=DEFAULT_TIMEOUT,
                 verify=True):
        self.credentials = credentials
        self.ledger = ledger if ledger is not None else RequestLedger()
        self.timeout = timeout
        self.verify = verify
        self._auth_header = build_auth_header(credentials)
        self._local = threading.local()
        self._mutation_lock = threading.Lock()
        self._hooks = []

    @property
    def base_url(self):
        return self.credentials.base_url

    @property
    def username(self):
        return self.credentials.username

    def _session(self):
        session = getattr(self._local, 'session', None)
        if session is None:
            session = requests.Session()
            self._local.session = session
        return session

    def url(self, *segments):
        """
        Join path segments under base_url, percent-encoding each one.
        Segments may themselves contain '/', which is kept.
        """
        parts = [quote(str(s).strip('/'), safe='/') for s in segments]
        parts = [p for p in parts if p]
        return self.base_url + '/' + '/'.join(parts)

    def url_for_href(self, href):
        parts = urlsplit(self.base_url)
        return '{}://{}{}'.format(parts.scheme, parts.netloc, href)

    def add_hook(self, hook):
        """hook(record, response, streamed) is called after every response."""
        self._hooks.append(hook)

    def remove_hook(self, hook):
        if hook in self._hooks:
            self._hooks.remove(hook)

    def _under_base(self, url):
        return url == self.base_url or url.startswith(self.base_url + '/')

    def execute(self, method, url, policy, headers=None, body=None,
                params=None, sink=None):
        """
        Inputs:
        - method, url: the request; url must lie under base_url
        - policy: MethodPolicy; a disallowed method is never sent
        - sink: optional writable binary file; the body is streamed into it
        Outputs:
        - Response. Statuses >= 400 raise the matching HttpError subclass.
        """
        method = method.upper()
        started_at = utcnow()
        if not policy.allows(method) or not self._under_base(url):
            self.ledger.append(policy.context_label, method, url, 'blocked',
                               'blocked', started_at, utcnow(), None)
            if not self._under_base(url):
                raise InputError('{} is not under {}'.format(url, self.base_url))
            logger.warning('Blocked {} {} ({} policy)'.format(
                method, url, policy.context_label))
            raise PolicyViolation(method, url, policy.context_label)

        request_headers = {'Authorization': self._auth_header}
        if headers:
            request_headers.update(headers)

        if method in READ_METHODS:
            attempts = 2
            return self._send(method, url, policy, request_headers, body,
                              params, sink, started_at, attempts)
        with self._mutation_lock:
            return self._send(method, url, policy, request_headers, body,
                              params, sink, started_at, 1)

    def _send(self, method, url, policy, headers, body, params, sink,
              started_at, attempts):
        last_error = None
        if sink is not None:
            # a half-written sink cannot be replayed
            attempts = 1
        for attempt in range(attempts):
            try:
                response = self._session().request(
                    method, url, headers=headers, data=body, params=params,
                    timeout=self.timeout, verify=self.verify,
                    stream=sink is not None, allow_redirects=False)
                if sink is not None and response.status_code < 300:
                    digest = hashlib.sha256()
                    length = 0
                    for chunk in response.iter_content(CHUNK_SIZE):
                        digest.update(chunk)
                        sink.write(chunk)
                        length += len(chunk)
                    content = b''
                    hexdigest = digest.hexdigest()
                else:
                    content = response.content
                    length = len(content)
                    hexdigest = sha256_bytes(content)
                break
            except requests.RequestException as e:
                last_error = e
                logger.debug('Attempt {} of {} {} failed: {}'.format(
                    attempt + 1, method, url, e))
        else:
            self.ledger.append(policy.context_label, method, url,
                               'transport-error', 'failed', started_at,
                               utcnow(), None)
            raise TransportError(method, url, last_error)

        full_url = response.url or url
        record = self.ledger.append(
            policy.context_label, method, full_url, response.status_code,
            'sent', started_at, utcnow(), hexdigest)
        logger.debug('{} {} -> {}'.format(method, full_url, response.status_code))
        result = Response(status=response.status_code,
                          headers=dict(response.headers), body=content,
                          url=full_url, digest=hexdigest, byte_length=length)
        raise_for_status(result.status, full_url, content)
        for hook in list(self._hooks):
            hook(record, result, sink is not None)
        return result
