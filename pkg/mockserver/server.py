"""
In-process mock of the OCS and WebDAV endpoints the clients use, served over
real HTTP on a local port. Run standalone with

    python -m mockserver.server --fixture mockserver/configs/forensic_case.json --port 8080
"""
import argparse
import base64
import binascii
import json
import logging
import posixpath
import re
import sys
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from email.utils import formatdate
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, quote, unquote, urlsplit

import lxml.etree as etree

from mockserver.fixture import DEFAULT_FIXTURE, FixtureSpec, InstanceState, load_fixture
from mockserver.mutations import apply
from ncforensic.errors import BindFailure
from ncforensic.utils import bool_flag
from ncforensic.webdav import DAV, NC, OC

FORMAT = '[%(levelname)s: %(filename)s: %(lineno)4d]: %(message)s'
logger = logging.getLogger(__name__)

SABRE = 'http://sabredav.org/ns'
XML_NSMAP = {'d': DAV, 's': SABRE, 'oc': OC, 'nc': NC}
REQUEST_PARSER = etree.XMLParser(resolve_entities=False, no_network=True)

DAV_READ = ('GET', 'HEAD', 'PROPFIND')
COLLECTION = object()
NOT_COLLECTION = object()

ROUTES = [
    (('GET',), r'^/ocs/v2\.php/cloud/user$', 'current_user'),
    (('GET',), r'^/ocs/v1\.php/cloud/users$', 'users'),
    (('GET',), r'^/ocs/v2\.php/cloud/users/details$', 'user_details'),
    (('GET',), r'^/ocs/v2\.php/cloud/users/(?P<uid>[^/]+)$', 'user'),
    (('GET',), r'^/ocs/v1\.php/cloud/capabilities$', 'capabilities'),
    (('GET',), r'^/ocs/v2\.php/apps/activity/api/v2/activity/filter$', 'activity'),
    (('GET',), r'^/ocs/v2\.php/apps/files_sharing/api/v1/shares$', 'shares'),
    (('GET',), r'^/ocs/v2\.php/core/apptokens$', 'list_tokens'),
    (('DELETE',), r'^/ocs/v2\.php/core/apptokens/(?P<token_id>\d+)$', 'delete_token'),
    (('DELETE',), r'^/ocs/v2\.php/core/apppassword$', 'delete_apppassword'),
    (DAV_READ, r'^/remote\.php/dav/files/(?P<uid>[^/]+)(?P<path>/.*)?$', 'files'),
    (DAV_READ, r'^/remote\.php/dav/trashbin/(?P<uid>[^/]+)/trash(?P<path>/.*)?$', 'trash'),
    (DAV_READ, r'^/remote\.php/dav/versions/(?P<uid>[^/]+)/versions/(?P<file_id>\d+)'
               r'(?:/(?P<stamp>\d+))?/?$', 'versions'),
]
ROUTES = [(methods, re.compile(pattern), name) for methods, pattern, name in ROUTES]


@dataclass
class Reply:
    status: int
    headers: dict = field(default_factory=dict)
    body: bytes = b''


@dataclass
class Request:
    method: str
    path: str
    query: dict
    headers: dict
    body: bytes
    account: object = None
    token: object = None
    params: dict = field(default_factory=dict)

    def arg(self, name, default=None):
        values = self.query.get(name)
        return values[0] if values else default


def ocs_reply(version, data, statuscode=None, message='OK'):
    """
    OCS envelope. v1 answers HTTP 200 whatever the statuscode; v2 mirrors
    failure statuscodes into the HTTP status.
    """
    if statuscode is None:
        statuscode = 100 if version == 1 else 200
    ok = statuscode in (100, 200)
    http_status = 200
    if version == 2 and not ok:
        http_status = {997: 401, 998: 404}.get(statuscode, statuscode)
    document = {'ocs': {'meta': {'status': 'ok' if ok else 'failure',
                                 'statuscode': statuscode, 'message': message,
                                 'totalitems': '', 'itemsperpage': ''},
                        'data': data}}
    return Reply(http_status, {'Content-Type': 'application/json; charset=utf-8'},
                 json.dumps(document).encode('utf-8'))


def xml_reply(status, root):
    return Reply(status, {'Content-Type': 'application/xml; charset=utf-8'},
                 etree.tostring(root, xml_declaration=True, encoding='utf-8'))


def requested_properties(body):
    """List of (namespace, name) asked for, or None for allprop."""
    if not body.strip():
        return None
    root = etree.fromstring(body, parser=REQUEST_PARSER)
    if root.find('{DAV:}allprop') is not None:
        return None
    prop = root.find('{DAV:}prop')
    if prop is None:
        return None
    names = []
    for element in prop:
        qname = etree.QName(element)
        names.append((qname.namespace, qname.localname))
    return names


def multistatus(items, requested):
    """
    items: list of (href, {(namespace, name): value}); a value is text,
    COLLECTION or NOT_COLLECTION (the latter two for resourcetype).
    """
    root = etree.Element('{DAV:}multistatus', nsmap=XML_NSMAP)
    for href, props in items:
        response = etree.SubElement(root, '{DAV:}response')
        etree.SubElement(response, '{DAV:}href').text = href
        wanted = list(props) if requested is None else requested
        found = [key for key in wanted if key in props]
        missing = [key for key in wanted if key not in props]
        for keys, status in ((found, 'HTTP/1.1 200 OK'), (missing, 'HTTP/1.1 404 Not Found')):
            if not keys:
                continue
            propstat = etree.SubElement(response, '{DAV:}propstat')
            prop = etree.SubElement(propstat, '{DAV:}prop')
            for namespace, name in keys:
                element = etree.SubElement(prop, '{{{}}}{}'.format(namespace, name))
                value = props.get((namespace, name))
                if value is COLLECTION:
                    etree.SubElement(element, '{DAV:}collection')
                elif value is not None and value is not NOT_COLLECTION:
                    element.text = value
            etree.SubElement(propstat, '{DAV:}status').text = status
    return xml_reply(207, root)


def http_date(epoch):
    return formatdate(epoch, usegmt=True)


def iso_date(epoch):
    return datetime.fromtimestamp(epoch, timezone.utc).isoformat()


def dav_href(*segments, collection=False):
    path = '/'.join(quote(s.strip('/')) for s in segments if s.strip('/'))
    href = '/' + path
    return href + '/' if collection else href


class MockApi(object):
    """Request dispatch over an InstanceState. Transport-free, so tests can
    call `dispatch` directly."""

    def __init__(self, state):
        self.state = state
        self.scripts = []

    def dispatch(self, method, target, headers, body=b''):
        parts = urlsplit(target)
        request = Request(method=method.upper(), path=unquote(parts.path),
                          query=parse_qs(parts.query, keep_blank_values=True),
                          headers=dict((k.lower(), v) for k, v in headers.items()),
                          body=body)
        state = self.state
        with state.lock:
            for script in self.scripts:
                script.apply_due(state)
            identity = self._authenticate(request.headers.get('authorization', ''))
            state.count(identity[1].token_id if identity else None, request.method)
            fault = state.take_fault(request.method, request.path)
            if fault is not None:
                logger.debug('Injected {} for {} {}'.format(fault, request.method, request.path))
                return Reply(fault, {'Content-Type': 'text/plain'}, b'injected fault')
            if identity is None:
                return Reply(401, {'WWW-Authenticate': 'Basic realm="Nextcloud", charset="UTF-8"',
                                   'Content-Type': 'text/plain'}, b'unauthorized')
            request.account, request.token = identity
            return self._route(request)

    def _authenticate(self, header):
        if not header.startswith('Basic '):
            return None
        try:
            decoded = base64.b64decode(header[6:].strip(), validate=True).decode('utf-8')
        except (binascii.Error, UnicodeDecodeError):
            return None
        username, sep, password = decoded.partition(':')
        if not sep:
            return None
        return self.state.authenticate(username, password)

    def _route(self, request):
        for methods, pattern, name in ROUTES:
            match = pattern.match(request.path)
            if match is None:
                continue
            if request.method not in methods:
                return Reply(405, {'Allow': ', '.join(methods)}, b'method not allowed')
            request.params = match.groupdict()
            if request.path.startswith('/ocs/'):
                refusal = self._check_ocs(request)
                if refusal is not None:
                    return refusal
            return getattr(self, 'handle_' + name)(request)
        return Reply(404, {'Content-Type': 'text/plain'}, b'not found')

    def _check_ocs(self, request):
        if request.headers.get('ocs-apirequest', '').lower() != 'true':
            return Reply(412, {'Content-Type': 'application/json'},
                         b'{"message":"CSRF check failed"}')
        if request.arg('format') != 'json':
            root = etree.Element('ocs')
            meta = etree.SubElement(root, 'meta')
            etree.SubElement(meta, 'status').text = 'failure'
            etree.SubElement(meta, 'statuscode').text = '400'
            etree.SubElement(meta, 'message').text = 'format=json required'
            etree.SubElement(root, 'data')
            return xml_reply(400, root)
        return None

    # -- OCS: users and capabilities -------------------------------------------

    @staticmethod
    def user_payload(account):
        total = account.quota_total
        used = account.used
        relative = round(used * 100.0 / total, 2) if total > 0 else 0.0
        return {'id': account.uid, 'enabled': account.enabled,
                'displayname': account.display_name,
                'display-name': account.display_name, 'email': account.email,
                'groups': list(account.groups), 'lastLogin': account.last_login,
                'quota': {'free': max(total - used, 0), 'used': used, 'total': total,
                          'relative': relative, 'quota': total}}

    def handle_current_user(self, request):
        return ocs_reply(2, self.user_payload(request.account))

    def handle_users(self, request):
        if not request.account.admin:
            return ocs_reply(1, [], 997, 'Unauthorised')
        return ocs_reply(1, {'users': list(self.state.accounts)})

    def handle_user_details(self, request):
        if not request.account.admin:
            return ocs_reply(2, [], 403, 'Logged in user must be an admin')
        term = (request.arg('search') or '').lower()
        users = dict((a.uid, self.user_payload(a)) for a in self.state.accounts.values()
                     if term in a.uid.lower() or term in a.display_name.lower())
        return ocs_reply(2, {'users': users})

    def handle_user(self, request):
        uid = request.params['uid']
        if uid != request.account.uid and not request.account.admin:
            return ocs_reply(2, [], 403, 'Logged in user must be an admin')
        account = self.state.accounts.get(uid)
        if account is None:
            return ocs_reply(2, [], 404, 'User does not exist')
        return ocs_reply(2, self.user_payload(account))

    def handle_capabilities(self, request):
        data = {'capabilities': self.state.capabilities}
        if self.state.version:
            numbers = [int(p) for p in self.state.version.split('.')[:3]]
            numbers += [0] * (3 - len(numbers))
            data['version'] = {'major': numbers[0], 'minor': numbers[1],
                               'micro': numbers[2], 'string': self.state.version,
                               'edition': '', 'extendedSupport': False}
        return ocs_reply(1, data)

    # -- OCS: activity and shares ------------------------------------------------

    def handle_activity(self, request):
        if request.arg('object_type', 'files') != 'files':
            return ocs_reply(2, [], 400, 'Unsupported object type')
        try:
            object_id = int(request.arg('object_id', '-1'))
            since = int(request.arg('since', '0') or 0)
            limit = int(request.arg('limit', '50'))
        except ValueError:
            return ocs_reply(2, [], 400, 'Invalid parameter')
        ascending = request.arg('sort', 'desc') == 'asc'
        uid = request.account.uid
        matching = [a for a in self.state.activities
                    if a.affected_user == uid and a.object_id == object_id]
        matching.sort(key=lambda a: a.activity_id, reverse=not ascending)
        if since:
            matching = [a for a in matching
                        if (a.activity_id > since if ascending else a.activity_id < since)]
        page = matching[:max(limit, 0)]
        if not page:
            return Reply(304)
        data = [{'activity_id': a.activity_id, 'app': 'files', 'type': a.type,
                 'user': a.user, 'affecteduser': a.affected_user, 'subject': a.subject,
                 'message': '', 'link': '', 'object_type': 'files',
                 'object_id': a.object_id, 'object_name': a.object_name,
                 'objects': {str(a.object_id): a.object_name},
                 'datetime': iso_date(a.timestamp)} for a in page]
        return ocs_reply(2, data)

    def _share_payload(self, owner, share):
        node = owner.files.get(share.path.strip('/'))
        payload = {'id': str(share.share_id), 'share_type': share.share_type,
                   'uid_owner': owner.uid, 'displayname_owner': owner.display_name,
                   'path': share.path, 'stime': share.stime,
                   'permissions': share.permissions,
                   'item_type': 'folder' if node is not None and node.is_directory else 'file',
                   'file_source': node.file_id if node is not None else None,
                   'share_with': share.share_with, 'token': share.token,
                   'expiration': share.expiration, 'note': share.note,
                   'password': '***' if share.password else None}
        return payload

    def handle_shares(self, request):
        account = request.account
        if request.arg('shared_with_me') == 'true':
            data = [self._share_payload(owner, share)
                    for owner in self.state.accounts.values()
                    for share in owner.shares if share.share_with == account.uid]
            return ocs_reply(2, data)
        shares = list(account.shares)
        path = request.arg('path')
        if path is not None:
            path = path.strip('/')
            if path not in account.files:
                return ocs_reply(2, [], 404, 'Wrong path, file/folder does not exist')
            if request.arg('subfiles') == 'true':
                shares = [s for s in shares if posixpath.dirname(s.path.strip('/')) == path]
            else:
                shares = [s for s in shares if s.path.strip('/') == path]
        return ocs_reply(2, [self._share_payload(account, s) for s in shares])

    # -- OCS: app tokens -------------------------------------------------------------

    def handle_list_tokens(self, request):
        data = [{'id': t.token_id, 'name': t.name, 'lastActivity': t.last_activity,
                 'type': t.token_type, 'scope': {'filesystem': True},
                 'current': t.token_id == request.token.token_id}
                for t in sorted(request.account.tokens.values(), key=lambda t: t.token_id)]
        return ocs_reply(2, data)

    def handle_delete_token(self, request):
        token_id = int(request.params['token_id'])
        if request.account.tokens.pop(token_id, None) is None:
            return ocs_reply(2, [], 404, 'Token not found')
        logger.debug('Token {} of {} revoked'.format(token_id, request.account.uid))
        return ocs_reply(2, [])

    def handle_delete_apppassword(self, request):
        request.account.tokens.pop(request.token.token_id, None)
        return ocs_reply(2, [])

    # -- WebDAV ----------------------------------------------------------------------

    def _dav_target(self, request):
        if request.params['uid'] != request.account.uid:
            return Reply(403, {'Content-Type': 'text/plain'}, b'forbidden')
        if request.method == 'PROPFIND':
            depth = request.headers.get('depth', 'infinity').strip().lower()
            if depth not in ('0', '1'):
                return Reply(403, {'Content-Type': 'text/plain'}, b'depth infinity refused')
        return None

    def _propfind(self, request, own, children):
        try:
            requested = requested_properties(request.body)
        except etree.XMLSyntaxError:
            return Reply(400, {'Content-Type': 'text/plain'}, b'malformed propfind')
        items = [own]
        if request.headers.get('depth', '').strip() == '1':
            items.extend(children)
        return multistatus(items, requested)

    @staticmethod
    def _content(request, content, content_type, etag, mtime):
        headers = {'Content-Type': content_type, 'ETag': '"{}"'.format(etag),
                   'Last-Modified': http_date(mtime)}
        return Reply(200, headers, b'' if request.method == 'HEAD' else content)

    def _file_props(self, account, node):
        props = {(DAV, 'getlastmodified'): http_date(account.tree_mtime(node)),
                 (DAV, 'resourcetype'): COLLECTION if node.is_directory else NOT_COLLECTION,
                 (OC, 'fileid'): str(node.file_id),
                 (OC, 'id'): '{:08d}ocmock'.format(node.file_id),
                 (OC, 'size'): str(account.tree_size(node)),
                 (OC, 'owner-id'): account.uid,
                 (OC, 'owner-display-name'): account.display_name,
                 (OC, 'permissions'): 'RGDNVCK' if node.is_directory else 'RGDNVW'}
        if node.is_directory:
            props[(DAV, 'getetag')] = '"{}"'.format(account.dir_etag(node))
        else:
            props[(DAV, 'getetag')] = '"{}"'.format(node.etag)
            props[(DAV, 'getcontentlength')] = str(len(node.content))
            props[(DAV, 'getcontenttype')] = node.content_type
        return props

    def handle_files(self, request):
        refusal = self._dav_target(request)
        if refusal is not None:
            return refusal
        account = request.account
        path = (request.params.get('path') or '').strip('/')
        node = account.files.get(path)
        if node is None:
            return Reply(404, {'Content-Type': 'text/plain'}, b'not found')
        if request.method == 'PROPFIND':
            base = ('remote.php/dav/files', account.uid)

            def item(n):
                return (dav_href(*base, n.path, collection=n.is_directory),
                        self._file_props(account, n))
            children = [item(c) for c in account.children(path)] if node.is_directory else []
            return self._propfind(request, item(node), children)
        if node.is_directory:
            return Reply(405, {'Allow': 'PROPFIND'}, b'cannot GET a collection')
        return self._content(request, node.content, node.content_type, node.etag, node.mtime)

    def _trash_props(self, name, original, deletion_time, node, account):
        props = {(NC, 'trashbin-filename'): name,
                 (NC, 'trashbin-original-location'): original,
                 (NC, 'trashbin-deletion-time'): str(deletion_time),
                 (DAV, 'resourcetype'): COLLECTION if node.is_directory else NOT_COLLECTION,
                 (DAV, 'getlastmodified'): http_date(node.mtime),
                 (OC, 'fileid'): str(node.file_id),
                 (OC, 'size'): str(len(node.content))}
        if not node.is_directory:
            props[(DAV, 'getcontentlength')] = str(len(node.content))
            props[(DAV, 'getcontenttype')] = node.content_type
            props[(DAV, 'getetag')] = '"{}"'.format(node.etag)
        return props

    def handle_trash(self, request):
        refusal = self._dav_target(request)
        if refusal is not None:
            return refusal
        account = request.account
        base = ('remote.php/dav/trashbin', account.uid, 'trash')
        path = (request.params.get('path') or '').strip('/')
        if not path:
            if request.method != 'PROPFIND':
                return Reply(405, {'Allow': 'PROPFIND'}, b'cannot GET a collection')
            own = (dav_href(*base, collection=True),
                   {(DAV, 'resourcetype'): COLLECTION})
            children = [(dav_href(*base, t.trash_name, collection=t.node.is_directory),
                         self._trash_props(t.trash_name, t.original_location,
                                           t.deletion_time, t.node, account))
                        for t in sorted(account.trash.values(), key=lambda t: t.trash_name)]
            return self._propfind(request, own, children)
        trash_name, _, relative = path.partition('/')
        trashed = account.trash.get(trash_name)
        if trashed is None:
            return Reply(404, {'Content-Type': 'text/plain'}, b'not found')
        node = trashed.node if not relative else trashed.children.get(relative)
        if node is None:
            return Reply(404, {'Content-Type': 'text/plain'}, b'not found')
        if request.method == 'PROPFIND':

            def item(rel, n):
                name = trashed.trash_name if not rel else posixpath.basename(rel)
                original = posixpath.join(trashed.original_location, rel) if rel \
                    else trashed.original_location
                return (dav_href(*base, trash_name, rel, collection=n.is_directory),
                        self._trash_props(name, original, trashed.deletion_time, n, account))
            children = [item(rel, n) for rel, n in sorted(trashed.children.items())
                        if posixpath.dirname(rel) == relative] if node.is_directory else []
            return self._propfind(request, item(relative, node), children)
        if node.is_directory:
            return Reply(405, {'Allow': 'PROPFIND'}, b'cannot GET a collection')
        return self._content(request, node.content, node.content_type, node.etag, node.mtime)

    def handle_versions(self, request):
        refusal = self._dav_target(request)
        if refusal is not None:
            return refusal
        account = request.account
        file_id = int(request.params['file_id'])
        if account.node_by_id(file_id) is None:
            return Reply(404, {'Content-Type': 'text/plain'}, b'not found')
        versions = account.versions.get(file_id, [])
        base = ('remote.php/dav/versions', account.uid, 'versions', str(file_id))

        def item(v):
            return (dav_href(*base, str(v.timestamp)),
                    {(DAV, 'getlastmodified'): http_date(v.timestamp),
                     (DAV, 'getetag'): '"{}"'.format(v.etag),
                     (DAV, 'getcontentlength'): str(len(v.content)),
                     (DAV, 'getcontenttype'): v.content_type,
                     (DAV, 'resourcetype'): NOT_COLLECTION})
        stamp = request.params.get('stamp')
        if stamp is None:
            if request.method != 'PROPFIND':
                return Reply(405, {'Allow': 'PROPFIND'}, b'cannot GET a collection')
            own = (dav_href(*base, collection=True), {(DAV, 'resourcetype'): COLLECTION})
            return self._propfind(request, own, [item(v) for v in versions])
        version = next((v for v in versions if v.timestamp == int(stamp)), None)
        if version is None:
            return Reply(404, {'Content-Type': 'text/plain'}, b'not found')
        if request.method == 'PROPFIND':
            return self._propfind(request, item(version), [])
        return self._content(request, version.content, version.content_type,
                             version.etag, version.timestamp)


class MockRequestHandler(BaseHTTPRequestHandler):
    protocol_version = 'HTTP/1.1'
    timeout = 30

    def _consume_body(self):
        length = self.headers.get('Content-Length')
        if length:
            return self.rfile.read(int(length))
        return b''

    def _handle(self):
        body = self._consume_body()
        reply = self.server.api.dispatch(self.command, self.path, dict(self.headers.items()),
                                         body)
        self.send_response(reply.status)
        for key, value in reply.headers.items():
            self.send_header(key, value)
        payload = reply.body if reply.status not in (204, 304) else b''
        self.send_header('Content-Length', str(len(payload)))
        self.end_headers()
        if self.command != 'HEAD' and payload:
            self.wfile.write(payload)

    do_GET = do_HEAD = do_PROPFIND = do_DELETE = _handle
    do_PUT = do_POST = do_PATCH = do_MOVE = do_COPY = do_PROPPATCH = _handle
    do_MKCOL = do_LOCK = do_UNLOCK = do_OPTIONS = do_REPORT = do_SEARCH = _handle

    def log_message(self, format, *args):
        logger.debug('%s - %s' % (self.address_string(), format % args))


class MockHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, api):
        self.api = api
        super(MockHTTPServer, self).__init__(address, MockRequestHandler)


class MockInstance(object):
    """Handle on a running mock: its address, state and lifecycle."""

    def __init__(self, httpd, api):
        self.httpd = httpd
        self.api = api
        self.state = api.state
        host, port = httpd.server_address[:2]
        self.base_url = 'http://{}:{}'.format(host, port)
        self._thread = threading.Thread(target=httpd.serve_forever,
                                        kwargs={'poll_interval': 0.05}, daemon=True)
        self._thread.start()

    def method_counts(self, token_id=None):
        return self.state.method_counts(token_id)

    def inject_fault(self, method, path_regex, status, count=1):
        self.state.inject_fault(method, path_regex, status, count)

    def apply(self, step):
        return apply(self.state, step)

    def schedule(self, script):
        """Time-triggered steps of `script` fire before the next request."""
        self.api.scripts.append(script)

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()
        return False


def serve(fixture=None, host='127.0.0.1', port=0):
    """
    Inputs:
    - fixture: FixtureSpec, fixture dict or path to a fixture JSON file
    - host, port: bind address; port 0 picks an ephemeral port
    Outputs:
    - MockInstance serving in a background thread
    """
    if fixture is None:
        fixture = load_fixture(DEFAULT_FIXTURE)
    elif isinstance(fixture, str):
        fixture = load_fixture(fixture)
    elif isinstance(fixture, dict):
        fixture = FixtureSpec.from_dict(fixture)
    api = MockApi(InstanceState(fixture))
    try:
        httpd = MockHTTPServer((host, port), api)
    except OSError as e:
        raise BindFailure('cannot bind {}:{}: {}'.format(host, port, e))
    instance = MockInstance(httpd, api)
    logger.info('Mock instance listening on {}'.format(instance.base_url))
    return instance


def main(argv=None):
    parser = argparse.ArgumentParser(description='Serve a mock instance from a fixture')
    parser.add_argument('--fixture', default=DEFAULT_FIXTURE, type=str)
    parser.add_argument('--host', default='127.0.0.1', type=str)
    parser.add_argument('--port', default=8080, type=int)
    parser.add_argument('--verbose', default=0, type=bool_flag)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format=FORMAT, stream=sys.stderr)
    try:
        instance = serve(args.fixture, args.host, args.port)
    except BindFailure as e:
        logger.error(str(e))
        return 1
    try:
        instance._thread.join()
    except KeyboardInterrupt:
        instance.stop()
    return 0


if __name__ == '__main__':
    sys.exit(main())
