"""
PROPFIND body construction, multistatus parsing and content retrieval for the
files, trashbin and versions WebDAV trees.
"""
import logging
import posixpath
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from email.utils import parsedate_to_datetime
from typing import Optional
from urllib.parse import unquote, urlsplit

import lxml.etree as etree

from ncforensic.errors import (
    ForensicError, InputError, NotFoundError, ParseError, PartialFailure)
from ncforensic.transport import ACQUISITION_POLICY
from ncforensic.utils import format_instant, parse_instant

logger = logging.getLogger(__name__)

DAV = 'DAV:'
OC = 'http://owncloud.org/ns'
NC = 'http://nextcloud.org/ns'
NSMAP = {'d': DAV, 'oc': OC, 'nc': NC}

FILE_PROPERTIES = [
    (DAV, 'getlastmodified'), (DAV, 'getetag'), (DAV, 'getcontenttype'),
    (DAV, 'resourcetype'), (DAV, 'getcontentlength'), (OC, 'fileid'),
    (OC, 'permissions'), (OC, 'size'), (OC, 'owner-id'),
]
FILEID_PROPERTIES = [(OC, 'fileid'), (DAV, 'resourcetype')]
TRASH_PROPERTIES = [
    (NC, 'trashbin-filename'), (NC, 'trashbin-location'),
    (NC, 'trashbin-original-location'), (NC, 'trashbin-deletion-time'),
    (DAV, 'getcontentlength'), (DAV, 'resourcetype'), (OC, 'fileid'),
    (OC, 'size'), (DAV, 'getlastmodified'),
]
VERSION_PROPERTIES = [
    (DAV, 'getlastmodified'), (DAV, 'getetag'), (DAV, 'getcontentlength'),
    (DAV, 'getcontenttype'), (DAV, 'resourcetype'),
]

MAX_WALK_WORKERS = 4
TRASH_NAME_RE = re.compile(r'^(?P<name>.+)\.d(?P<ts>\d+)$')
_STATUS_OK_RE = re.compile(r'^HTTP/\S+ 200\b', re.IGNORECASE)

XML_PARSER = etree.XMLParser(resolve_entities=False, no_network=True,
                             remove_blank_text=True)


def build_propfind_body(properties):
    """
    Inputs:
    - properties: list of (namespace, name); duplicates are dropped, order kept
    Outputs:
    - UTF-8 XML document bytes of a DAV:propfind request
    """
    if not properties:
        raise InputError('PROPFIND needs at least one property')
    unique = list(dict.fromkeys((ns, name) for ns, name in properties))
    root = etree.Element('{DAV:}propfind', nsmap=NSMAP)
    prop = etree.SubElement(root, '{DAV:}prop')
    for namespace, name in unique:
        etree.SubElement(prop, '{{{}}}{}'.format(namespace, name))
    return etree.tostring(root, xml_declaration=True, encoding='utf-8')


def parse_multistatus(content):
    """
    Inputs:
    - content: raw 207 body
    Outputs:
    - list of (href, {(namespace, name): element}) with only the properties
      reported under a 200 propstat
    """
    try:
        tree = etree.fromstring(content, parser=XML_PARSER)
    except (etree.XMLSyntaxError, ValueError) as e:
        raise ParseError('multistatus is not well-formed XML: {}'.format(e))
    if tree.tag != '{DAV:}multistatus':
        raise ParseError('expected DAV:multistatus, got {}'.format(tree.tag))
    responses = []
    for response in tree.findall('{DAV:}response'):
        href = response.findtext('{DAV:}href')
        if not href:
            raise ParseError('response element without href')
        props = {}
        for propstat in response.findall('{DAV:}propstat'):
            status = propstat.findtext('{DAV:}status') or ''
            if not _STATUS_OK_RE.match(status.strip()):
                continue
            for prop in propstat.findall('{DAV:}prop'):
                for element in prop:
                    qname = etree.QName(element)
                    props[(qname.namespace, qname.localname)] = element
        responses.append((href.strip(), props))
    return responses


def _text(props, namespace, name, default=''):
    element = props.get((namespace, name))
    if element is None or element.text is None:
        return default
    return element.text.strip()


def _int(props, namespace, name, default=0):
    value = _text(props, namespace, name)
    try:
        return int(value) if value else default
    except ValueError:
        raise ParseError('{} is not an integer: {!r}'.format(name, value))


def _is_collection(props):
    element = props.get((DAV, 'resourcetype'))
    return element is not None and element.find('{DAV:}collection') is not None


def parse_http_date(text):
    """RFC 1123 date -> aware UTC datetime, or None when unparseable."""
    if not text:
        return None
    try:
        parsed = parsedate_to_datetime(text)
    except (TypeError, ValueError, IndexError):
        return None
    if parsed is None:
        return None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def strip_etag(value):
    value = value.strip()
    if value.startswith('W/'):
        value = value[2:]
    return value.strip('"')


def decoded_path(href):
    return unquote(urlsplit(href).path)


@dataclass
class ResourceEntry:
    href: str
    file_id: int
    name: str
    relative_path: str
    is_directory: bool
    size: int
    content_type: str
    etag: str
    last_modified: Optional[datetime]
    owner_id: str = ''
    permissions: str = ''
    last_modified_raw: str = ''

    @property
    def last_modified_valid(self):
        return self.last_modified is not None or not self.last_modified_raw

    @property
    def mtime(self):
        if self.last_modified is None:
            return None
        return int(self.last_modified.timestamp())

    @classmethod
    def from_props(cls, href, props, root_path):
        path = decoded_path(href)
        relative = path[len(root_path):] if path.startswith(root_path) else path
        relative = relative.strip('/')
        is_directory = _is_collection(props)
        if is_directory:
            size = _int(props, OC, 'size')
        else:
            size = _int(props, DAV, 'getcontentlength', _int(props, OC, 'size'))
        raw_date = _text(props, DAV, 'getlastmodified')
        last_modified = parse_http_date(raw_date)
        if raw_date and last_modified is None:
            logger.warning('Unparseable getlastmodified {!r} for {}'.format(raw_date, href))
        return cls(href=href, file_id=_int(props, OC, 'fileid', -1),
                   name=posixpath.basename(relative),
                   relative_path=relative, is_directory=is_directory,
                   size=size,
                   content_type='' if is_directory else _text(props, DAV, 'getcontenttype'),
                   etag=strip_etag(_text(props, DAV, 'getetag')),
                   last_modified=last_modified,
                   owner_id=_text(props, OC, 'owner-id'),
                   permissions=_text(props, OC, 'permissions'),
                   last_modified_raw=raw_date)

    def to_dict(self):
        return {'href': self.href, 'file_id': self.file_id, 'name': self.name,
                'relative_path': self.relative_path,
                'is_directory': self.is_directory, 'size': self.size,
                'content_type': self.content_type, 'etag': self.etag,
                'last_modified': format_instant(self.last_modified),
                'owner_id': self.owner_id, 'permissions': self.permissions,
                'last_modified_raw': self.last_modified_raw}

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data['last_modified'] = parse_instant(data['last_modified'])
        return cls(**data)


@dataclass
class TrashEntry:
    trash_name: str
    original_location: str
    deletion_time: int
    size: int
    file_id: int
    href: str
    is_directory: bool

    @property
    def suffix_consistent(self):
        match = TRASH_NAME_RE.match(posixpath.basename(self.trash_name))
        return match is not None and int(match.group('ts')) == self.deletion_time

    @classmethod
    def from_props(cls, href, props):
        trash_name = (_text(props, NC, 'trashbin-filename')
                      or _text(props, NC, 'trashbin-location')
                      or posixpath.basename(decoded_path(href).rstrip('/')))
        is_directory = _is_collection(props)
        size = _int(props, OC, 'size') if is_directory else \
            _int(props, DAV, 'getcontentlength', _int(props, OC, 'size'))
        entry = cls(trash_name=trash_name,
                    original_location=_text(props, NC, 'trashbin-original-location').strip('/'),
                    deletion_time=_int(props, NC, 'trashbin-deletion-time'),
                    size=size, file_id=_int(props, OC, 'fileid', -1),
                    href=href, is_directory=is_directory)
        if not entry.suffix_consistent:
            logger.warning('Trash name {} does not encode deletion time {}'.format(
                trash_name, entry.deletion_time))
        return entry

    def to_dict(self):
        return {'trash_name': self.trash_name,
                'original_location': self.original_location,
                'deletion_time': self.deletion_time, 'size': self.size,
                'file_id': self.file_id, 'href': self.href,
                'is_directory': self.is_directory}

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class VersionEntry:
    file_id: int
    version_timestamp: int
    etag: str
    size: int
    href: str
    last_modified: Optional[datetime] = None

    @classmethod
    def from_props(cls, file_id, href, props):
        segment = decoded_path(href).rstrip('/').rsplit('/', 1)[-1]
        try:
            timestamp = int(segment)
        except ValueError:
            raise ParseError('version href does not end with a timestamp: {}'.format(href))
        return cls(file_id=file_id, version_timestamp=timestamp,
                   etag=strip_etag(_text(props, DAV, 'getetag')),
                   size=_int(props, DAV, 'getcontentlength'), href=href,
                   last_modified=parse_http_date(_text(props, DAV, 'getlastmodified')))

    def to_dict(self):
        return {'file_id': self.file_id,
                'version_timestamp': self.version_timestamp,
                'etag': self.etag, 'size': self.size, 'href': self.href,
                'last_modified': format_instant(self.last_modified)}

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data['last_modified'] = parse_instant(data['last_modified'])
        return cls(**data)


@dataclass
class WalkError:
    path: str
    error: ForensicError


class WebDavClient(object):

    def __init__(self, transport, policy=ACQUISITION_POLICY, workers=MAX_WALK_WORKERS):
        self.transport = transport
        self.policy = policy
        self.workers = max(1, min(workers, MAX_WALK_WORKERS))

    @property
    def username(self):
        return self.transport.username

    def _root_path(self, *segments):
        return urlsplit(self.transport.url(*segments)).path.rstrip('/') + '/'

    def files_root(self, username=None):
        """Decoded server path of the user's files root, with trailing '/'."""
        return unquote(self._root_path('remote.php/dav/files', username or self.username))

    def files_url(self, path='', username=None):
        url = self.transport.url('remote.php/dav/files', username or self.username, path)
        if not path.strip('/'):
            url += '/'
        return url

    def trash_url(self, username=None):
        return self.transport.url('remote.php/dav/trashbin', username or self.username, 'trash') + '/'

    def versions_url(self, file_id, username=None):
        return self.transport.url('remote.php/dav/versions', username or self.username,
                                  'versions', str(file_id)) + '/'

    def _propfind(self, url, depth, properties):
        if depth not in (0, 1):
            raise InputError('only Depth 0 and 1 are requested, got {}'.format(depth))
        headers = {'Depth': str(depth),
                   'Content-Type': 'application/xml; charset=utf-8'}
        response = self.transport.execute(
            'PROPFIND', url, self.policy, headers=headers,
            body=build_propfind_body(properties))
        if response.status != 207:
            raise ParseError('PROPFIND {} answered {} instead of 207'.format(
                url, response.status))
        return parse_multistatus(response.body)

    def propfind_href(self, href, depth, properties=None, username=None):
        responses = self._propfind(self.transport.url_for_href(href), depth,
                                   properties or FILE_PROPERTIES)
        return self._entries(responses, href, username)

    def propfind(self, path, depth, properties=None, username=None):
        """
        Depth 0 -> exactly the addressed resource; depth 1 -> the resource
        followed by its immediate children.
        """
        url = self.files_url(path, username)
        responses = self._propfind(url, depth, properties or FILE_PROPERTIES)
        return self._entries(responses, urlsplit(url).path, username)

    def _entries(self, responses, requested_href, username):
        root = self.files_root(username)
        entries = [ResourceEntry.from_props(href, props, root)
                   for href, props in responses]
        target = decoded_path(requested_href).rstrip('/')
        entries.sort(key=lambda e: decoded_path(e.href).rstrip('/') != target)
        return entries

    def walk(self, root_path='', errors=None, properties=None, username=None):
        """
        Yield every resource under root_path exactly once, parents before
        children, using depth-1 PROPFINDs (at most `workers` in flight).

        Failing sub-listings are appended to `errors` as WalkError; without an
        `errors` list they are raised as PartialFailure after the rest of the
        tree has been emitted.
        """
        failures = [] if errors is None else errors
        listing = self.propfind(root_path, 1, properties, username)
        seen = set()
        root_entry, frontier = listing[0], listing[1:]
        seen.add(root_entry.href.rstrip('/'))
        yield root_entry
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            while frontier:
                fresh = []
                for entry in frontier:
                    key = entry.href.rstrip('/')
                    if key in seen:
                        continue
                    seen.add(key)
                    fresh.append(entry)
                    yield entry
                directories = [e for e in fresh if e.is_directory]
                futures = [pool.submit(self.propfind_href, d.href, 1, properties, username)
                           for d in directories]
                frontier = []
                for directory, future in zip(directories, futures):
                    try:
                        frontier.extend(future.result()[1:])
                    except ForensicError as e:
                        logger.warning('Listing {} failed: {}'.format(directory.relative_path, e))
                        failures.append(WalkError(directory.relative_path, e))
        if errors is None and failures:
            raise PartialFailure('walk of {!r}'.format(root_path),
                                 [(f.path, str(f.error)) for f in failures])

    def get_content(self, href):
        response = self.transport.execute('GET', self.transport.url_for_href(href), self.policy)
        return response.body

    def download(self, href, fileobj):
        """Stream content into fileobj. Returns (byte_length, sha256)."""
        response = self.transport.execute('GET', self.transport.url_for_href(href),
                                          self.policy, sink=fileobj)
        return response.byte_length, response.digest

    def list_trash(self, username=None):
        url = self.trash_url(username)
        responses = self._propfind(url, 1, TRASH_PROPERTIES)
        own = urlsplit(url).path.rstrip('/')
        return [TrashEntry.from_props(href, props) for href, props in responses
                if decoded_path(href).rstrip('/') != unquote(own)]

    def walk_trash(self, entry):
        """
        Enumerate the content of a trashed directory. Children inherit the
        deletion time; names and locations are built relative to the parent.
        """
        pending = [entry]
        while pending:
            parent = pending.pop(0)
            responses = self._propfind(self.transport.url_for_href(parent.href), 1,
                                       TRASH_PROPERTIES)
            own = decoded_path(parent.href).rstrip('/')
            for href, props in responses:
                if decoded_path(href).rstrip('/') == own:
                    continue
                name = posixpath.basename(decoded_path(href).rstrip('/'))
                child = TrashEntry(
                    trash_name=parent.trash_name + '/' + name,
                    original_location=posixpath.join(parent.original_location, name),
                    deletion_time=parent.deletion_time,
                    size=_int(props, DAV, 'getcontentlength', _int(props, OC, 'size')),
                    file_id=_int(props, OC, 'fileid', -1), href=href,
                    is_directory=_is_collection(props))
                yield child
                if child.is_directory:
                    pending.append(child)

    def list_versions(self, file_id, username=None):
        url = self.versions_url(file_id, username)
        responses = self._propfind(url, 1, VERSION_PROPERTIES)
        own = unquote(urlsplit(url).path).rstrip('/')
        versions = [VersionEntry.from_props(file_id, href, props)
                    for href, props in responses
                    if decoded_path(href).rstrip('/') != own]
        versions.sort(key=lambda v: v.version_timestamp, reverse=True)
        return versions

    def version_content(self, version):
        return self.get_content(version.href)

    def resolve_file_id(self, file_id, root_path=''):
        if file_id < 0:
            raise InputError('file id must be >= 0')
        for entry in self.walk(root_path, errors=[], properties=FILEID_PROPERTIES):
            if entry.file_id == file_id:
                return entry.relative_path
        raise NotFoundError('no resource with file id {}'.format(file_id))
