"""
Declarative fixtures for the mock instance and the mutable state built from
them. A fixture is a JSON document (see configs/forensic_case.json):

    {"server": {"version": "23.0.0", "capabilities": {...}},
     "clock": null,
     "users": [{"uid": ..., "admin": true, "tokens": [...], "files": [...],
                "trash": [...], "versions": [...], "shares": [...],
                "activities": [...]}]}

File contents are given as "content" (UTF-8 text) or "content_b64".
"""
import base64
import copy
import hashlib
import json
import logging
import os
import posixpath
import random
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from ncforensic.errors import InputError, NotFoundError
from ncforensic.webdav import TRASH_NAME_RE

logger = logging.getLogger(__name__)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), 'configs')
DEFAULT_FIXTURE = os.path.join(CONFIG_DIR, 'forensic_case.json')

TOKEN_BROWSER = 0
TOKEN_APP = 1


def load_fixture(path=DEFAULT_FIXTURE):
    with open(path, 'r', encoding='utf-8') as fp:
        return FixtureSpec.from_dict(json.load(fp))


def decode_content(item):
    if 'content_b64' in item:
        return base64.b64decode(item['content_b64'])
    return item.get('content', '').encode('utf-8')


def make_etag(*parts):
    seed = ':'.join(str(p) for p in parts)
    return hashlib.md5(seed.encode('utf-8')).hexdigest()[:13]


@dataclass
class FixtureSpec:
    users: List[dict]
    version: str = '23.0.0'
    capabilities: dict = field(default_factory=dict)
    clock: Optional[int] = None

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, data):
        server = data.get('server') or {}
        return cls(users=copy.deepcopy(data.get('users') or []),
                   version=server.get('version', '23.0.0'),
                   capabilities=copy.deepcopy(server.get('capabilities') or {}),
                   clock=data.get('clock'))

    def to_dict(self):
        return {'server': {'version': self.version,
                           'capabilities': copy.deepcopy(self.capabilities)},
                'clock': self.clock, 'users': copy.deepcopy(self.users)}

    def user(self, uid):
        for user in self.users:
            if user['uid'] == uid:
                return user
        raise NotFoundError('fixture has no user {}'.format(uid))

    def validate(self):
        uids = [u.get('uid') for u in self.users]
        if not all(uids) or len(set(uids)) != len(uids):
            raise InputError('fixture user ids must be present and unique')
        token_ids = [t['id'] for u in self.users for t in u.get('tokens', [])]
        if len(set(token_ids)) != len(token_ids):
            raise InputError('fixture token ids must be unique')
        for user in self.users:
            file_ids = [f['file_id'] for f in user.get('files', []) if 'file_id' in f]
            if len(set(file_ids)) != len(file_ids):
                raise InputError('duplicate file ids for {}'.format(user['uid']))
            for item in user.get('trash', []):
                match = TRASH_NAME_RE.match(item['trash_name'])
                if match is None or int(match.group('ts')) != item['deletion_time']:
                    raise InputError('trash name {} does not encode {}'.format(
                        item['trash_name'], item['deletion_time']))
            stamps = [(v['file_id'], v['timestamp']) for v in user.get('versions', [])]
            if len(set(stamps)) != len(stamps):
                raise InputError('version timestamps must be unique per file')

    def file_paths(self, uid, directories=True):
        """Relative paths of the seeded tree. Parents are included unless
        `directories` is false, which leaves only regular files."""
        paths = set()
        for item in self.user(uid).get('files', []):
            path = item['path'].strip('/')
            if not directories:
                if not item.get('dir', False):
                    paths.add(path)
                continue
            while path:
                paths.add(path)
                path = posixpath.dirname(path)
        return paths


def _explicit_file_ids(spec):
    ids = [spec['root_id']] if spec.get('root_id') is not None else []
    for item in spec.get('files', []) + spec.get('trash', []):
        if item.get('file_id') is not None:
            ids.append(item['file_id'])
        for child in item.get('children', []):
            if child.get('file_id') is not None:
                ids.append(child['file_id'])
    return ids


class Clock(object):
    """Wall clock unless pinned with set()."""

    def __init__(self, fixed=None):
        self.fixed = fixed

    def now(self):
        if self.fixed is not None:
            return int(self.fixed)
        return int(time.time())

    def set(self, instant):
        self.fixed = int(instant)

    def advance(self, seconds):
        self.fixed = self.now() + int(seconds)

    def release(self):
        self.fixed = None


@dataclass
class FileNode:
    path: str
    file_id: int
    is_directory: bool
    content: bytes = b''
    mtime: int = 0
    content_type: str = 'application/octet-stream'
    revision: int = 0

    @property
    def name(self):
        return posixpath.basename(self.path)

    @property
    def etag(self):
        return make_etag(self.file_id, self.revision, hashlib.sha256(self.content).hexdigest())


@dataclass
class TrashNode:
    trash_name: str
    original_location: str
    deletion_time: int
    node: FileNode
    # descendants of a trashed directory, keyed by path relative to it
    children: Dict[str, FileNode] = field(default_factory=dict)


@dataclass
class Version:
    file_id: int
    timestamp: int
    content: bytes
    content_type: str = 'application/octet-stream'

    @property
    def etag(self):
        return make_etag(self.file_id, 'v', self.timestamp)


@dataclass
class Token:
    token_id: int
    name: str
    token_type: int
    password: str
    last_activity: int = 0


@dataclass
class Share:
    share_id: int
    share_type: int
    path: str
    permissions: int
    stime: int
    share_with: Optional[str] = None
    token: Optional[str] = None
    expiration: Optional[str] = None
    password: bool = False
    note: str = ''


@dataclass
class Activity:
    activity_id: int
    type: str
    user: str
    affected_user: str
    subject: str
    object_id: int
    object_name: str
    timestamp: int


@dataclass
class Account:
    uid: str
    display_name: str
    email: Optional[str]
    admin: bool
    groups: List[str]
    last_login: int
    enabled: bool
    quota_total: int
    quota_used: Optional[int]
    tokens: Dict[int, Token] = field(default_factory=dict)
    files: Dict[str, FileNode] = field(default_factory=dict)
    trash: Dict[str, TrashNode] = field(default_factory=dict)
    versions: Dict[int, List[Version]] = field(default_factory=dict)
    shares: List[Share] = field(default_factory=list)

    @property
    def used(self):
        if self.quota_used is not None:
            return self.quota_used
        return sum(len(n.content) for n in self.files.values() if not n.is_directory)

    def children(self, path):
        return sorted((n for p, n in self.files.items()
                       if p and posixpath.dirname(p) == path), key=lambda n: n.path)

    def subtree(self, path):
        prefix = path + '/' if path else ''
        return [n for p, n in self.files.items() if p == path or p.startswith(prefix)]

    def node_by_id(self, file_id):
        for node in self.files.values():
            if node.file_id == file_id:
                return node
        return None

    def dir_etag(self, node):
        parts = [node.file_id] + [c.etag if not c.is_directory else self.dir_etag(c)
                                  for c in self.children(node.path)]
        return make_etag(*parts)

    def tree_size(self, node):
        if not node.is_directory:
            return len(node.content)
        return sum(len(n.content) for n in self.subtree(node.path) if not n.is_directory)

    def tree_mtime(self, node):
        return max([node.mtime] + [n.mtime for n in self.subtree(node.path)])


class InstanceState(object):
    """
    Mutable server state. Every read and write holds `lock`, so scripted
    mutations land between client requests.
    """

    def __init__(self, fixture):
        self.fixture = fixture
        self.lock = threading.RLock()
        self.clock = Clock(fixture.clock)
        self.version = fixture.version
        self.capabilities = fixture.capabilities
        self.accounts = {}
        self.activities = []
        self.counts = {}
        self.faults = []
        self._file_ids = 1000
        self._activity_ids = 0
        self._token_ids = 0
        self._share_ids = 0
        for spec in fixture.users:
            for key in _explicit_file_ids(spec):
                self._reserve_file_id(key)
        for spec in fixture.users:
            self._load_account(spec)

    def _load_account(self, spec):
        quota = spec.get('quota') or {}
        account = Account(uid=spec['uid'],
                          display_name=spec.get('display_name', spec['uid']),
                          email=spec.get('email'), admin=bool(spec.get('admin', False)),
                          groups=list(spec.get('groups') or []),
                          last_login=int(spec.get('last_login', 0)),
                          enabled=bool(spec.get('enabled', True)),
                          quota_total=int(quota.get('total', 10 * 1024 ** 3)),
                          quota_used=quota.get('used'))
        now = self.clock.now()
        root_id = spec.get('root_id')
        if root_id is None:
            root_id = self.next_file_id()
        self._reserve_file_id(root_id)
        account.files[''] = FileNode('', root_id, True, mtime=spec.get('root_mtime', now))
        for item in sorted(spec.get('files', []), key=lambda i: i['path'].count('/')):
            path = item['path'].strip('/')
            self._ensure_parents(account, path, item.get('mtime', now))
            file_id = item.get('file_id')
            if file_id is None:
                file_id = self.next_file_id()
            self._reserve_file_id(file_id)
            is_directory = bool(item.get('dir', False))
            account.files[path] = FileNode(
                path, file_id, is_directory,
                content=b'' if is_directory else decode_content(item),
                mtime=int(item.get('mtime', now)),
                content_type=item.get('content_type', 'application/octet-stream'))
        for item in spec.get('trash', []):
            file_id = item.get('file_id')
            if file_id is None:
                file_id = self.next_file_id()
            self._reserve_file_id(file_id)
            original = item['original_location'].strip('/')
            node = FileNode(original, file_id, bool(item.get('dir', False)),
                            content=decode_content(item),
                            mtime=int(item.get('mtime', item['deletion_time'])),
                            content_type=item.get('content_type', 'application/octet-stream'))
            trashed = TrashNode(item['trash_name'], original, int(item['deletion_time']), node)
            for child in item.get('children', []):
                child_id = child.get('file_id')
                if child_id is None:
                    child_id = self.next_file_id()
                self._reserve_file_id(child_id)
                relative = child['path'].strip('/')
                trashed.children[relative] = FileNode(
                    posixpath.join(original, relative), child_id,
                    bool(child.get('dir', False)), content=decode_content(child),
                    mtime=int(child.get('mtime', item['deletion_time'])))
            account.trash[trashed.trash_name] = trashed
        for item in spec.get('versions', []):
            account.versions.setdefault(item['file_id'], []).append(
                Version(item['file_id'], int(item['timestamp']), decode_content(item),
                        item.get('content_type', 'application/octet-stream')))
        for item in spec.get('tokens', []):
            token = Token(int(item['id']), item.get('name', ''),
                          int(item.get('type', TOKEN_APP)), item['password'],
                          int(item.get('last_activity', now)))
            account.tokens[token.token_id] = token
            self._token_ids = max(self._token_ids, token.token_id)
        for item in spec.get('shares', []):
            share = Share(int(item['id']), int(item['share_type']), item['path'],
                          int(item.get('permissions', 1)), int(item.get('stime', now)),
                          share_with=item.get('share_with'), token=item.get('token'),
                          expiration=item.get('expiration'),
                          password=bool(item.get('password', False)),
                          note=item.get('note', ''))
            account.shares.append(share)
            self._share_ids = max(self._share_ids, share.share_id)
        for item in spec.get('activities', []):
            activity = Activity(int(item['activity_id']), item['type'],
                                item.get('user', account.uid), account.uid,
                                item.get('subject', ''), int(item['object_id']),
                                item.get('object_name', ''), int(item['timestamp']))
            self.activities.append(activity)
            self._activity_ids = max(self._activity_ids, activity.activity_id)
        self.accounts[account.uid] = account

    def _ensure_parents(self, account, path, mtime):
        parent = posixpath.dirname(path)
        missing = []
        while parent and parent not in account.files:
            missing.append(parent)
            parent = posixpath.dirname(parent)
        for directory in reversed(missing):
            account.files[directory] = FileNode(directory, self.next_file_id(), True,
                                                mtime=mtime)

    def _reserve_file_id(self, file_id):
        self._file_ids = max(self._file_ids, int(file_id))

    def next_file_id(self):
        self._file_ids += 1
        return self._file_ids

    def account(self, uid):
        try:
            return self.accounts[uid]
        except KeyError:
            raise NotFoundError('no account {}'.format(uid))

    # -- authentication and accounting --------------------------------------

    def authenticate(self, username, password):
        """(account, token) for a live app password, else None."""
        account = self.accounts.get(username)
        if account is None or not account.enabled:
            return None
        for token in account.tokens.values():
            if token.password == password:
                return account, token
        return None

    def count(self, token_id, method):
        with self.lock:
            self.counts.setdefault(token_id, Counter())[method] += 1

    def method_counts(self, token_id=None):
        """
        Methods received so far. With `token_id` only the requests that
        token authenticated; otherwise the total over every caller.
        """
        with self.lock:
            if token_id is not None:
                return Counter(self.counts.get(token_id, Counter()))
            total = Counter()
            for counts in self.counts.values():
                total.update(counts)
            return total

    def inject_fault(self, method, path_regex, status, count=1):
        """The next `count` matching requests are answered with `status`."""
        with self.lock:
            self.faults.append({'method': method.upper(), 'pattern': re.compile(path_regex),
                                'status': int(status), 'remaining': int(count)})

    def take_fault(self, method, path):
        with self.lock:
            for fault in self.faults:
                if fault['remaining'] <= 0:
                    continue
                if fault['method'] not in (method, '*'):
                    continue
                if fault['pattern'].search(path):
                    fault['remaining'] -= 1
                    return fault['status']
        return None

    # -- state changes ------------------------------------------------------

    def _activity(self, account, kind, node, subject):
        self._activity_ids += 1
        self.activities.append(Activity(self._activity_ids, kind, account.uid, account.uid,
                                        subject, node.file_id, '/' + node.path,
                                        self.clock.now()))

    def create_file(self, uid, path, content=b'', is_directory=False,
                    content_type='application/octet-stream'):
        with self.lock:
            account = self.account(uid)
            path = path.strip('/')
            if path in account.files:
                raise InputError('{} already exists'.format(path))
            now = self.clock.now()
            self._ensure_parents(account, path, now)
            node = FileNode(path, self.next_file_id(), is_directory,
                            content=b'' if is_directory else content, mtime=now,
                            content_type=content_type)
            account.files[path] = node
            self._activity(account, 'file_created', node, 'You created {}'.format(path))
            return node

    def modify_file(self, uid, path, content):
        """The previous content becomes a version stamped with its mtime."""
        with self.lock:
            account = self.account(uid)
            node = account.files.get(path.strip('/'))
            if node is None or node.is_directory:
                raise NotFoundError('no file {}'.format(path))
            versions = account.versions.setdefault(node.file_id, [])
            stamp = node.mtime
            taken = set(v.timestamp for v in versions)
            while stamp in taken:
                stamp += 1
            versions.append(Version(node.file_id, stamp, node.content, node.content_type))
            node.content = content
            node.revision += 1
            node.mtime = max(self.clock.now(), stamp + 1)
            self._activity(account, 'file_changed', node, 'You changed {}'.format(node.path))
            return node

    def delete_to_trash(self, uid, path):
        with self.lock:
            account = self.account(uid)
            path = path.strip('/')
            node = account.files.get(path)
            if node is None or not path:
                raise NotFoundError('no resource {}'.format(path))
            now = self.clock.now()
            trash_name = '{}.d{}'.format(node.name, now)
            if trash_name in account.trash:
                raise InputError('{} is already in the trash'.format(trash_name))
            trashed = TrashNode(trash_name, path, now, node)
            for descendant in account.subtree(path):
                if descendant.path != path:
                    trashed.children[descendant.path[len(path) + 1:]] = descendant
                del account.files[descendant.path]
            account.trash[trash_name] = trashed
            self._activity(account, 'file_deleted', node, 'You deleted {}'.format(path))
            return trashed

    def empty_trash(self, uid):
        with self.lock:
            account = self.account(uid)
            purged = len(account.trash)
            account.trash.clear()
            return purged

    def add_token(self, uid, name, password, token_type=TOKEN_APP):
        with self.lock:
            account = self.account(uid)
            self._token_ids += 1
            token = Token(self._token_ids, name, token_type, password, self.clock.now())
            account.tokens[token.token_id] = token
            return token

    def remove_token(self, uid, token_id):
        with self.lock:
            account = self.account(uid)
            if account.tokens.pop(int(token_id), None) is None:
                raise NotFoundError('no token {}'.format(token_id))

    def add_share(self, uid, path, share_type, share_with=None, token=None,
                  permissions=1):
        with self.lock:
            account = self.account(uid)
            self._share_ids += 1
            share = Share(self._share_ids, int(share_type), '/' + path.strip('/'),
                          int(permissions), self.clock.now(), share_with=share_with,
                          token=token)
            account.shares.append(share)
            return share


def random_fixture(seed, max_depth=6, max_nodes=200, uid='admin', password='app-password',
                   clock=None):
    """
    A single-user fixture with a random tree of at most `max_nodes` resources
    nested at most `max_depth` levels deep.
    """
    rng = random.Random(seed)
    target = rng.randint(1, max_nodes)
    directories = ['']
    files = []
    while len(files) < target:
        parent = rng.choice(directories)
        depth = parent.count('/') + 1 if parent else 0
        name = '{}{}'.format(rng.choice(['doc', 'img', 'note', 'dir', 'x y', 'ü']), len(files))
        path = posixpath.join(parent, name) if parent else name
        if depth + 1 < max_depth and rng.random() < 0.3:
            directories.append(path)
            files.append({'path': path, 'dir': True})
        else:
            size = rng.randint(0, 64)
            files.append({'path': path,
                          'content_b64': base64.b64encode(rng.randbytes(size)).decode('ascii')})
    return FixtureSpec.from_dict({
        'clock': clock,
        'users': [{'uid': uid, 'admin': True,
                   'tokens': [{'id': 1, 'name': 'ncforensic', 'type': TOKEN_APP,
                               'password': password}],
                   'files': files}]})
