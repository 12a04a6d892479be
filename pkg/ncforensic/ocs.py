"""
Typed client for the OCS endpoints: users, capabilities, activity, shares.
All calls are GETs with the OCS opt-in header and `format=json`.
"""
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import List, Optional

from ncforensic.errors import AuthFailed, Forbidden, InputError, NotFoundError, ParseError
from ncforensic.transport import ACQUISITION_POLICY
from ncforensic.utils import format_instant, parse_instant

logger = logging.getLogger(__name__)

OCS_HEADERS = {'OCS-APIRequest': 'true', 'Accept': 'application/json'}
OCS_OK = (100, 200)

CURRENT_USER = 'ocs/v2.php/cloud/user'
USERS = 'ocs/v1.php/cloud/users'
USER = 'ocs/v2.php/cloud/users/{}'
USER_DETAILS = 'ocs/v2.php/cloud/users/details'
CAPABILITIES = 'ocs/v1.php/cloud/capabilities'
ACTIVITY_FILTER = 'ocs/v2.php/apps/activity/api/v2/activity/filter'
SHARES = 'ocs/v2.php/apps/files_sharing/api/v1/shares'

ACTIVITY_PAGE_SIZE = 50

SHARE_TYPE_USER = 0
SHARE_TYPE_LINK = 3


def parse_envelope(body, url=''):
    """
    Inputs:
    - body: raw bytes of an OCS response in JSON format
    Outputs:
    - the `data` member of the envelope

    Unknown statuscodes fail closed with ParseError.
    """
    try:
        document = json.loads(body.decode('utf-8'))
        meta = document['ocs']['meta']
        data = document['ocs']['data']
        statuscode = int(meta['statuscode'])
    except (ValueError, KeyError, TypeError, AttributeError) as e:
        raise ParseError('malformed OCS envelope from {}: {}'.format(url, e))
    if statuscode in OCS_OK:
        return data
    message = meta.get('message') or ''
    if statuscode == 997:
        raise Forbidden(statuscode, url, message)
    if statuscode in (998, 404):
        raise NotFoundError('{} ({})'.format(url, message))
    if statuscode == 403:
        raise Forbidden(statuscode, url, message)
    if statuscode == 401:
        raise AuthFailed(statuscode, url, message)
    raise ParseError('unknown OCS statuscode {} from {}'.format(statuscode, url))


@dataclass
class Quota:
    free: int = 0
    used: int = 0
    total: int = 0
    relative: float = 0.0

    def to_dict(self):
        return {'free': self.free, 'used': self.used, 'total': self.total,
                'relative': self.relative}


@dataclass
class UserInfo:
    uid: str
    display_name: str
    email: Optional[str] = None
    quota: Quota = field(default_factory=Quota)
    groups: List[str] = field(default_factory=list)
    last_login: int = 0
    enabled: bool = True

    def __post_init__(self):
        if not self.uid:
            raise ParseError('user record without uid')
        if self.quota.used < 0:
            raise ParseError('negative quota usage for {}'.format(self.uid))
        if self.quota.total >= 0 and self.quota.used > self.quota.total:
            raise ParseError('quota usage exceeds total for {}'.format(self.uid))

    @classmethod
    def from_ocs(cls, data):
        raw_quota = data.get('quota') or {}
        if not isinstance(raw_quota, dict):
            raw_quota = {}
        used = int(raw_quota.get('used', 0) or 0)
        total = int(raw_quota.get('total', 0) or 0)
        relative = raw_quota.get('relative')
        if relative is None:
            relative = round(used * 100.0 / total, 2) if total > 0 else 0.0
        quota = Quota(free=int(raw_quota.get('free', 0) or 0), used=used,
                      total=total, relative=float(relative))
        display_name = data.get('displayname', data.get('display-name', ''))
        return cls(uid=data.get('id', ''), display_name=display_name or '',
                   email=data.get('email') or None, quota=quota,
                   groups=list(data.get('groups') or []),
                   last_login=int(data.get('lastLogin', 0) or 0),
                   enabled=bool(data.get('enabled', True)))

    def to_dict(self):
        return {'uid': self.uid, 'display_name': self.display_name,
                'email': self.email, 'quota': self.quota.to_dict(),
                'groups': list(self.groups), 'last_login': self.last_login,
                'enabled': self.enabled}

    @classmethod
    def from_dict(cls, data):
        return cls(uid=data['uid'], display_name=data['display_name'],
                   email=data.get('email'), quota=Quota(**data['quota']),
                   groups=list(data['groups']), last_login=data['last_login'],
                   enabled=data['enabled'])


@dataclass
class ServerVersion:
    major: int
    minor: int
    micro: int
    string: str


@dataclass
class ServerCapabilities:
    version: ServerVersion
    capability_map: dict
    raw: bytes = field(default=b'', repr=False, compare=False)

    def __post_init__(self):
        if self.version.major < 0:
            raise ParseError('negative major version')

    def to_dict(self):
        return {'version': {'major': self.version.major,
                            'minor': self.version.minor,
                            'micro': self.version.micro,
                            'string': self.version.string},
                'capabilities': self.capability_map}

    @classmethod
    def from_dict(cls, data):
        return cls(version=ServerVersion(**data['version']),
                   capability_map=data['capabilities'])


@dataclass
class ActivityEntry:
    activity_id: int
    type: str
    subject: str
    timestamp: datetime
    object_id: int
    user: str
    affected_user: str

    @classmethod
    def from_ocs(cls, data):
        try:
            timestamp = datetime.fromisoformat(data['datetime'])
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError('activity {} has no exact timestamp: {}'.format(
                data.get('activity_id'), e))
        if timestamp.tzinfo is None:
            timestamp = timestamp.replace(tzinfo=timezone.utc)
        return cls(activity_id=int(data['activity_id']),
                   type=data.get('type', ''),
                   subject=data.get('subject', ''),
                   timestamp=timestamp.astimezone(timezone.utc),
                   object_id=int(data.get('object_id', 0) or 0),
                   user=data.get('user', ''),
                   affected_user=data.get('affecteduser', ''))

    def to_dict(self):
        return {'activity_id': self.activity_id, 'type': self.type,
                'subject': self.subject,
                'timestamp': format_instant(self.timestamp),
                'object_id': self.object_id, 'user': self.user,
                'affected_user': self.affected_user}

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data['timestamp'] = parse_instant(data['timestamp'])
        return cls(**data)


@dataclass
class ShareEntry:
    share_id: int
    share_type: int
    path: str
    stime: int
    permissions: int
    shared_with: Optional[str] = None
    token: Optional[str] = None
    expiration: Optional[str] = None
    password_protected: bool = False
    note: Optional[str] = None
    url: Optional[str] = None

    def __post_init__(self):
        if self.share_type == SHARE_TYPE_LINK and (not self.token or self.shared_with):
            raise ParseError('link share {} must carry a token and no recipient'.format(
                self.share_id))
        if self.share_type == SHARE_TYPE_USER and not self.shared_with:
            raise ParseError('user share {} has no recipient'.format(self.share_id))

    @classmethod
    def from_ocs(cls, data, base_url):
        share_type = int(data['share_type'])
        token = data.get('token') or None
        shared_with = data.get('share_with') or None
        if share_type == SHARE_TYPE_LINK:
            # link shares echo the token in share_with on some servers
            shared_with = None
        url = None
        if share_type == SHARE_TYPE_LINK and token:
            url = base_url + '/index.php/s/' + token
        return cls(share_id=int(data['id']), share_type=share_type,
                   path=data.get('path', ''), stime=int(data.get('stime', 0) or 0),
                   permissions=int(data.get('permissions', 0) or 0),
                   shared_with=shared_with, token=token,
                   expiration=data.get('expiration') or None,
                   password_protected=bool(data.get('password')),
                   note=data.get('note') or None, url=url)

    def to_dict(self):
        return {'share_id': self.share_id, 'share_type': self.share_type,
                'shared_with': self.shared_with, 'stime': self.stime,
                'path': self.path, 'token': self.token,
                'permissions': self.permissions, 'expiration': self.expiration,
                'password_protected': self.password_protected,
                'note': self.note, 'url': self.url}

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


class OcsClient(object):

    def __init__(self, transport, policy=ACQUISITION_POLICY):
        self.transport = transport
        self.policy = policy

    def _get(self, path, params=None):
        query = {'format': 'json'}
        if params:
            query.update(params)
        url = self.transport.url(path)
        response = self.transport.execute('GET', url, self.policy,
                                          headers=OCS_HEADERS, params=query)
        return response

    def _data(self, path, params=None):
        response = self._get(path, params)
        return parse_envelope(response.body, response.url), response

    def get_current_user(self):
        data, _ = self._data(CURRENT_USER)
        return UserInfo.from_ocs(data)

    def list_users(self):
        data, _ = self._data(USERS)
        try:
            return list(data['users'])
        except (KeyError, TypeError):
            raise ParseError('user listing without users member')

    def get_user(self, username):
        data, _ = self._data(USER.format(username))
        return UserInfo.from_ocs(data)

    def search_users(self, term):
        if not term:
            raise InputError('search term must not be empty')
        data, _ = self._data(USER_DETAILS, {'search': term})
        users = (data or {}).get('users') or {}
        if isinstance(users, dict):
            users = list(users.values())
        return [UserInfo.from_ocs(u) for u in users]

    def get_capabilities(self):
        data, response = self._data(CAPABILITIES)
        try:
            version = data['version']
            server_version = ServerVersion(
                major=int(version['major']), minor=int(version['minor']),
                micro=int(version['micro']), string=str(version['string']))
        except (KeyError, TypeError, ValueError):
            raise ParseError('capabilities response without a version block')
        return ServerCapabilities(version=server_version,
                                  capability_map=data.get('capabilities') or {},
                                  raw=response.body)

    def get_file_activity(self, object_id, since=None, limit=None):
        """
        Newest-first activity for one file id, paginating until exhausted or
        `limit` entries are collected. A 304 answer means no activity.
        """
        if object_id < 0:
            raise InputError('object_id must be >= 0')
        entries = []
        seen = set()
        cursor = since
        while True:
            page_size = ACTIVITY_PAGE_SIZE
            if limit is not None:
                page_size = min(page_size, limit - len(entries))
                if page_size <= 0:
                    break
            params = {'object_type': 'files', 'object_id': object_id,
                      'limit': page_size, 'sort': 'desc'}
            if cursor is not None:
                params['since'] = cursor
            response = self._get(ACTIVITY_FILTER, params)
            if response.status == 304:
                break
            data = parse_envelope(response.body, response.url)
            page = [ActivityEntry.from_ocs(item) for item in (data or [])]
            fresh = [e for e in page if e.activity_id not in seen]
            for entry in fresh:
                seen.add(entry.activity_id)
            entries.extend(fresh)
            if len(page) < page_size or not fresh:
                break
            cursor = min(e.activity_id for e in page)
        entries.sort(key=lambda e: (e.timestamp, e.activity_id), reverse=True)
        if limit is not None:
            entries = entries[:limit]
        logger.debug('{} activity entries for object {}'.format(len(entries), object_id))
        return entries

    def list_shares(self, include_reshares=False, shared_with_me=False,
                    subfiles_of=None):
        if shared_with_me and subfiles_of is not None:
            raise InputError('shared_with_me and subfiles_of are exclusive')
        params = {}
        if include_reshares:
            params['reshares'] = 'true'
        if shared_with_me:
            params['shared_with_me'] = 'true'
        if subfiles_of is not None:
            params['path'] = '/' + subfiles_of.strip('/')
            params['subfiles'] = 'true'
        data, _ = self._data(SHARES, params)
        return [ShareEntry.from_ocs(item, self.transport.base_url)
                for item in (data or [])]
