"""
Device sessions: enumerate app tokens / browser sessions and revoke them.
This is the only client that sends a mutating method (DELETE), always under
the session-control policy.
"""
import logging
from dataclasses import dataclass, field

from ncforensic.errors import ForensicError, NotFoundError, PartialFailure, RefusingSelf
from ncforensic.ocs import OCS_HEADERS, parse_envelope
from ncforensic.transport import ACQUISITION_POLICY, SESSION_CONTROL_POLICY

logger = logging.getLogger(__name__)

APPTOKENS = 'ocs/v2.php/core/apptokens'
APPPASSWORD = 'ocs/v2.php/core/apppassword'

SESSION_TYPES = {0: 'browser', 1: 'app'}


@dataclass
class DeviceSession:
    token_id: int
    agent_name: str
    session_type: str
    last_activity: int
    is_current: bool = False
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_ocs(cls, data):
        try:
            kind = SESSION_TYPES.get(int(data.get('type')), 'unknown')
        except (TypeError, ValueError):
            kind = 'unknown'
        return cls(token_id=int(data['id']), agent_name=data.get('name', ''),
                   session_type=kind,
                   last_activity=int(data.get('lastActivity', 0) or 0),
                   is_current=bool(data.get('current', False)), raw=dict(data))

    def to_dict(self):
        return {'token_id': self.token_id, 'agent_name': self.agent_name,
                'session_type': self.session_type,
                'last_activity': self.last_activity,
                'is_current': self.is_current}

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class Confirmation:
    token_id: int
    status: int
    self_revoked: bool = False

    def to_dict(self):
        return {'token_id': self.token_id, 'status': self.status,
                'self_revoked': self.self_revoked}


class SessionControl(object):

    def __init__(self, transport, read_policy=ACQUISITION_POLICY,
                 write_policy=SESSION_CONTROL_POLICY):
        self.transport = transport
        self.read_policy = read_policy
        self.write_policy = write_policy

    def list_sessions(self, policy=None):
        response = self.transport.execute(
            'GET', self.transport.url(APPTOKENS), policy or self.read_policy,
            headers=OCS_HEADERS, params={'format': 'json'})
        data = parse_envelope(response.body, response.url)
        sessions = [DeviceSession.from_ocs(item) for item in (data or [])]
        sessions.sort(key=lambda s: (s.last_activity, s.token_id), reverse=True)
        return sessions

    def revoke_session(self, token_id, force=False, listing=None):
        """
        Revoke one session. The caller's own token is refused unless `force`;
        forced self-revocation goes through the app-password endpoint.
        """
        if listing is None:
            listing = self.list_sessions(self.write_policy)
        target = next((s for s in listing if s.token_id == token_id), None)
        if target is None:
            raise NotFoundError('no session with token id {}'.format(token_id))
        if target.is_current and not force:
            raise RefusingSelf('token {} authenticates this tool; pass force to revoke it'.format(
                token_id))
        if target.is_current:
            url = self.transport.url(APPPASSWORD)
        else:
            url = self.transport.url(APPTOKENS, str(token_id))
        response = self.transport.execute('DELETE', url, self.write_policy,
                                          headers=OCS_HEADERS, params={'format': 'json'})
        parse_envelope(response.body, response.url)
        logger.info('Revoked session {} ({})'.format(token_id, target.agent_name))
        return Confirmation(token_id=token_id, status=response.status,
                            self_revoked=target.is_current)

    def revoke_all(self, keep_current=True):
        listing = self.list_sessions(self.write_policy)
        others = [s for s in listing if not s.is_current]
        current = [s for s in listing if s.is_current]
        revoked = 0
        failures = []
        for session in others:
            try:
                self.revoke_session(session.token_id, listing=listing)
                revoked += 1
            except ForensicError as e:
                logger.error('Revoking {} failed: {}'.format(session.token_id, e))
                failures.append((session.token_id, str(e)))
        if not keep_current and not failures:
            for session in current:
                self.revoke_session(session.token_id, force=True, listing=listing)
                revoked += 1
        if failures:
            raise PartialFailure('revoke-all', failures, completed=revoked)
        return revoked
