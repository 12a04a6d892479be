"""
Scripted changes to a running mock instance. A step fires either at a monitor
cycle (`at_cycle`) or once the instance clock reaches `at_time`.
"""
import logging
import random
from dataclasses import dataclass, field
from typing import List, Optional

from ncforensic.errors import InputError

logger = logging.getLogger(__name__)

ACTIONS = ('create', 'modify', 'delete-to-trash', 'empty-trash', 'add-token',
           'remove-token', 'add-share')


@dataclass
class MutationStep:
    action: str
    user: str = 'admin'
    path: str = ''
    content: bytes = b''
    at_cycle: Optional[int] = None
    at_time: Optional[int] = None
    name: str = ''
    password: str = ''
    token_type: int = 1
    token_id: Optional[int] = None
    share_type: int = 3
    share_with: Optional[str] = None
    share_token: Optional[str] = None
    applied: bool = False

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise InputError('unknown mutation {}'.format(self.action))
        if isinstance(self.content, str):
            self.content = self.content.encode('utf-8')

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def apply(state, step):
    """Apply one step atomically with respect to request handling."""
    with state.lock:
        if step.action == 'create':
            result = state.create_file(step.user, step.path, step.content)
        elif step.action == 'modify':
            result = state.modify_file(step.user, step.path, step.content)
        elif step.action == 'delete-to-trash':
            result = state.delete_to_trash(step.user, step.path)
        elif step.action == 'empty-trash':
            result = state.empty_trash(step.user)
        elif step.action == 'add-token':
            result = state.add_token(step.user, step.name, step.password, step.token_type)
        elif step.action == 'remove-token':
            result = state.remove_token(step.user, step.token_id)
        else:
            result = state.add_share(step.user, step.path, step.share_type,
                                     share_with=step.share_with, token=step.share_token)
        step.applied = True
    logger.debug('Applied {} {}'.format(step.action, step.path or step.name))
    return result


@dataclass
class MutationScript:
    steps: List[MutationStep] = field(default_factory=list)

    @classmethod
    def from_list(cls, items):
        return cls([MutationStep.from_dict(item) for item in items])

    def apply_cycle(self, state, cycle):
        """Apply the pending steps scheduled for `cycle`, in script order."""
        due = [s for s in self.steps if not s.applied and s.at_cycle == cycle]
        return [apply(state, step) for step in due]

    def apply_due(self, state):
        """Apply pending time-triggered steps whose instant has come."""
        with state.lock:
            now = state.clock.now()
            due = [s for s in self.steps
                   if not s.applied and s.at_time is not None and s.at_time <= now]
            return [apply(state, step) for step in due]

    @property
    def pending(self):
        return [s for s in self.steps if not s.applied]


def random_script(seed, files, cycles=2, uid='admin'):
    """
    Two-stage random script over the seeded `files` for composability checks:
    every path is touched at most once across all stages.
    """
    rng = random.Random(seed)
    untouched = sorted(files)
    rng.shuffle(untouched)
    steps = []
    created = 0
    for cycle in range(1, cycles + 1):
        for _ in range(rng.randint(0, 3)):
            choice = rng.choice(['create', 'modify', 'delete-to-trash', 'add-token'])
            if choice in ('modify', 'delete-to-trash'):
                if not untouched:
                    continue
                path = untouched.pop()
                steps.append(MutationStep(choice, user=uid, path=path, at_cycle=cycle,
                                          content='rev{}'.format(cycle)))
            elif choice == 'create':
                created += 1
                steps.append(MutationStep('create', user=uid, at_cycle=cycle,
                                          path='new-{}-{}.txt'.format(cycle, created),
                                          content='fresh'))
            else:
                steps.append(MutationStep('add-token', user=uid, at_cycle=cycle,
                                          name='device-{}'.format(rng.randint(0, 10 ** 6)),
                                          password='pw-{}'.format(rng.random())))
    return MutationScript(steps)
