import hashlib
import json
import logging
import time
from contextlib import contextmanager
from datetime import datetime, timezone

logger = logging.getLogger(__name__)

CHUNK_SIZE = 65536


def bool_flag(s):
    if s == '1':
        return True
    elif s == '0':
        return False
    msg = 'Invalid value "%s" for bool flag (should be 0 or 1)'
    raise ValueError(msg % s)


@contextmanager
def timeit(msg, should_time=True):
    if should_time:
        t0 = time.time()
    yield
    if should_time:
        t1 = time.time()
        duration = (t1 - t0) * 1000.0
        logger.info('%s: %.2f ms' % (msg, duration))


def utcnow():
    return datetime.now(timezone.utc)


def format_instant(instant):
    """
    UTC instant -> '2024-10-06T18:01:15.123Z' (millisecond precision).
    """
    if instant is None:
        return None
    instant = instant.astimezone(timezone.utc)
    return instant.strftime('%Y-%m-%dT%H:%M:%S.') + '{:03d}Z'.format(
        instant.microsecond // 1000)


def parse_instant(text):
    if text is None:
        return None
    if text.endswith('Z'):
        text = text[:-1] + '+00:00'
    return datetime.fromisoformat(text).astimezone(timezone.utc)


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(CHUNK_SIZE), b''):
            digest.update(chunk)
    return digest.hexdigest()


def canonical_line(mapping, keys=None):
    """
    Serialize one record as a single JSON line. With `keys` the output follows
    that fixed key order; otherwise the mapping's own order is kept.
    """
    if keys is not None:
        mapping = dict((k, mapping.get(k)) for k in keys)
    return json.dumps(mapping, ensure_ascii=False, separators=(',', ':')) + '\n'
