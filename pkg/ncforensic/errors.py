"""
Exception hierarchy shared by the clients, the acquisition workflow and the
command-line tools. Every class carries the exit code the tools report.
"""

EXIT_FAILURE = 1
EXIT_AUTH = 2
EXIT_NOT_FOUND = 3
EXIT_WRONG_KIND = 4
EXIT_PARTIAL = 5


class ForensicError(Exception):
    exit_code = EXIT_FAILURE


class InvalidCredentials(ForensicError, ValueError):
    pass


class InputError(ForensicError, ValueError):
    pass


class PolicyViolation(ForensicError):

    def __init__(self, method, url, context):
        self.method = method
        self.url = url
        self.context = context
        super(PolicyViolation, self).__init__(
            '{} {} refused in {} context'.format(method, url, context))


class TransportError(ForensicError):

    def __init__(self, method, url, cause):
        self.method = method
        self.url = url
        self.cause = cause
        super(TransportError, self).__init__(
            '{} {} failed: {}'.format(method, url, cause))


class NotFoundError(ForensicError):
    exit_code = EXIT_NOT_FOUND


class HttpError(ForensicError):

    def __init__(self, status, url, snippet=''):
        self.status = status
        self.url = url
        self.snippet = snippet
        super(HttpError, self).__init__(
            'HTTP {} for {}: {}'.format(status, url, snippet))


class AuthFailed(HttpError):
    exit_code = EXIT_AUTH


class Forbidden(HttpError):
    exit_code = EXIT_AUTH


class ResourceNotFound(HttpError, NotFoundError):
    exit_code = EXIT_NOT_FOUND


class ParseError(ForensicError):
    pass


class RefusingSelf(ForensicError):
    pass


class WrongKind(ForensicError):
    exit_code = EXIT_WRONG_KIND


class PartialFailure(ForensicError):
    exit_code = EXIT_PARTIAL

    def __init__(self, message, failures, completed=0):
        # failures: list of (subject, error message)
        self.failures = list(failures)
        self.completed = completed
        super(PartialFailure, self).__init__(
            '{}: {} failed, {} completed'.format(
                message, len(self.failures), completed))

    @property
    def failed_ids(self):
        return [subject for subject, _ in self.failures]


class OutDirNotEmpty(ForensicError):
    pass


class ManifestMissing(ForensicError):
    pass


class ManifestCorrupt(ForensicError):
    pass


class InvalidOrder(ForensicError):
    pass


class BindFailure(ForensicError):
    pass


def raise_for_status(status, url, body=b''):
    """
    Map an HTTP status >= 400 onto the matching exception class.
    """
    if status < 400:
        return
    snippet = body[:200].decode('utf-8', 'replace') if body else ''
    if status == 401:
        raise AuthFailed(status, url, snippet)
    if status == 403:
        raise Forbidden(status, url, snippet)
    if status == 404:
        raise ResourceNotFound(status, url, snippet)
    raise HttpError(status, url, snippet)
