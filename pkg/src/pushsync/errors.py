"""Exception hierarchy shared by every pushsync component."""

from __future__ import annotations


class PushSyncError(Exception):
    """Base class for all pushsync errors."""


class MalformedUri(PushSyncError, ValueError):
    """A raw URI (or the triple line carrying it) could not be parsed."""


class FrameError(PushSyncError, ValueError):
    """A wire frame is truncated, corrupt, or has the wrong field count."""


class UnknownChannel(PushSyncError, KeyError):
    pass


class SinkClosed(PushSyncError):
    """The delivery endpoint is gone; nothing more can be sent to it."""


class SinkOverflow(SinkClosed):
    """The outbound buffer of a slow consumer filled up."""


class BrokerUnavailable(PushSyncError):
    def __init__(self, message: str, published: int = 0) -> None:
        super().__init__(message)
        # CNs that made it out before the failure.
        self.published = published


class NotFound(PushSyncError, LookupError):
    """The resource never existed at the Source."""


class Gone(PushSyncError, LookupError):
    """The resource existed but its latest state is a tombstone."""


class FetchError(PushSyncError):
    """Content transfer failed for a reason other than NotFound/Gone."""


class QueueOverflow(PushSyncError):
    pass


class ConfigError(PushSyncError, ValueError):
    pass


class FeedUnavailable(PushSyncError):
    pass


class HubUnavailable(PushSyncError):
    pass
