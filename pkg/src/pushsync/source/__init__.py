from pushsync.source.feed import ChangesetFeed, DirectoryFeed, ListFeed
from pushsync.source.server import SourceClient, SourceServer
from pushsync.source.source import (
    DEFAULT_ROOT_CHANNEL,
    ChangeEvent,
    CycleReport,
    DeltaEntry,
    Publisher,
    Source,
)
from pushsync.source.store import CanonicalStore

__all__ = [
    "DEFAULT_ROOT_CHANNEL",
    "CanonicalStore",
    "ChangeEvent",
    "ChangesetFeed",
    "CycleReport",
    "DeltaEntry",
    "DirectoryFeed",
    "ListFeed",
    "Publisher",
    "Source",
    "SourceClient",
    "SourceServer",
]
