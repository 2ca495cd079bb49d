from pushsync.destination.destination import (
    DEFAULT_INTERVAL_MS,
    Destination,
    DestinationCounters,
    Outcome,
)
from pushsync.destination.metrics import QueueMonitor, QueueStats
from pushsync.destination.replica import (
    FileReplicaStore,
    MemoryReplicaStore,
    ReplicaStore,
    filename_to_uri,
    uri_to_filename,
)

__all__ = [
    "DEFAULT_INTERVAL_MS",
    "Destination",
    "DestinationCounters",
    "FileReplicaStore",
    "MemoryReplicaStore",
    "Outcome",
    "QueueMonitor",
    "QueueStats",
    "ReplicaStore",
    "filename_to_uri",
    "uri_to_filename",
]
