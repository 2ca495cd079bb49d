from pushsync.broker.client import BrokerClient
from pushsync.broker.core import (
    Broker,
    CallbackSink,
    ChannelNode,
    DeliveryFailure,
    DeliveryReceipt,
    QueueSink,
    Sink,
    Subscription,
)
from pushsync.broker.server import BrokerServer

__all__ = [
    "Broker",
    "BrokerClient",
    "BrokerServer",
    "CallbackSink",
    "ChannelNode",
    "DeliveryFailure",
    "DeliveryReceipt",
    "QueueSink",
    "Sink",
    "Subscription",
]
