from __future__ import annotations

import asyncio
import socket
import threading
import time

import pytest

from pushsync.broker.client import BrokerClient
from pushsync.broker.core import Broker
from pushsync.broker.server import BrokerServer
from pushsync.core.codec import encode_cn
from pushsync.core.types import ChangeNotification, ChannelPath, EventKind, digest_bytes
from pushsync.errors import BrokerUnavailable, UnknownChannel

pytestmark = pytest.mark.network

DB = ChannelPath.of("dbpedia")
MUSIC = ChannelPath.of("dbpedia", "music")
D = digest_bytes(b"x")


def cn(seq, channel=MUSIC):
    return ChangeNotification(seq, EventKind.UPDATE, f"http://ex.org/r{seq}", seq, channel, D)


@pytest.fixture
def broker_server():
    broker = Broker()
    server = BrokerServer(broker, "127.0.0.1", 0)
    loop = asyncio.new_event_loop()
    ready = threading.Event()

    def run():
        asyncio.set_event_loop(loop)
        loop.run_until_complete(server.start())
        ready.set()
        loop.run_forever()

    t = threading.Thread(target=run, daemon=True)
    t.start()
    assert ready.wait(5)
    yield broker, server
    asyncio.run_coroutine_threadsafe(server.close(), loop).result(5)
    loop.call_soon_threadsafe(loop.stop)
    t.join(5)


def wait_for(pred, timeout=5.0):
    end = time.monotonic() + timeout
    while time.monotonic() < end:
        if pred():
            return True
        time.sleep(0.01)
    return pred()


def test_pub_sub_over_tcp_in_order(broker_server):
    _, server = broker_server
    got = []
    with BrokerClient("127.0.0.1", server.port, on_cn=got.append) as sub, \
            BrokerClient("127.0.0.1", server.port) as pub:
        sub.subscribe(DB)
        pub.create_channel(MUSIC)
        for i in range(1, 201):
            pub.publish(MUSIC, cn(i))
        assert wait_for(lambda: len(got) == 200)
        assert [c.seq for c in got] == list(range(1, 201))
        assert got[0] == cn(1)


def test_unsubscribe_and_unknown_channel(broker_server):
    _, server = broker_server
    got = []
    with BrokerClient("127.0.0.1", server.port, on_cn=got.append) as c:
        with pytest.raises(UnknownChannel):
            c.publish(MUSIC, cn(1))
        c.subscribe(MUSIC)
        c.publish(MUSIC, cn(2))
        assert wait_for(lambda: len(got) == 1)
        assert c.unsubscribe(MUSIC) is True
        assert c.unsubscribe(MUSIC) is False
        c.publish(MUSIC, cn(3))
        time.sleep(0.1)
        assert [x.seq for x in got] == [2]


def raw_session(port):
    s = socket.create_connection(("127.0.0.1", port), timeout=5)
    return s, s.makefile("rb")


@pytest.mark.parametrize("payload,reply", [
    (b"HELLO\n", b"ERR unknown-command\n"),
    (b"SUB bad channel\n", b"ERR bad-channel\n"),
    (b"UNSUB dbpedia\n", b"ERR not-subscribed\n"),
    (b"PUB\nCN\t1\t2\tupdate\n", b"ERR bad-frame\n"),
    (b"CREATE dbpedia/music\n", b"OK\n"),
])
def test_raw_protocol_errors(broker_server, payload, reply):
    _, server = broker_server
    s, f = raw_session(server.port)
    try:
        s.sendall(payload)
        assert f.readline() == reply
    finally:
        s.close()


def test_raw_pub_frame_is_bit_exact(broker_server):
    _, server = broker_server
    sub, fsub = raw_session(server.port)
    pub, fpub = raw_session(server.port)
    try:
        sub.sendall(b"SUB dbpedia\n")
        assert fsub.readline() == b"OK\n"
        pub.sendall(b"CREATE dbpedia/music\n")
        assert fpub.readline() == b"OK\n"
        frame = encode_cn(cn(7))
        pub.sendall(b"PUB\n" + frame)
        assert fpub.readline() == b"OK\n"
        assert fsub.readline() == frame
    finally:
        sub.close()
        pub.close()


def test_disconnect_removes_subscriptions(broker_server):
    broker, server = broker_server
    c = BrokerClient("127.0.0.1", server.port).connect()
    c.subscribe(DB)
    assert len(broker.subscriptions()) == 1
    c.close()
    assert wait_for(lambda: broker.subscriptions() == [])


def test_connect_gives_up_after_deadline():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    start = time.monotonic()
    with pytest.raises(BrokerUnavailable):
        BrokerClient("127.0.0.1", port, connect_deadline_s=0.3).connect()
    assert time.monotonic() - start < 5
