"""Command line: one process per role over TCP, plus in-process experiment runs.

Exit codes: 0 success, 1 acceptance criterion failed, 2 usage or config
error, 3 I/O or network error.
"""

from __future__ import annotations

import asyncio
import logging
import signal
import sys
import threading
from pathlib import Path

import click

from pushsync.broker.client import BrokerClient
from pushsync.broker.core import Broker
from pushsync.broker.server import BrokerServer
from pushsync.core.types import ChannelPath
from pushsync.destination.destination import Destination
from pushsync.destination.replica import FileReplicaStore
from pushsync.errors import BrokerUnavailable, ConfigError, FeedUnavailable
from pushsync.harness.experiments import PRESETS, run_preset
from pushsync.harness.workload import WorkloadConfig, generate_workload
from pushsync.net import parse_addr
from pushsync.source.feed import DirectoryFeed
from pushsync.source.server import SourceClient, SourceServer
from pushsync.source.source import DEFAULT_ROOT_CHANNEL, Source

logger = logging.getLogger("pushsync")

EXIT_OK, EXIT_CRITERION, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
DEFAULT_SEED = 7
DEFAULT_BROKER_ADDR = "127.0.0.1:5222"
DEFAULT_SOURCE_ADDR = "127.0.0.1:8080"


class Fail(click.ClickException):
    """Error with a chosen exit code and a one-line diagnostic on stderr."""

    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.exit_code = code


def _env(name: str) -> str:
    return f"PUSHSYNC_{name}"


def _addr(value: str, what: str) -> tuple[str, int]:
    try:
        return parse_addr(value)
    except ConfigError as exc:
        raise click.BadParameter(str(exc), param_hint=what) from exc


def _install_stop(stop: threading.Event) -> None:
    def handler(signum, frame) -> None:
        stop.set()

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)


def _announce(role: str, host: str, port: int) -> None:
    click.echo(f"{role} listening on {host}:{port}")
    sys.stdout.flush()


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--log-level", default="WARNING", show_default=True, envvar=_env("LOG_LEVEL"),
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              help="Logging verbosity (stderr).")
def main(log_level: str) -> None:
    """Synchronize resource replicas with pushed change notifications."""
    logging.basicConfig(level=log_level.upper(), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@main.command("broker")
@click.option("--addr", default=DEFAULT_BROKER_ADDR, show_default=True, envvar=_env("ADDR"),
              help="host:port to listen on (port 0 picks a free port).")
def cmd_broker(addr: str) -> None:
    """Run the channel broker until SIGINT/SIGTERM."""
    host, port = _addr(addr, "--addr")
    stop = threading.Event()
    _install_stop(stop)
    server = BrokerServer(Broker(), host, port)

    async def run() -> None:
        try:
            await server.start()
        except OSError as exc:
            raise Fail(f"cannot listen on {host}:{port}: {exc.strerror or exc}", EXIT_IO) from exc
        _announce("broker", host, server.port)
        try:
            while not stop.is_set():
                await asyncio.sleep(0.05)
        finally:
            await server.close()

    asyncio.run(run())


@main.command("source")
@click.option("--addr", default=DEFAULT_BROKER_ADDR, show_default=True, envvar=_env("ADDR"),
              help="Broker host:port to publish to.")
@click.option("--listen", default=DEFAULT_SOURCE_ADDR, show_default=True, envvar=_env("LISTEN"),
              help="host:port serving GET requests (port 0 picks a free port).")
@click.option("--data-dir", required=True, envvar=_env("DATA_DIR"),
              type=click.Path(file_okay=False, path_type=Path),
              help="Directory watched for <cycle>.updated.txt / <cycle>.deleted.txt.")
@click.option("--poll-interval", default=30.0, show_default=True, envvar=_env("POLL_INTERVAL"),
              type=click.FloatRange(min=0.01), help="Seconds between changeset polls.")
@click.option("--connect-deadline", default=10.0, show_default=True,
              envvar=_env("CONNECT_DEADLINE"), type=click.FloatRange(min=0.0),
              help="Seconds to keep retrying the broker connection.")
def cmd_source(addr: str, listen: str, data_dir: Path, poll_interval: float,
               connect_deadline: float) -> None:
    """Poll a changeset directory, publish CNs, serve GET until signalled."""
    bhost, bport = _addr(addr, "--addr")
    lhost, lport = _addr(listen, "--listen")
    stop = threading.Event()
    _install_stop(stop)
    source = Source()
    feed = DirectoryFeed(data_dir)
    server = SourceServer(source, lhost, lport)
    client = BrokerClient(bhost, bport, connect_deadline_s=connect_deadline)
    try:
        client.connect()
    except BrokerUnavailable as exc:
        raise Fail(str(exc), EXIT_IO) from exc

    lost = threading.Event()

    def poll_loop() -> None:
        while not stop.is_set():
            report = source.poll_cycle(feed, client)
            if report.cycle_ids:
                logger.info("cycles %s: %d events, %d CNs", report.cycle_ids,
                            report.total_events, report.cns_published)
            if report.publish_error and not client.connected:
                logger.error("broker connection lost; stopping")
                lost.set()
                stop.set()
            stop.wait(poll_interval)

    async def run() -> None:
        try:
            await server.start()
        except OSError as exc:
            raise Fail(f"cannot listen on {lhost}:{lport}: {exc.strerror or exc}", EXIT_IO) from exc
        _announce("source", lhost, server.port)
        poller = threading.Thread(target=poll_loop, name="source-poll", daemon=True)
        poller.start()
        try:
            while not stop.is_set():
                await asyncio.sleep(0.05)
        finally:
            await server.close()
            poller.join(timeout=5.0)

    try:
        asyncio.run(run())
    finally:
        client.close()
    if lost.is_set():
        raise Fail(f"lost connection to broker at {bhost}:{bport}", EXIT_IO)


@main.command("dest")
@click.option("--addr", default=DEFAULT_BROKER_ADDR, show_default=True, envvar=_env("ADDR"),
              help="Broker host:port to subscribe at.")
@click.option("--source-addr", default=DEFAULT_SOURCE_ADDR, show_default=True,
              envvar=_env("SOURCE_ADDR"), help="Source host:port to pull content from.")
@click.option("--data-dir", required=True, envvar=_env("DATA_DIR"),
              type=click.Path(file_okay=False, path_type=Path),
              help="Replica root: one file per resource.")
@click.option("--channel", default=str(DEFAULT_ROOT_CHANNEL), show_default=True,
              envvar=_env("CHANNEL"), help="Channel to subscribe to (descendants included).")
@click.option("--name", default="dest", show_default=True, envvar=_env("NAME"),
              help="Destination name used in logs.")
@click.option("--report", default=None, envvar=_env("REPORT"),
              type=click.Path(dir_okay=False, path_type=Path),
              help="Write interval_index,max_queue,drained CSV here on exit.")
@click.option("--interval", default=300.0, show_default=True, envvar=_env("INTERVAL"),
              type=click.FloatRange(min=0.001), help="Seconds per queue-metric interval.")
@click.option("--connect-deadline", default=10.0, show_default=True,
              envvar=_env("CONNECT_DEADLINE"), type=click.FloatRange(min=0.0),
              help="Seconds to keep retrying the broker connection.")
def cmd_dest(addr: str, source_addr: str, data_dir: Path, channel: str, name: str,
             report: Path | None, interval: float, connect_deadline: float) -> None:
    """Subscribe, pull changed resources into a replica, until signalled."""
    bhost, bport = _addr(addr, "--addr")
    shost, sport = _addr(source_addr, "--source-addr")
    try:
        path = ChannelPath.parse(channel)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--channel") from exc
    try:
        store = FileReplicaStore(data_dir)
    except OSError as exc:
        raise Fail(f"cannot use replica directory {data_dir}: {exc}", EXIT_IO) from exc

    stop = threading.Event()
    _install_stop(stop)
    fetch = SourceClient(shost, sport, connect_deadline_s=connect_deadline)
    dest = Destination(name, store, fetch, interval_ms=round(interval * 1000))
    client = BrokerClient(bhost, bport, on_cn=dest.on_cn, connect_deadline_s=connect_deadline)
    try:
        client.connect()
        client.create_channel(path)
        client.subscribe(path)
    except BrokerUnavailable as exc:
        raise Fail(str(exc), EXIT_IO) from exc
    click.echo(f"{name} subscribed to {path} at {bhost}:{bport}")
    sys.stdout.flush()

    lost = threading.Event()

    def watch_broker() -> None:
        # only a drop noticed before shutdown counts; after a signal the
        # broker may legitimately go away first
        while not stop.wait(0.2):
            if not client.connected:
                logger.error("%s: broker connection lost", name)
                lost.set()
                stop.set()

    threading.Thread(target=watch_broker, name="broker-watch", daemon=True).start()
    try:
        stats = dest.run_consumer(stop)
    finally:
        client.close()
        fetch.close()
    if report is not None:
        try:
            report.write_text(stats.to_csv(), encoding="utf-8")
        except OSError as exc:
            raise Fail(f"cannot write report {report}: {exc}", EXIT_IO) from exc
    if lost.is_set():
        raise Fail(f"lost connection to broker at {bhost}:{bport}", EXIT_IO)


@main.command("workload")
@click.option("--config", "config_path", default=None, envvar=_env("CONFIG"),
              type=click.Path(dir_okay=False, exists=True, path_type=Path),
              help="key=value workload config file.")
@click.option("--seed", default=DEFAULT_SEED, show_default=True, envvar=_env("SEED"), type=int,
              help="Workload random seed.")
@click.option("--data-dir", required=True, envvar=_env("DATA_DIR"),
              type=click.Path(file_okay=False, path_type=Path),
              help="Directory to write changeset files into.")
@click.option("--with-baseline", is_flag=True, help="Also write the baseline dump as cycle 0.")
def cmd_workload(config_path: Path | None, seed: int, data_dir: Path, with_baseline: bool) -> None:
    """Write a generated workload as changeset files."""
    cfg = _load_config(config_path).replace(seed=seed)
    w = generate_workload(cfg)
    try:
        w.write(data_dir, include_baseline=with_baseline)
    except OSError as exc:
        raise Fail(f"cannot write changesets to {data_dir}: {exc}", EXIT_IO) from exc
    counts = w.kind_counts
    click.echo(f"wrote {len(w.changesets)} changesets, {len(w.events)} events "
               + " ".join(f"{k.value}={v}" for k, v in counts.items()))


def _load_config(path: Path | None) -> WorkloadConfig:
    if path is None:
        return WorkloadConfig()
    try:
        return WorkloadConfig.from_file(path)
    except ConfigError as exc:
        raise Fail(f"{path}: {exc}", EXIT_USAGE) from exc
    except OSError as exc:
        raise Fail(f"cannot read {path}: {exc}", EXIT_IO) from exc


@main.command("run")
@click.argument("preset_arg", metavar="[PRESET]", required=False,
                type=click.Choice(sorted(PRESETS)))
@click.option("--preset", default=None, envvar=_env("PRESET"), type=click.Choice(sorted(PRESETS)),
              help="Experiment to run (alternative to the positional argument).")
@click.option("--seed", default=DEFAULT_SEED, show_default=True, envvar=_env("SEED"), type=int,
              help="Workload random seed.")
@click.option("--scale", default=1.0, show_default=True, envvar=_env("SCALE"),
              type=click.FloatRange(min=0.0, min_open=True),
              help="Multiplier on event counts and cycles.")
@click.option("--config", "config_path", default=None, envvar=_env("CONFIG"),
              type=click.Path(dir_okay=False, exists=True, path_type=Path),
              help="key=value workload config file used as the base config.")
@click.option("--report", default=None, envvar=_env("REPORT"),
              type=click.Path(file_okay=False, path_type=Path),
              help="Directory to write report files into.")
@click.option("--data-dir", default=None, envvar=_env("DATA_DIR"),
              type=click.Path(file_okay=False, path_type=Path),
              help="Keep file-backed replicas under this directory (in memory otherwise).")
def cmd_run(preset_arg: str | None, preset: str | None, seed: int, scale: float,
            config_path: Path | None, report: Path | None, data_dir: Path | None) -> None:
    """Run a packaged experiment in-process on the virtual clock."""
    if preset_arg and preset and preset_arg != preset:
        raise click.UsageError(f"conflicting presets {preset_arg!r} and {preset!r}")
    name = preset_arg or preset
    if name is None:
        raise click.UsageError(f"a preset is required: {', '.join(sorted(PRESETS))}")
    base = _load_config(config_path)
    try:
        result = run_preset(name, base, seed=seed, scale=scale, data_dir=data_dir)
    except (ConfigError, ValueError) as exc:
        raise Fail(str(exc), EXIT_USAGE) from exc
    except (OSError, FeedUnavailable) as exc:
        raise Fail(str(exc), EXIT_IO) from exc

    click.echo(result.summary, nl=False)
    for check in result.checks:
        click.echo(check.line())
    if report is not None:
        try:
            for p in result.write(report):
                click.echo(f"wrote {p}")
        except OSError as exc:
            raise Fail(f"cannot write report to {report}: {exc}", EXIT_IO) from exc
    failed = result.failed()
    if failed:
        raise Fail("criterion failed: " + ", ".join(c.name for c in failed), EXIT_CRITERION)
