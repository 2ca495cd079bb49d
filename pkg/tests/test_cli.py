from __future__ import annotations

import os
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest
from click.testing import CliRunner

from pushsync.cli import main
from pushsync.destination import FileReplicaStore
from pushsync.harness.diff import recursive_diff
from pushsync.harness.workload import WorkloadConfig, generate_workload
from pushsync.source.feed import ListFeed
from pushsync.source.source import Source
from pushsync.core.clock import VirtualClock


@pytest.fixture
def runner():
    return CliRunner()


def test_help_lists_subcommands(runner):
    out = runner.invoke(main, ["--help"]).output
    for cmd in ("broker", "source", "dest", "workload", "run"):
        assert cmd in out


@pytest.mark.parametrize("cmd,flags", [
    ("broker", ["--addr"]),
    ("source", ["--addr", "--listen", "--data-dir", "--poll-interval"]),
    ("dest", ["--addr", "--source-addr", "--data-dir", "--channel", "--report"]),
    ("run", ["--preset", "--seed", "--scale", "--config", "--report", "--data-dir"]),
    ("workload", ["--config", "--seed", "--data-dir"]),
])
def test_help_enumerates_flags(runner, cmd, flags):
    out = runner.invoke(main, [cmd, "--help"]).output
    for f in flags:
        assert f in out


def test_unknown_flag_is_usage_error(runner):
    r = runner.invoke(main, ["run", "lockstep", "--frobnicate"])
    assert r.exit_code == 2


def test_run_without_preset_is_usage_error(runner):
    assert runner.invoke(main, ["run"]).exit_code == 2
    assert runner.invoke(main, ["run", "nope"]).exit_code == 2
    assert runner.invoke(main, ["run", "lockstep", "--preset", "payload"]).exit_code == 2


def test_bad_config_is_usage_error(runner, tmp_path):
    cfg = tmp_path / "bad.conf"
    cfg.write_text("kind_mix=1,1,1\n")
    r = runner.invoke(main, ["run", "lockstep", "--config", str(cfg)])
    assert r.exit_code == 2
    assert "kind_mix" in r.output


def test_run_accuracy_is_deterministic(runner, tmp_path):
    outs = []
    for name in ("a", "b"):
        r = runner.invoke(main, ["run", "accuracy", "--seed", "7", "--scale", "0.05",
                                 "--report", str(tmp_path / name)])
        assert r.exit_code == 0, r.output
        outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())})
    assert outs[0] == outs[1] and outs[0]


def test_run_lockstep_full_preset(runner, tmp_path):
    r = runner.invoke(main, ["run", "--preset", "lockstep", "--report", str(tmp_path)])
    assert r.exit_code == 0, r.output
    assert "PASS lockstep-drained" in r.output
    assert "13,819" in (tmp_path / "lockstep.txt").read_text()


def test_run_compare_architectures(runner):
    r = runner.invoke(main, ["run", "compare-architectures"])
    assert r.exit_code == 0, r.output
    assert "PASS compare-extra-pings: +40 pings over 40 cycles" in r.output
    assert "PASS compare-extra-fetches: +40 feed fetches over 40 cycles" in r.output


def test_failed_criterion_exits_one_and_names_it(runner):
    r = runner.invoke(main, ["run", "payload", "--scale", "0.1"])
    assert r.exit_code == 1
    assert "criterion failed: payload-compressed" in r.output


def test_env_prefix(runner):
    r = runner.invoke(main, ["run"], env={"PUSHSYNC_PRESET": "compare-architectures",
                                          "PUSHSYNC_SCALE": "0.1"})
    assert r.exit_code == 0, r.output


def test_workload_subcommand_writes_files(runner, tmp_path):
    cfg = tmp_path / "w.conf"
    cfg.write_text("total_events=40\nbaseline_resources=5\nduration_ms=600000\n")
    r = runner.invoke(main, ["workload", "--config", str(cfg), "--data-dir", str(tmp_path / "cs"),
                             "--with-baseline"])
    assert r.exit_code == 0, r.output
    assert "40 events" in r.output
    assert (tmp_path / "cs" / "0.updated.txt").exists()


def test_broker_on_occupied_port_exits_three(runner):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen()
        port = s.getsockname()[1]
        r = runner.invoke(main, ["broker", "--addr", f"127.0.0.1:{port}"])
    assert r.exit_code == 3
    assert f"127.0.0.1:{port}" in r.output


def test_dest_without_broker_exits_three(runner, tmp_path):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    r = runner.invoke(main, ["dest", "--addr", f"127.0.0.1:{port}", "--data-dir", str(tmp_path),
                             "--connect-deadline", "0.5"])
    assert r.exit_code == 3


# -- three processes over loopback ---------------------------------------------


def _spawn(*args):
    return subprocess.Popen([sys.executable, "-m", "pushsync", *args], stdout=subprocess.PIPE,
                            stderr=subprocess.PIPE, text=True)


def _port_from(proc):
    line = proc.stdout.readline()
    assert "listening on" in line, (line, proc.stderr.read() if proc.poll() is not None else "")
    return int(line.rsplit(":", 1)[1])


@pytest.mark.network
def test_three_process_smoke(tmp_path):
    changes = tmp_path / "changes"
    changes.mkdir()
    replica = tmp_path / "replica"
    report = tmp_path / "dest.csv"
    cfg = WorkloadConfig(profile="script", script=(30, 30, 40), baseline_resources=0)
    workload = generate_workload(cfg)

    procs = []
    try:
        broker = _spawn("broker", "--addr", "127.0.0.1:0")
        procs.append(broker)
        baddr = f"127.0.0.1:{_port_from(broker)}"
        source = _spawn("source", "--addr", baddr, "--listen", "127.0.0.1:0",
                        "--data-dir", str(changes), "--poll-interval", "0.1")
        procs.append(source)
        saddr = f"127.0.0.1:{_port_from(source)}"
        dest = _spawn("dest", "--addr", baddr, "--source-addr", saddr, "--data-dir", str(replica),
                      "--report", str(report), "--interval", "0.5")
        procs.append(dest)
        assert "subscribed" in dest.stdout.readline()

        workload.write(changes)

        expected = Source(clock=VirtualClock())
        expected.poll_cycle(ListFeed(workload.changesets, expected.clock), _NullPublisher())
        touched = {ev.uri for ev in workload.events}
        deadline = time.monotonic() + 30
        while True:
            diff = recursive_diff(expected.store, FileReplicaStore(replica), touched)
            if diff.count == 0 or time.monotonic() > deadline:
                break
            time.sleep(0.2)
        assert diff.count == 0, diff
        assert len(os.listdir(replica)) == len(expected.store.live_listing())
    finally:
        for p in reversed(procs):
            if p.poll() is None:
                p.send_signal(signal.SIGTERM)
        codes = [p.wait(timeout=10) for p in procs]
        for p in procs:
            p.stdout.close()
            p.stderr.close()
    assert codes == [0, 0, 0]
    assert report.read_text().startswith("interval_index,max_queue,drained\n")


class _NullPublisher:
    def create_channel(self, path):
        return None

    def publish(self, path, cn):
        return None


@pytest.mark.network
def test_dest_exits_three_when_broker_dies(tmp_path):
    broker = _spawn("broker", "--addr", "127.0.0.1:0")
    dest = None
    try:
        baddr = f"127.0.0.1:{_port_from(broker)}"
        dest = _spawn("dest", "--addr", baddr, "--data-dir", str(tmp_path))
        assert "subscribed" in dest.stdout.readline()
        broker.kill()
        broker.wait(timeout=10)
        assert dest.wait(timeout=10) == 3
        assert "lost connection" in dest.stderr.read()
    finally:
        for p in (dest, broker):
            if p is not None:
                if p.poll() is None:
                    p.kill()
                p.wait(timeout=10)
                p.stdout.close()
                p.stderr.close()
