"""Wire-fed orchestration: trace replay and the live TCP server.

ReplayController drives the same round controller as the simulator, but from
parsed wire messages on a virtual clock derived from message timestamps. For
a trace recorded by the simulator this reproduces the simulator's scheduling
decisions exactly: rounds fire after all messages of a timestamp group are
ingested, at t=0, on the dynamic strategy's fixed cadence, and whenever a
completion arrived in the group.

WireServer wraps a ReplayController behind a TCP listener speaking the
newline-delimited message protocol.
"""

from __future__ import annotations

import select
import socket
import threading
from typing import Iterable, Optional

from .control import RoundController, make_controller
from .errors import EdgeSchedError, ProtocolError
from .gateway import CompletionNotice, PinnedStartNotice, TelemetryMessage, parse_line
from .scenario import Scenario
from .scheduler import messages_to_lines


class ReplayController:
    """Feed wire messages in timestamp order; schedule exactly like the sim."""

    def __init__(
        self,
        scenario: Scenario,
        strategy: str = "dynamic",
        force_reassign: bool = False,
        unload_completed: bool = True,
    ):
        self.controller, self.strategy_label, self.periodic = make_controller(
            scenario, strategy, force_reassign=force_reassign
        )
        self.unload_enabled = unload_completed
        self.scenario = scenario
        self.group_ts: Optional[int] = None
        self.group_completed = False
        self.started = False
        self.next_periodic = 0
        self.malformed = 0
        self.diagnostics: list[str] = []

    # -- round triggers -----------------------------------------------------

    def _run_round(self, t: int):
        outcome = self.controller.run_round(t)
        self.diagnostics.extend(outcome.diagnostics)

    def _close_group(self):
        if self.group_ts is None:
            return
        ts = self.group_ts
        # Rounds the simulator fired between groups (cadence points with no
        # telemetry, possible under non-aligned tick configs) come first.
        if self.periodic:
            while self.next_periodic < ts:
                self._run_round(self.next_periodic)
                self.next_periodic += self.scenario.sim.reschedule_tick_ms
        due = self.group_completed or not self.started
        if self.periodic and self.next_periodic == ts:
            due = True
            self.next_periodic += self.scenario.sim.reschedule_tick_ms
        if due:
            self._run_round(ts)
        self.started = True
        self.group_completed = False

    def feed(self, msg):
        ts = msg.timestamp
        if self.group_ts is not None and ts < self.group_ts:
            raise ProtocolError(
                f"timestamps must be nondecreasing: {ts} after {self.group_ts}"
            )
        if self.group_ts is None or ts > self.group_ts:
            self._close_group()
            self.group_ts = ts
        self.controller.executor.promote_due(ts)
        if isinstance(msg, TelemetryMessage):
            self.controller.gateway.ingest(msg)
        elif isinstance(msg, CompletionNotice):
            self.controller.note_completed(msg.task, ts, unload=self.unload_enabled)
            self.group_completed = True
        elif isinstance(msg, PinnedStartNotice):
            self.controller.dispatch_pinned(msg.task, msg.device, ts)
        else:
            raise ProtocolError(f"unhandled message type {type(msg).__name__}")

    def feed_line(self, line: str):
        line = line.strip()
        if not line:
            return
        try:
            msg = parse_line(line)
        except ProtocolError:
            self.malformed += 1
            return
        self.feed(msg)

    def finish(self):
        """Flush the trailing timestamp group."""
        self._close_group()
        self.group_ts = None

    def idle_round(self, now: int):
        """Probe round for live mode when sources have gone silent; a fully
        stale system yields a NoFreshEdges diagnostic instead of a crash."""
        self._run_round(now)

    # -- outputs -----------------------------------------------------------------

    def action_lines(self) -> list[str]:
        return self.controller.executor.action_log_lines()

    def assignment_lines(self) -> list[str]:
        return messages_to_lines(self.controller.assignment_log)


def replay_trace(
    scenario: Scenario,
    lines: Iterable[str],
    strategy: str = "dynamic",
    unload_completed: bool = True,
) -> ReplayController:
    """Replay a recorded telemetry trace through gateway/scheduler/executor."""
    replay = ReplayController(
        scenario, strategy=strategy, unload_completed=unload_completed
    )
    for line in lines:
        replay.feed_line(line)
    replay.finish()
    return replay


class WireServer:
    """Line-protocol TCP front end for a ReplayController.

    Single-threaded select loop: connections are accepted and read in arrival
    order, each complete line is fed to the controller (the gateway's single
    writer). Protocol errors are counted per line and never fatal.
    """

    def __init__(
        self,
        scenario: Scenario,
        host: str = "127.0.0.1",
        port: int = 0,
        strategy: str = "dynamic",
        idle_probe_ms: Optional[int] = None,
    ):
        self.replay = ReplayController(scenario, strategy=strategy)
        self.idle_probe_ms = idle_probe_ms or scenario.sim.staleness_window_ms
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))  # OSError EADDRINUSE propagates
        self._listener.listen()
        self.address = self._listener.getsockname()
        self._stop = threading.Event()
        self.errors: list[str] = []

    def stop(self):
        self._stop.set()

    def serve_forever(self):
        buffers: dict[socket.socket, bytes] = {}
        idle_budget = self.idle_probe_ms / 1000.0
        idle_waited = 0.0
        try:
            while not self._stop.is_set():
                readable, _, _ = select.select(
                    [self._listener, *buffers], [], [], 0.05
                )
                if not readable:
                    idle_waited += 0.05
                    if idle_waited >= idle_budget and self.replay.group_ts is not None:
                        probe_at = (
                            self.replay.group_ts
                            + self.replay.scenario.sim.staleness_window_ms
                            + 1
                        )
                        self.replay.finish()
                        self.replay.idle_round(probe_at)
                        idle_waited = 0.0
                    continue
                idle_waited = 0.0
                for sock in readable:
                    if sock is self._listener:
                        conn, _ = self._listener.accept()
                        conn.setblocking(False)
                        buffers[conn] = b""
                        continue
                    try:
                        chunk = sock.recv(65536)
                    except OSError:
                        chunk = b""
                    if not chunk:
                        buffers.pop(sock, None)
                        sock.close()
                        continue
                    buffers[sock] += chunk
                    while b"\n" in buffers[sock]:
                        raw, buffers[sock] = buffers[sock].split(b"\n", 1)
                        try:
                            self.replay.feed_line(raw.decode("utf-8", "replace"))
                        except EdgeSchedError as exc:
                            self.errors.append(str(exc))
        finally:
            for sock in buffers:
                sock.close()
            self._listener.close()
            try:
                self.replay.finish()
            except EdgeSchedError as exc:
                self.errors.append(str(exc))
