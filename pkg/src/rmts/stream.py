"""Real-time streaming layer: producer, partitioned server, checkpointing.

The server assigns each stream to one worker (stream_id mod worker_count), so
all frames of a stream are processed by a single owner in strict frame order.
Delivery is at-least-once: the producer retransmits frames until it holds
their tracking results, and the server deduplicates by frame number,
re-sending the cached result instead of reprocessing.  Together with the
deterministic tracker this makes processing effectively exactly-once, and a
replayed stream produces byte-identical results whether it runs offline,
over the wire, or through a crash and restore.

Checkpoint snapshots (version byte + CRC-32 + payload) persist each stream's
tracker state every ``checkpoint_interval`` frames, together with a short
tail of recent results so a restarted server can still answer retransmits
for frames it has already folded into the state.
"""
from __future__ import annotations

import logging
import os
import pickle
import socket
import struct
import threading
import time
import zlib
from collections import OrderedDict, deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .core import FrameInput
from .errors import InputError, ProtocolError, RestoreError, RmtsError
from .io import SequenceBundle, GmcTable
from .protocol import Message, MessageType, StreamDecoder, encode_message, frame_message
from .tracker import FrameOutput, OutputTrack, TrackerConfig, TrackerState, new_state, step

log = logging.getLogger("rmts.stream")

SNAPSHOT_VERSION = 1

OVERLOAD_BLOCK = "block"
OVERLOAD_DROP_OLDEST = "drop_oldest"


# --------------------------------------------------------------------------
# checkpoint / restore


def _encode_snapshot(payload_obj) -> bytes:
    payload = pickle.dumps(payload_obj, protocol=4)
    return struct.pack(">BI", SNAPSHOT_VERSION, zlib.crc32(payload)) + payload


def _decode_snapshot(data: bytes):
    if len(data) < 5:
        raise RestoreError("snapshot too short")
    version, crc = struct.unpack_from(">BI", data, 0)
    if version != SNAPSHOT_VERSION:
        raise RestoreError(f"unknown snapshot version {version}")
    payload = data[5:]
    if zlib.crc32(payload) != crc:
        raise RestoreError("snapshot checksum mismatch")
    try:
        return pickle.loads(payload)
    except Exception as exc:
        raise RestoreError(f"snapshot payload is corrupt: {exc}") from exc


def checkpoint(state: TrackerState) -> bytes:
    """Serialize a tracker state between steps; restore() round-trips it."""
    return _encode_snapshot(state)


def restore(data: bytes) -> TrackerState:
    obj = _decode_snapshot(data)
    if not isinstance(obj, TrackerState):
        raise RestoreError(f"snapshot holds {type(obj).__name__}, not a tracker state")
    return obj


# --------------------------------------------------------------------------
# server


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 0
    worker_count: int = 1
    queue_capacity: int = 256
    reorder_window: int = 64
    ack_timeout_ms: int = 500
    checkpoint_interval: int = 100
    overload_policy: str = OVERLOAD_BLOCK
    ckpt_dir: Optional[str] = None
    result_cache: int = 4096
    tracker: TrackerConfig = field(default_factory=TrackerConfig)

    def validate(self) -> "ServerConfig":
        if self.worker_count < 1:
            raise InputError("worker_count must be >= 1")
        if self.queue_capacity < self.reorder_window:
            raise InputError(
                f"queue_capacity ({self.queue_capacity}) must be >= reorder_window "
                f"({self.reorder_window})"
            )
        if self.reorder_window < 1 or self.checkpoint_interval < 1:
            raise InputError("reorder_window and checkpoint_interval must be >= 1")
        if self.overload_policy not in (OVERLOAD_BLOCK, OVERLOAD_DROP_OLDEST):
            raise InputError(f"unknown overload policy {self.overload_policy!r}")
        self.tracker.validate()
        return self


class _BoundedQueue:
    """Bounded FIFO with either blocking or drop-oldest overflow handling.

    Only FRAME items are droppable; control messages always enter.
    """

    def __init__(self, capacity: int):
        self._capacity = capacity
        self._items: deque = deque()
        self._lock = threading.Lock()
        self._not_empty = threading.Condition(self._lock)
        self._not_full = threading.Condition(self._lock)
        self.dropped = 0
        self.high_water = 0

    def _is_frame(self, item) -> bool:
        return item[1].msg_type == MessageType.FRAME

    def put(self, item, policy: str) -> None:
        with self._lock:
            if self._is_frame(item):
                if policy == OVERLOAD_BLOCK:
                    while len(self._items) >= self._capacity:
                        self._not_full.wait(0.1)
                elif len(self._items) >= self._capacity:
                    for i, old in enumerate(self._items):
                        if self._is_frame(old):
                            del self._items[i]
                            self.dropped += 1
                            break
            self._items.append(item)
            self.high_water = max(self.high_water, len(self._items))
            self._not_empty.notify()

    def get(self, timeout: float):
        with self._lock:
            if not self._items:
                self._not_empty.wait(timeout)
            if not self._items:
                return None
            item = self._items.popleft()
            self._not_full.notify()
            return item

    def clear(self) -> None:
        with self._lock:
            self._items.clear()
            self._not_full.notify_all()

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)


class _Connection:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.lock = threading.Lock()
        self.alive = True

    def send_message(self, data: bytes) -> bool:
        with self.lock:
            if not self.alive:
                return False
            try:
                self.sock.sendall(data)
                return True
            except OSError:
                self.alive = False
                return False

    def close(self) -> None:
        with self.lock:
            self.alive = False
            try:
                self.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self.sock.close()
            except OSError:
                pass


class _Session:
    """Per-stream processing state owned by exactly one worker."""

    def __init__(self, stream_id: int, state: TrackerState,
                 results: Optional[OrderedDict] = None):
        self.stream_id = stream_id
        self.state = state
        self.pending: dict[int, tuple[_Connection, Message]] = {}
        self.results: OrderedDict[int, bytes] = results or OrderedDict()
        self.halted = False
        self.error_bytes: Optional[bytes] = None

    @property
    def last_processed(self) -> int:
        return self.state.frame_no


def _ack_bytes(stream_id: int, frame_no: int) -> bytes:
    return encode_message(Message(MessageType.ACK, stream_id=stream_id, frame_no=frame_no))


def _result_bytes(stream_id: int, out: FrameOutput) -> bytes:
    return encode_message(
        Message(
            MessageType.TRACK_RESULT,
            stream_id=stream_id,
            frame_no=out.frame_no,
            tracks=out.tracks,
        )
    )


class _Worker(threading.Thread):
    def __init__(self, server: "Server", index: int):
        super().__init__(name=f"rmts-worker-{index}", daemon=True)
        self.server = server
        self.index = index
        self.queue = _BoundedQueue(server.config.queue_capacity)
        self.sessions: dict[int, _Session] = {}
        self.frames_processed = 0

    # -- session management

    def _ckpt_path(self, stream_id: int) -> Optional[Path]:
        if self.server.config.ckpt_dir is None:
            return None
        return Path(self.server.config.ckpt_dir) / f"{stream_id}.bin"

    def _load_or_create(self, stream_id: int) -> _Session:
        path = self._ckpt_path(stream_id)
        if path is not None and path.exists():
            payload = _decode_snapshot(path.read_bytes())
            if (
                not isinstance(payload, dict)
                or not isinstance(payload.get("state"), TrackerState)
            ):
                raise RestoreError(f"checkpoint {path} has an unexpected payload")
            session = _Session(
                stream_id,
                payload["state"],
                results=OrderedDict(sorted(payload.get("results", {}).items())),
            )
            log.info(
                "stream %d restored from %s at frame %d",
                stream_id, path, session.last_processed,
            )
            return session
        return _Session(stream_id, new_state(replace(self.server.config.tracker)))

    def _write_checkpoint(self, session: _Session) -> None:
        path = self._ckpt_path(session.stream_id)
        if path is None:
            return
        # Keep a tail of recent results so retransmits of frames already in
        # the restored state can still be answered after a restart.
        tail_len = self.server.config.reorder_window
        keys = list(session.results.keys())[-tail_len:]
        payload = {
            "stream_id": session.stream_id,
            "state": session.state,
            "results": {k: session.results[k] for k in keys},
        }
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(_encode_snapshot(payload))
        os.replace(tmp, path)

    # -- message handling

    def run(self) -> None:
        while True:
            item = self.queue.get(timeout=0.1)
            if item is None:
                if self.server._stopping.is_set():
                    break
                continue
            conn, msg = item
            try:
                self._dispatch(conn, msg)
            except RmtsError as exc:
                log.error("worker %d: %s", self.index, exc)
                conn.send_message(
                    encode_message(
                        Message(
                            MessageType.ERROR,
                            stream_id=msg.stream_id,
                            frame_no=msg.frame_no,
                            error_text=str(exc),
                        )
                    )
                )
        if self.server._flush_on_stop:
            for session in self.sessions.values():
                self._write_checkpoint(session)

    def _dispatch(self, conn: _Connection, msg: Message) -> None:
        if msg.msg_type == MessageType.STREAM_OPEN:
            session = self.sessions.get(msg.stream_id)
            if session is None:
                session = self._load_or_create(msg.stream_id)
                self.sessions[msg.stream_id] = session
            conn.send_message(_ack_bytes(msg.stream_id, session.last_processed))
        elif msg.msg_type == MessageType.FRAME:
            session = self.sessions.get(msg.stream_id)
            if session is None:
                session = self._load_or_create(msg.stream_id)
                self.sessions[msg.stream_id] = session
            self._handle_frame(conn, session, msg)
        elif msg.msg_type == MessageType.STREAM_CLOSE:
            session = self.sessions.get(msg.stream_id)
            if session is not None:
                self._write_checkpoint(session)
            last = session.last_processed if session is not None else 0
            conn.send_message(
                encode_message(
                    Message(
                        MessageType.STREAM_CLOSE, stream_id=msg.stream_id, frame_no=last
                    )
                )
            )
        else:
            log.warning("worker %d ignoring %s", self.index, msg.msg_type.name)

    def _handle_frame(self, conn: _Connection, session: _Session, msg: Message) -> None:
        if session.halted:
            if session.error_bytes is not None:
                conn.send_message(session.error_bytes)
            return
        fno = msg.frame_no
        nxt = session.last_processed + 1
        if fno < nxt:
            # Duplicate of an already-processed frame: answer from the cache,
            # never reprocess.
            cached = session.results.get(fno)
            if cached is not None:
                conn.send_message(cached)
            conn.send_message(_ack_bytes(session.stream_id, fno))
            return
        if fno == nxt:
            self._process(conn, session, msg)
            while session.last_processed + 1 in session.pending:
                pconn, pmsg = session.pending.pop(session.last_processed + 1)
                target = pconn if pconn.alive else conn
                self._process(target, session, pmsg)
            return
        if fno - nxt < self.server.config.reorder_window:
            # Out-of-order but within the window: hold it, newest connection
            # wins so replies go somewhere alive.
            session.pending[fno] = (conn, msg)
            return
        session.halted = True
        session.error_bytes = encode_message(
            Message(
                MessageType.ERROR,
                stream_id=session.stream_id,
                frame_no=fno,
                error_text=(
                    f"frame gap exceeds reorder window: missing {nxt}..{fno - 1}"
                ),
            )
        )
        conn.send_message(session.error_bytes)
        log.error("stream %d halted: missing frames %d..%d", session.stream_id, nxt, fno - 1)

    def _process(self, conn: _Connection, session: _Session, msg: Message) -> None:
        frame = FrameInput(
            stream_id=msg.stream_id,
            frame_no=msg.frame_no,
            detections=msg.detections,
            camera_motion=msg.camera_motion,
        )
        _, out = step(session.state, frame)
        result = _result_bytes(session.stream_id, out)
        session.results[msg.frame_no] = result
        while len(session.results) > self.server.config.result_cache:
            session.results.popitem(last=False)
        self.frames_processed += 1
        conn.send_message(result)
        conn.send_message(_ack_bytes(session.stream_id, msg.frame_no))
        if msg.frame_no % self.server.config.checkpoint_interval == 0:
            self._write_checkpoint(session)


class Server:
    """Accepts producer connections and fans frames out to tracker workers."""

    def __init__(self, config: ServerConfig):
        self.config = config.validate()
        self.workers = [_Worker(self, i) for i in range(config.worker_count)]
        self._listener: Optional[socket.socket] = None
        self._conns: list[_Connection] = []
        self._conns_lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        self._stopping = threading.Event()
        self._flush_on_stop = True
        self._started = False
        self.host = config.host
        self.port = config.port

    # -- lifecycle

    def start(self) -> "Server":
        if self.config.ckpt_dir is not None:
            Path(self.config.ckpt_dir).mkdir(parents=True, exist_ok=True)
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.config.host, self.config.port))
        listener.listen(32)
        listener.settimeout(0.2)
        self._listener = listener
        self.host, self.port = listener.getsockname()
        for w in self.workers:
            w.start()
        t = threading.Thread(target=self._accept_loop, name="rmts-accept", daemon=True)
        t.start()
        self._threads.append(t)
        t = threading.Thread(target=self._status_loop, name="rmts-status", daemon=True)
        t.start()
        self._threads.append(t)
        self._started = True
        log.info("serving on %s:%d with %d worker(s)", self.host, self.port,
                 self.config.worker_count)
        return self

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def stop(self, flush: bool = True) -> None:
        """Shut down.  With flush=False the server aborts as if it crashed:
        queued frames are discarded and no final checkpoints are written."""
        if not self._started:
            return
        self._flush_on_stop = flush
        if not flush:
            for w in self.workers:
                w.queue.clear()
        self._stopping.set()
        if self._listener is not None:
            self._listener.close()
        with self._conns_lock:
            for conn in self._conns:
                conn.close()
        for w in self.workers:
            w.join(timeout=10.0)
        self._started = False

    def stats(self) -> dict:
        return {
            "frames_per_worker": [w.frames_processed for w in self.workers],
            "queue_high_water": [w.queue.high_water for w in self.workers],
            "dropped_frames": [w.queue.dropped for w in self.workers],
        }

    # -- internals

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                sock, _addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Connection(sock)
            with self._conns_lock:
                self._conns.append(conn)
            t = threading.Thread(
                target=self._reader_loop, args=(conn,), name="rmts-reader", daemon=True
            )
            t.start()
            self._threads.append(t)

    def _reader_loop(self, conn: _Connection) -> None:
        decoder = StreamDecoder()
        conn.sock.settimeout(0.2)
        try:
            while not self._stopping.is_set() and conn.alive:
                try:
                    data = conn.sock.recv(1 << 16)
                except socket.timeout:
                    continue
                except OSError:
                    break
                if not data:
                    break
                for msg in decoder.feed(data):
                    self._route(conn, msg)
        except ProtocolError as exc:
            log.error("closing connection after protocol error: %s", exc)
        finally:
            conn.close()

    def _route(self, conn: _Connection, msg: Message) -> None:
        if msg.msg_type == MessageType.HELLO:
            conn.send_message(encode_message(Message(MessageType.HELLO)))
        elif msg.msg_type == MessageType.HEARTBEAT:
            conn.send_message(encode_message(Message(MessageType.HEARTBEAT)))
        elif msg.msg_type in (
            MessageType.STREAM_OPEN,
            MessageType.FRAME,
            MessageType.STREAM_CLOSE,
        ):
            worker = self.workers[msg.stream_id % self.config.worker_count]
            worker.queue.put((conn, msg), self.config.overload_policy)
        else:
            log.warning("ignoring unexpected %s from client", msg.msg_type.name)

    def _status_loop(self) -> None:
        prev = [0] * len(self.workers)
        while not self._stopping.wait(1.0):
            counts = [w.frames_processed for w in self.workers]
            deltas = [c - p for c, p in zip(counts, prev)]
            prev = counts
            if any(deltas):
                log.info(
                    "throughput: %s",
                    " ".join(f"worker{i}={d}fps" for i, d in enumerate(deltas)),
                )


# --------------------------------------------------------------------------
# producer


@dataclass
class ProducerConfig:
    stream_id: int = 1
    ack_timeout_ms: int = 500
    window: int = 64
    max_connect_attempts: int = 20
    connect_backoff_ms: int = 200
    handshake_timeout_ms: int = 1000
    give_up_after_s: Optional[float] = None


@dataclass
class ProducerReport:
    sent: int = 0
    retransmitted: int = 0
    acked: int = 0
    reconnects: int = 0
    connect_attempts: int = 0
    completed: bool = False
    wall_time: float = 0.0
    results: dict[int, tuple[OutputTrack, ...]] = field(default_factory=dict)


class ProducerError(ProtocolError):
    def __init__(self, message: str, report: ProducerReport):
        super().__init__(message)
        self.report = report


def results_to_outputs(report: ProducerReport, frame_count: int) -> list[FrameOutput]:
    return [
        FrameOutput(frame_no=f, tracks=report.results.get(f, ()))
        for f in range(1, frame_count + 1)
    ]


class _ProducerSession:
    def __init__(self, bundle: SequenceBundle, endpoint: str, rate: float,
                 cfg: ProducerConfig):
        host, _, port = endpoint.rpartition(":")
        if not host or not port.isdigit():
            raise InputError(f"endpoint must be host:port, got {endpoint!r}")
        self.addr = (host, int(port))
        self.cfg = cfg
        self.rate = rate
        self.report = ProducerReport()
        self.frame_count = bundle.frame_count
        self.encoded: dict[int, bytes] = {}
        gmc = bundle.camera_motion
        for fno in range(1, bundle.frame_count + 1):
            cm = gmc.get(fno) if isinstance(gmc, GmcTable) else None
            self.encoded[fno] = encode_message(
                frame_message(
                    cfg.stream_id, fno, bundle.detections.get(fno, ()), cm
                )
            )
        self.to_send: deque[int] = deque(range(1, self.frame_count + 1))
        self.outstanding: dict[int, float] = {}
        self.acked: set[int] = set()
        self.sock: Optional[socket.socket] = None
        self.decoder = StreamDecoder()
        self.t0 = time.monotonic()

    # -- connection management

    def _connect(self) -> None:
        cfg = self.cfg
        last_exc: Optional[Exception] = None
        for attempt in range(cfg.max_connect_attempts):
            self.report.connect_attempts += 1
            try:
                sock = socket.create_connection(self.addr, timeout=1.0)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                sock.settimeout(0.01)
                self.sock = sock
                self.decoder = StreamDecoder()
                server_last = self._handshake()
                self._rewind(server_last)
                return
            except (OSError, ProtocolError) as exc:
                last_exc = exc
                self._drop_socket()
                time.sleep(cfg.connect_backoff_ms / 1000.0)
        raise ProducerError(
            f"could not reach {self.addr[0]}:{self.addr[1]} after "
            f"{cfg.max_connect_attempts} attempts: {last_exc}",
            self.report,
        )

    def _drop_socket(self) -> None:
        if self.sock is not None:
            try:
                self.sock.close()
            except OSError:
                pass
        self.sock = None

    def _handshake(self) -> int:
        cfg = self.cfg
        self.sock.sendall(encode_message(Message(MessageType.HELLO)))
        open_bytes = encode_message(
            Message(MessageType.STREAM_OPEN, stream_id=cfg.stream_id)
        )
        deadline = time.monotonic() + cfg.handshake_timeout_ms / 1000.0
        self.sock.sendall(open_bytes)
        while time.monotonic() < deadline:
            for msg in self._recv_some():
                if (
                    msg.msg_type == MessageType.ACK
                    and msg.stream_id == cfg.stream_id
                ):
                    return msg.frame_no
                if msg.msg_type == MessageType.ERROR:
                    raise ProducerError(
                        f"server error during open: {msg.error_text}", self.report
                    )
        raise OSError("no answer to stream open")

    def _rewind(self, server_last: int) -> None:
        """Align the send plan with the server's restored position."""
        need = set()
        for fno in range(1, self.frame_count + 1):
            if fno > server_last:
                # The server must rebuild its state from here, even if we
                # already hold this frame's result (reprocessing is
                # deterministic, results are identical).
                need.add(fno)
            elif fno not in self.report.results:
                need.add(fno)
        self.to_send = deque(sorted(need))
        self.outstanding.clear()

    # -- wire helpers

    def _recv_some(self) -> list[Message]:
        try:
            data = self.sock.recv(1 << 16)
        except socket.timeout:
            return []
        if not data:
            raise OSError("connection closed by server")
        return self.decoder.feed(data)

    def _handle(self, msg: Message) -> None:
        if msg.msg_type == MessageType.ACK:
            if msg.frame_no >= 1 and msg.frame_no not in self.acked:
                self.acked.add(msg.frame_no)
                self.report.acked += 1
            self._maybe_settle(msg.frame_no)
        elif msg.msg_type == MessageType.TRACK_RESULT:
            self.report.results[msg.frame_no] = msg.tracks
            self._maybe_settle(msg.frame_no)
        elif msg.msg_type == MessageType.ERROR:
            raise ProducerError(f"server error: {msg.error_text}", self.report)

    def _maybe_settle(self, fno: int) -> None:
        # A frame stays outstanding (and keeps being retransmitted) until both
        # its acknowledgement and its result have arrived; either alone can be
        # lost on a faulty link.
        if fno in self.outstanding and fno in self.acked and fno in self.report.results:
            del self.outstanding[fno]

    def _complete(self) -> bool:
        return (
            not self.to_send
            and not self.outstanding
            and len(self.report.results) >= self.frame_count
            and len(self.acked) >= self.frame_count
        )

    def _due(self, fno: int) -> float:
        if self.rate <= 0:
            return self.t0
        return self.t0 + (fno - 1) / self.rate

    # -- main loop

    def run(self) -> ProducerReport:
        cfg = self.cfg
        started = time.monotonic()
        self.t0 = started  # pacing epoch
        self._connect()
        ack_timeout = cfg.ack_timeout_ms / 1000.0
        try:
            while not self._complete():
                if (
                    cfg.give_up_after_s is not None
                    and time.monotonic() - started > cfg.give_up_after_s
                ):
                    raise ProducerError("producer timed out", self.report)
                try:
                    for msg in self._recv_some():
                        self._handle(msg)
                    now = time.monotonic()
                    while (
                        self.to_send
                        and len(self.outstanding) < cfg.window
                        and now >= self._due(self.to_send[0])
                    ):
                        fno = self.to_send.popleft()
                        self.sock.sendall(self.encoded[fno])
                        self.report.sent += 1
                        self.outstanding[fno] = now
                    for fno in sorted(self.outstanding):
                        if now - self.outstanding[fno] >= ack_timeout:
                            self.sock.sendall(self.encoded[fno])
                            self.report.sent += 1
                            self.report.retransmitted += 1
                            self.outstanding[fno] = now
                except OSError:
                    self.report.reconnects += 1
                    self._drop_socket()
                    self._connect()
            self._close_stream()
            self.report.completed = True
        finally:
            self._drop_socket()
            self.report.wall_time = time.monotonic() - started
        return self.report

    def _close_stream(self) -> None:
        close_bytes = encode_message(
            Message(
                MessageType.STREAM_CLOSE,
                stream_id=self.cfg.stream_id,
                frame_no=self.frame_count,
            )
        )
        for _ in range(5):
            try:
                self.sock.sendall(close_bytes)
                deadline = time.monotonic() + 1.0
                while time.monotonic() < deadline:
                    for msg in self._recv_some():
                        if msg.msg_type == MessageType.STREAM_CLOSE:
                            return
                        self._handle(msg)
            except OSError:
                return  # all data is confirmed; closing is best-effort
        log.warning("stream close not acknowledged")


def producer_run(
    bundle: SequenceBundle,
    endpoint: str,
    rate: float = 0.0,
    cfg: Optional[ProducerConfig] = None,
) -> ProducerReport:
    """Replay a bundle against a server.

    Frames are paced at ``rate`` per second (0 = as fast as the
    acknowledgement window allows) and retransmitted until their tracking
    results arrive; the returned report carries the collected results.
    """
    return _ProducerSession(bundle, endpoint, rate, cfg or ProducerConfig()).run()
