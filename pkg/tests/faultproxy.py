"""Message-level fault injection between producer and server.

The proxy decodes the framed protocol on both directions and re-emits each
message subject to seeded drop, duplication and short-range reordering, so
delivery faults happen at message granularity (as a lossy broker would see
them) while the byte framing stays intact.
"""
from __future__ import annotations

import socket
import threading

import numpy as np

from rmts.protocol import StreamDecoder, encode_message


class FaultyProxy:
    def __init__(
        self,
        upstream: str,
        drop: float = 0.1,
        duplicate: float = 0.05,
        reorder: float = 0.1,
        seed: int = 0,
    ):
        host, _, port = upstream.rpartition(":")
        self.upstream = (host, int(port))
        self.drop = drop
        self.duplicate = duplicate
        self.reorder = reorder
        self.rng = np.random.default_rng(seed)
        self.rng_lock = threading.Lock()
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind(("127.0.0.1", 0))
        self._listener.listen(8)
        self._listener.settimeout(0.2)
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self.stats = {"dropped": 0, "duplicated": 0, "reordered": 0}

    @property
    def endpoint(self) -> str:
        host, port = self._listener.getsockname()
        return f"{host}:{port}"

    def start(self) -> "FaultyProxy":
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)
        return self

    def stop(self) -> None:
        self._stop.set()
        self._listener.close()

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                client, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                server = socket.create_connection(self.upstream, timeout=1.0)
            except OSError:
                client.close()
                continue
            for src, dst in ((client, server), (server, client)):
                t = threading.Thread(
                    target=self._pump, args=(src, dst), daemon=True
                )
                t.start()
                self._threads.append(t)

    def _pump(self, src: socket.socket, dst: socket.socket) -> None:
        decoder = StreamDecoder()
        src.settimeout(0.2)
        held = None  # one message held back to create reordering
        try:
            while not self._stop.is_set():
                try:
                    data = src.recv(1 << 16)
                except socket.timeout:
                    continue
                except OSError:
                    break
                if not data:
                    break
                for msg in decoder.feed(data):
                    with self.rng_lock:
                        u_drop = self.rng.uniform()
                        u_dup = self.rng.uniform()
                        u_hold = self.rng.uniform()
                    if u_drop < self.drop:
                        self.stats["dropped"] += 1
                        continue
                    out = encode_message(msg)
                    if held is not None:
                        # deliver the new message first, then the held one
                        dst.sendall(out)
                        dst.sendall(held)
                        held = None
                        self.stats["reordered"] += 1
                        continue
                    if u_hold < self.reorder:
                        held = out
                        continue
                    dst.sendall(out)
                    if u_dup < self.duplicate:
                        dst.sendall(out)
                        self.stats["duplicated"] += 1
            if held is not None:
                dst.sendall(held)
        except OSError:
            pass
        finally:
            for s in (src, dst):
                try:
                    s.close()
                except OSError:
                    pass
