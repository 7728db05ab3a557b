"""Transports carrying protocol messages between server and clients.

``SimTransport`` delivers messages in-process through per-pair FIFO queues
with an optional seeded latency model and keeps a reproducible delivery
log. ``CodecTransport`` wraps any transport and pushes every message
through the byte codec, so wire-format fidelity is exercised without
sockets. ``TcpClientRunner``/``TcpServerTransport`` move the same frames
over TCP for deployments outside the simulator.
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass, field

import numpy as np

from . import wire
from .errors import InvalidInput
from .protocol import ClientState, Message, client_handle


@dataclass
class DeliveryEvent:
    time: float
    sender: str
    receiver: str
    msg_type: str
    round_t: int


class SimTransport:
    """Deterministic in-process transport over client handler states.

    FIFO order holds per sender/receiver pair; with a latency seed the
    delivery times are drawn from a seeded exponential model, so the log
    is a pure function of (script, seed).
    """

    def __init__(self, clients: list[ClientState], latency_seed: int | None = None, mean_latency: float = 1.0):
        self._clients = {c.client_id: c for c in clients}
        if len(self._clients) != len(clients):
            raise InvalidInput("duplicate client ids")
        self._rng = np.random.default_rng(latency_seed) if latency_seed is not None else None
        self._mean_latency = mean_latency
        self._pair_clock: dict[tuple[str, str], float] = {}
        self.delivery_log: list[DeliveryEvent] = []

    def _deliver(self, sender: str, receiver: str, msg: Message) -> None:
        pair = (sender, receiver)
        now = self._pair_clock.get(pair, 0.0)
        delay = float(self._rng.exponential(self._mean_latency)) if self._rng is not None else 1.0
        at = now + delay
        self._pair_clock[pair] = at  # FIFO per pair: clock never rewinds
        self.delivery_log.append(
            DeliveryEvent(
                time=at,
                sender=sender,
                receiver=receiver,
                msg_type=type(msg).__name__,
                round_t=getattr(msg, "t", getattr(getattr(msg, "ensemble", None), "n_rounds", 0)),
            )
        )

    def exchange(self, client_id: int, msg: Message) -> Message | None:
        if client_id not in self._clients:
            raise InvalidInput(f"unknown endpoint {client_id}")
        self._deliver("server", f"client{client_id}", msg)
        resp = client_handle(self._clients[client_id], msg)
        if resp is not None:
            self._deliver(f"client{client_id}", "server", resp)
        return resp


class CodecTransport:
    """Round-trips every message and response through the byte codec."""

    def __init__(self, inner):
        self._inner = inner

    @property
    def delivery_log(self):
        return getattr(self._inner, "delivery_log", [])

    def exchange(self, client_id: int, msg: Message) -> Message | None:
        sent = wire.decode(wire.encode(msg))
        resp = self._inner.exchange(client_id, sent)
        if resp is None:
            return None
        return wire.decode(wire.encode(resp))


class LossyTransport:
    """Test helper: drops responses for selected (client, round) pairs."""

    def __init__(self, inner, drop: set[tuple[int, int]]):
        self._inner = inner
        self._drop = drop

    def exchange(self, client_id: int, msg: Message) -> Message | None:
        resp = self._inner.exchange(client_id, msg)
        if resp is not None and (client_id, getattr(msg, "t", -1)) in self._drop:
            return None
        return resp


# ---------------------------------------------------------------------------
# TCP layer: one framed stream per client.
# ---------------------------------------------------------------------------


def _read_frame(sock: socket.socket) -> bytes:
    header = _read_exact(sock, wire.HEADER.size)
    total = wire.frame_size_from_header(header)
    return header + _read_exact(sock, total - wire.HEADER.size)


def _read_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("peer closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


@dataclass
class TcpClientRunner:
    """Runs one client handler behind a listening socket."""

    state: ClientState
    host: str = "127.0.0.1"
    port: int = 0
    _server_sock: socket.socket | None = field(default=None, repr=False)
    _thread: threading.Thread | None = field(default=None, repr=False)

    def start(self) -> int:
        self._server_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server_sock.bind((self.host, self.port))
        self._server_sock.listen(1)
        self.port = self._server_sock.getsockname()[1]
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()
        return self.port

    def _serve(self) -> None:
        try:
            conn, _ = self._server_sock.accept()
        except OSError:
            return
        with conn:
            while True:
                try:
                    frame = _read_frame(conn)
                except (ConnectionError, OSError):
                    return
                msg = wire.decode(frame)
                resp = client_handle(self.state, msg)
                if resp is not None:
                    conn.sendall(wire.encode(resp))

    def stop(self) -> None:
        if self._server_sock is not None:
            try:
                self._server_sock.close()
            except OSError:
                pass


class TcpServerTransport:
    """Server-side transport holding one connection per client."""

    def __init__(self, endpoints: dict[int, tuple[str, int]], timeout: float | None = 30.0):
        self._socks: dict[int, socket.socket] = {}
        for cid, (host, port) in endpoints.items():
            s = socket.create_connection((host, port), timeout=timeout)
            s.settimeout(timeout)
            self._socks[cid] = s

    def exchange(self, client_id: int, msg: Message) -> Message | None:
        if client_id not in self._socks:
            raise InvalidInput(f"unknown endpoint {client_id}")
        sock = self._socks[client_id]
        sock.sendall(wire.encode(msg))
        try:
            return wire.decode(_read_frame(sock))
        except socket.timeout:
            return None  # caller turns this into a barrier timeout

    def close(self) -> None:
        for s in self._socks.values():
            try:
                s.close()
            except OSError:
                pass
