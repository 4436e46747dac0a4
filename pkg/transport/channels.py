from __future__ import annotations
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple
import logging
import queue
import socket
import time

from transport.protocol import Message, decode_message, encode_message

logger = logging.getLogger(__name__)

Address = Tuple[str, int]


class Channel(ABC):
    """Двунаправленный канал сообщений. recv() возвращает None, когда другая сторона закрылась."""

    def __init__(self, transcript: Optional[List[bytes]] = None) -> None:
        self.transcript = transcript

    def send(self, msg: Message) -> None:
        line = encode_message(msg)
        if self.transcript is not None:
            self.transcript.append(line)
        self._send_line(line)

    def recv(self, timeout: Optional[float] = None) -> Optional[Message]:
        line = self._recv_line(timeout)
        if line is None:
            return None
        return decode_message(line)

    @abstractmethod
    def _send_line(self, line: bytes) -> None: ...

    @abstractmethod
    def _recv_line(self, timeout: Optional[float]) -> Optional[bytes]: ...

    @abstractmethod
    def close(self) -> None: ...


class QueueChannel(Channel):
    def __init__(self, inbox: "queue.Queue[Optional[bytes]]", outbox: "queue.Queue[Optional[bytes]]") -> None:
        super().__init__()
        self._inbox = inbox
        self._outbox = outbox
        self._closed = False

    @classmethod
    def pair(cls) -> Tuple["QueueChannel", "QueueChannel"]:
        a_to_b: "queue.Queue[Optional[bytes]]" = queue.Queue()
        b_to_a: "queue.Queue[Optional[bytes]]" = queue.Queue()
        return cls(b_to_a, a_to_b), cls(a_to_b, b_to_a)

    def _send_line(self, line: bytes) -> None:
        if self._closed:
            raise ConnectionError("channel is closed")
        self._outbox.put(line)

    def _recv_line(self, timeout: Optional[float]) -> Optional[bytes]:
        try:
            return self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError(f"no message within {timeout}s") from None

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(None)


class SocketChannel(Channel):
    def __init__(self, sock: socket.socket) -> None:
        super().__init__()
        self._sock = sock
        self._reader = sock.makefile("rb")

    def _send_line(self, line: bytes) -> None:
        self._sock.sendall(line)

    def _recv_line(self, timeout: Optional[float]) -> Optional[bytes]:
        self._sock.settimeout(timeout)
        try:
            line = self._reader.readline()
        except socket.timeout:
            raise TimeoutError(f"no message within {timeout}s") from None
        except OSError:
            # соединение сброшено: для протокола это то же, что EOF
            return None
        return line or None

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._reader.close()
        self._sock.close()


class Listener(ABC):
    @property
    @abstractmethod
    def address(self) -> Optional[Address]: ...

    @abstractmethod
    def accept(self, timeout: Optional[float]) -> Channel: ...

    def close(self) -> None:
        pass


class InProcessHub(Listener):
    """Агент "подключается", создавая пару очередей; координатор принимает другой конец."""

    def __init__(self) -> None:
        self._pending: "queue.Queue[Channel]" = queue.Queue()

    @property
    def address(self) -> Optional[Address]:
        return None

    def connect(self) -> Channel:
        coordinator_side, agent_side = QueueChannel.pair()
        self._pending.put(coordinator_side)
        return agent_side

    def accept(self, timeout: Optional[float]) -> Channel:
        try:
            return self._pending.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError("no agent connected") from None


class TcpListener(Listener):
    def __init__(self, host: str, port: int) -> None:
        self._server = socket.create_server((host, port))
        logger.info("listening on %s:%d", *self.address)

    @property
    def address(self) -> Address:
        host, port = self._server.getsockname()[:2]
        return host, port

    def accept(self, timeout: Optional[float]) -> Channel:
        self._server.settimeout(timeout)
        try:
            conn, peer = self._server.accept()
        except socket.timeout:
            raise TimeoutError("no agent connected") from None
        conn.settimeout(None)
        logger.debug("connection from %s:%d", *peer[:2])
        return SocketChannel(conn)

    def close(self) -> None:
        self._server.close()


def parse_address(text: str) -> Address:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


@dataclass
class Endpoint:
    kind: Literal["inprocess", "tcp"] = "inprocess"
    host: str = "127.0.0.1"
    port: int = 0
    hub: InProcessHub = field(default_factory=InProcessHub)

    @classmethod
    def tcp(cls, address: str) -> "Endpoint":
        host, port = parse_address(address)
        return cls(kind="tcp", host=host, port=port)

    def listen(self) -> Listener:
        if self.kind == "inprocess":
            return self.hub
        return TcpListener(self.host, self.port)

    def connect(self, timeout: float = 10.0) -> Channel:
        if self.kind == "inprocess":
            return self.hub.connect()
        deadline = time.monotonic() + timeout
        while True:
            # координатор мог ещё не подняться
            try:
                sock = socket.create_connection((self.host, self.port), timeout=timeout)
            except ConnectionRefusedError:
                if time.monotonic() >= deadline:
                    raise
                time.sleep(0.05)
                continue
            sock.settimeout(None)
            return SocketChannel(sock)
