from __future__ import annotations
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
import logging
import math
import queue
import threading
import time

from algorithms.admm import HorizonResult, SlotResult, solve_slot
from domain.errors import AgentDisconnected, DecodeError, ProtocolViolation, RegistrationTimeout
from domain.models import AgentId, Scenario, SolverOptions
from transport.channels import Address, Channel, Endpoint, Listener
from transport.protocol import (
    ERR_REJECTED,
    Done,
    Error,
    Iterate,
    Message,
    Primal,
    Register,
)

logger = logging.getLogger(__name__)

REGISTRATION_TIMEOUT = 10.0
REPLY_TIMEOUT = 30.0

Inbound = Tuple[AgentId, Union[Message, Exception, None]]


class _Session:
    """Зарегистрированные соединения и по потоку-читателю на каждое, все пишут в один inbox."""

    def __init__(self, scenario: Scenario, reply_timeout: float) -> None:
        self.scenario = scenario
        self.reply_timeout = reply_timeout
        self.channels: Dict[AgentId, Channel] = {}
        self.inbox: "queue.Queue[Inbound]" = queue.Queue()
        self._threads: List[threading.Thread] = []

    def register(self, listener: Listener, timeout: float) -> None:
        expected = {spec.id: spec.kind for spec in self.scenario.agents}
        deadline = time.monotonic() + timeout
        while len(self.channels) < len(expected):
            remaining = deadline - time.monotonic()
            missing = sorted(set(expected) - set(self.channels))
            try:
                if remaining <= 0:
                    raise TimeoutError
                ch = listener.accept(timeout=remaining)
                msg = ch.recv(timeout=max(deadline - time.monotonic(), 0.001))
            except TimeoutError:
                raise RegistrationTimeout(
                    f"registration timed out after {timeout:g}s; missing agents: {', '.join(missing)}"
                ) from None
            except DecodeError as exc:
                raise ProtocolViolation(f"malformed registration: {exc}") from exc

            if not isinstance(msg, Register):
                ch.close()
                raise ProtocolViolation(f"expected REG, got {type(msg).__name__ if msg else 'EOF'}")
            aid = msg.agent_id
            problem = None
            if aid not in expected:
                problem = f"unknown agent id {aid!r}"
            elif aid in self.channels:
                problem = f"agent id {aid!r} registered twice"
            elif msg.agent_kind != expected[aid]:
                problem = f"agent {aid!r} registered as {msg.agent_kind}, scenario says {expected[aid]}"
            if problem:
                ch.send(Error(code=ERR_REJECTED, detail=problem))
                ch.close()
                raise ProtocolViolation(problem, agent_id=aid)
            self.channels[aid] = ch
            logger.info("registered %s (%s), %d/%d", aid, msg.agent_kind, len(self.channels), len(expected))

        for aid, ch in self.channels.items():
            th = threading.Thread(target=self._read, args=(aid, ch), name=f"reader-{aid}", daemon=True)
            th.start()
            self._threads.append(th)

    def _read(self, aid: AgentId, ch: Channel) -> None:
        while True:
            try:
                msg = ch.recv(timeout=None)
            except (DecodeError, OSError, ValueError) as exc:
                self.inbox.put((aid, exc))
                return
            self.inbox.put((aid, msg))
            if msg is None:
                return

    def broadcast(self, msg: Message) -> None:
        for aid, ch in self.channels.items():
            try:
                ch.send(msg)
            except OSError as exc:
                raise AgentDisconnected(f"agent {aid} unreachable: {exc}", agent_id=aid) from exc

    def responder(self, ids: Sequence[AgentId]):
        def respond(t: int, k: int, lam: float, rho: float, mean: float, prev: Sequence[float]) -> List[float]:
            self.broadcast(Iterate(slot=t, iter=k, lam=lam, rho=rho, mean_power=mean))
            replies: Dict[AgentId, float] = {}
            # барьер: итерация k+1 не начнётся, пока не пришли все N ответов
            while len(replies) < len(ids):
                try:
                    aid, msg = self.inbox.get(timeout=self.reply_timeout)
                except queue.Empty:
                    late = sorted(set(ids) - set(replies))
                    raise AgentDisconnected(
                        f"slot {t} iter {k}: no reply within {self.reply_timeout:g}s from {', '.join(late)}",
                        agent_id=late[0],
                    ) from None
                replies[aid] = self._check_reply(aid, msg, t, k, replies)
            return [replies[aid] for aid in ids]

        return respond

    @staticmethod
    def _check_reply(aid: AgentId, msg: object, t: int, k: int, seen: Dict[AgentId, float]) -> float:
        if msg is None:
            raise AgentDisconnected(f"agent {aid} disconnected during slot {t}", agent_id=aid)
        if isinstance(msg, Exception):
            raise ProtocolViolation(f"agent {aid}: unreadable message: {msg}", agent_id=aid)
        if isinstance(msg, Error):
            raise ProtocolViolation(f"agent {aid} reported error {msg.code}: {msg.detail}", agent_id=aid)
        if not isinstance(msg, Primal):
            raise ProtocolViolation(f"agent {aid}: expected PRIM, got {msg.type}", agent_id=aid)
        if msg.agent_id != aid:
            raise ProtocolViolation(f"agent {aid} sent PRIM for {msg.agent_id!r}", agent_id=aid)
        if msg.slot != t or msg.iter != k:
            raise ProtocolViolation(
                f"agent {aid} echoed slot {msg.slot} iter {msg.iter}, pending is slot {t} iter {k}",
                agent_id=aid,
            )
        if aid in seen:
            raise ProtocolViolation(f"agent {aid} replied twice to iter {k}", agent_id=aid)
        return msg.power

    def close(self) -> None:
        for ch in self.channels.values():
            ch.close()
        for th in self._threads:
            th.join(timeout=1.0)


def _failed_slot(t: int, reason: str) -> SlotResult:
    return SlotResult(
        slot=t, clearing_price=math.nan, allocation={}, iterations=0, converged=False, failure=reason,
    )


def run_coordinator(
    endpoint: Endpoint,
    scenario: Scenario,
    options: Optional[SolverOptions] = None,
    registration_timeout: float = REGISTRATION_TIMEOUT,
    reply_timeout: float = REPLY_TIMEOUT,
    on_listening: Optional[Callable[[Optional[Address]], None]] = None,
) -> HorizonResult:
    """Итерации ADMM всех слотов через сообщения агентам; слоты идут по очереди."""
    options = options or scenario.solver
    listener = endpoint.listen()
    session = _Session(scenario, reply_timeout)
    try:
        if on_listening is not None:
            on_listening(listener.address)
        session.register(listener, registration_timeout)

        ids = scenario.agent_ids
        respond = session.responder(ids)
        slots: List[SlotResult] = []
        broken: Optional[str] = None
        for t in range(scenario.time_grid.slot_count):
            if broken is not None:
                slots.append(_failed_slot(t, broken))
                continue
            try:
                result = solve_slot(scenario, t, options, respond=respond)
            except AgentDisconnected as exc:
                # агенты хранят состояние по слотам: без одного из них дальше нельзя
                logger.error("slot %d failed: %s", t, exc)
                broken = str(exc)
                slots.append(_failed_slot(t, broken))
                continue
            slots.append(result)
            session.broadcast(Done(slot=t, clearing_price=result.clearing_price, converged=result.converged))
        return HorizonResult(scenario=scenario, slots=slots)
    finally:
        session.close()
        listener.close()
