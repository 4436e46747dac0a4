from __future__ import annotations
from dataclasses import dataclass, field
from typing import Dict, List, Optional
import logging

from algorithms.agents import BestResponseInput, best_response
from domain.errors import AgentDomainError, DecodeError, ProtocolViolation, SolverError
from domain.models import AgentSpec, NetPower
from transport.channels import Endpoint
from transport.protocol import (
    ERR_BAD_PARAMETER,
    ERR_MALFORMED,
    ERR_UNEXPECTED,
    Done,
    Error,
    Iterate,
    Primal,
    Register,
)

logger = logging.getLogger(__name__)


@dataclass
class AgentSession:
    agent_id: str
    primals_sent: Dict[int, int] = field(default_factory=dict)
    done: List[Done] = field(default_factory=list)


def run_agent(
    endpoint: Endpoint,
    spec: AgentSpec,
    timeout: Optional[float] = None,
    transcript: Optional[List[bytes]] = None,
) -> AgentSession:
    """
    Регистрация, затем по одному PRIM на каждый ITER, пока координатор не закроет канал.

    Наружу уходят только id, вид агента и мощности; параметры кривых из spec
    остаются локальными.
    """
    channel = endpoint.connect()
    channel.transcript = transcript
    session = AgentSession(agent_id=spec.id)
    slot: Optional[int] = None
    expected_iter = 0
    prev: NetPower = 0.0

    def fail(code: int, detail: str) -> ProtocolViolation:
        channel.send(Error(code=code, detail=detail))
        logger.error("%s: %s", spec.id, detail)
        return ProtocolViolation(detail, agent_id=spec.id)

    try:
        channel.send(Register(agent_id=spec.id, agent_kind=spec.kind))
        while True:
            try:
                msg = channel.recv(timeout=timeout)
            except DecodeError as exc:
                raise fail(ERR_MALFORMED, f"cannot decode message: {exc}") from exc
            if msg is None:
                logger.info("%s: coordinator closed the session", spec.id)
                return session

            if isinstance(msg, Iterate):
                if msg.iter == 0:
                    # новый слот: старт из нуля
                    slot, expected_iter, prev = msg.slot, 0, 0.0
                elif msg.slot != slot or msg.iter != expected_iter:
                    raise fail(ERR_UNEXPECTED, f"unexpected ITER slot={msg.slot} iter={msg.iter}")
                try:
                    inp = BestResponseInput(lam=msg.lam, rho=msg.rho, anchor=prev - msg.mean_power, slot=msg.slot)
                    power = best_response(spec, inp)
                except (AgentDomainError, IndexError) as exc:
                    raise fail(ERR_BAD_PARAMETER, f"bad ITER parameters: {exc}") from exc
                except SolverError as exc:
                    raise fail(ERR_BAD_PARAMETER, str(exc)) from exc
                channel.send(Primal(agent_id=spec.id, slot=msg.slot, iter=msg.iter, power=power))
                prev = power
                expected_iter += 1
                session.primals_sent[msg.slot] = session.primals_sent.get(msg.slot, 0) + 1
            elif isinstance(msg, Done):
                session.done.append(msg)
                logger.debug("%s: slot %d done at %.4f", spec.id, msg.slot, msg.clearing_price)
            elif isinstance(msg, Error):
                raise ProtocolViolation(f"coordinator error {msg.code}: {msg.detail}", agent_id=spec.id)
            else:
                raise fail(ERR_UNEXPECTED, f"unexpected {msg.type} from coordinator")
    finally:
        channel.close()
