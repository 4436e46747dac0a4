from __future__ import annotations
from typing import Dict, Optional


class ScenarioError(ValueError):
    """Документ сценария не соответствует схеме или нарушает инвариант."""


class InfeasibleSlotError(ScenarioError):
    def __init__(self, slot: int, detail: str) -> None:
        super().__init__(f"slot {slot} is infeasible: {detail}")
        self.slot = slot


class AgentDomainError(ValueError):
    pass


class UmaxOverflowError(AgentDomainError):
    pass


class SolverError(RuntimeError):
    pass


class HorizonError(RuntimeError):
    """Один или несколько слотов горизонта упали; errors: слот -> исключение."""

    def __init__(self, errors: Dict[int, Exception]) -> None:
        detail = "; ".join(f"slot {t}: {exc}" for t, exc in sorted(errors.items()))
        super().__init__(f"{len(errors)} slot(s) failed: {detail}")
        self.errors = errors


class OracleError(RuntimeError):
    pass


class BracketError(OracleError):
    def __init__(self, slot: int, lo: float, hi: float, f_lo: float, f_hi: float) -> None:
        super().__init__(
            f"slot {slot}: excess supply has no sign change on [{lo:g}, {hi:g}] "
            f"(f(lo)={f_lo:g} kW, f(hi)={f_hi:g} kW)"
        )
        self.slot = slot
        self.bracket = (lo, hi)


class TooManyAgentsError(OracleError):
    pass


class EmptyGridError(OracleError):
    pass


class EncodeError(ValueError):
    pass


class DecodeError(ValueError):
    pass


class ProtocolError(RuntimeError):
    def __init__(self, message: str, agent_id: Optional[str] = None) -> None:
        super().__init__(message)
        self.agent_id = agent_id


class RegistrationTimeout(ProtocolError):
    pass


class AgentDisconnected(ProtocolError):
    pass


class ProtocolViolation(ProtocolError):
    pass


class RunDataError(RuntimeError):
    pass
