"""Построчный протокол между агрегатором MLA и его агентами.

Одно сообщение на строку, ``TYPE key=value ...``:

    REG  id=<string> kind=<lac|tpp|pv|grid>
    ITER slot=<u> iter=<u> lambda=<f> rho=<f> mean=<f>
    PRIM id=<string> slot=<u> iter=<u> power=<f>
    DONE slot=<u> price=<f> converged=<0|1>
    ERR  code=<u> msg=<quoted>

Числа пишутся с 17 значащими цифрами: любой float64 восстанавливается точно.
"""
from __future__ import annotations
from typing import Callable, Dict, Literal, Union
import math
import shlex

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from domain.errors import DecodeError, EncodeError

AGENT_ID_PATTERN = r"^[A-Za-z0-9_.:-]+$"

ERR_MALFORMED = 1
ERR_BAD_PARAMETER = 2
ERR_UNEXPECTED = 3
ERR_REJECTED = 4


class _Message(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class Register(_Message):
    type: Literal["REG"] = "REG"
    agent_id: str = Field(pattern=AGENT_ID_PATTERN)
    agent_kind: Literal["lac", "tpp", "pv", "grid"]


class Iterate(_Message):
    """Координатор -> агенты: только цена, штраф и средняя мощность."""

    type: Literal["ITER"] = "ITER"
    slot: int = Field(ge=0)
    iter: int = Field(ge=0)
    lam: float
    rho: float
    mean_power: float


class Primal(_Message):
    type: Literal["PRIM"] = "PRIM"
    agent_id: str = Field(pattern=AGENT_ID_PATTERN)
    slot: int = Field(ge=0)
    iter: int = Field(ge=0)
    power: float


class Done(_Message):
    type: Literal["DONE"] = "DONE"
    slot: int = Field(ge=0)
    clearing_price: float
    converged: bool


class Error(_Message):
    type: Literal["ERR"] = "ERR"
    code: int = Field(ge=0)
    detail: str = Field(pattern=r"^[^\r\n]*$")


Message = Union[Register, Iterate, Primal, Done, Error]

# wire key -> model field, per message type
_FIELDS: Dict[str, Dict[str, str]] = {
    "REG": {"id": "agent_id", "kind": "agent_kind"},
    "ITER": {"slot": "slot", "iter": "iter", "lambda": "lam", "rho": "rho", "mean": "mean_power"},
    "PRIM": {"id": "agent_id", "slot": "slot", "iter": "iter", "power": "power"},
    "DONE": {"slot": "slot", "price": "clearing_price", "converged": "converged"},
    "ERR": {"code": "code", "msg": "detail"},
}
_MODELS = {"REG": Register, "ITER": Iterate, "PRIM": Primal, "DONE": Done, "ERR": Error}


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise EncodeError(f"non-finite value {x!r} cannot be sent")
    return format(x, ".17g")


def _format(value: object) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def encode_message(msg: Message) -> bytes:
    keys = _FIELDS[msg.type]
    parts = [msg.type]
    for key, attr in keys.items():
        value = getattr(msg, attr)
        text = shlex.quote(value) if msg.type == "ERR" and key == "msg" else _format(value)
        parts.append(f"{key}={text}")
    return (" ".join(parts) + "\n").encode("utf-8")


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite number {text!r}")
    return value


def _parse_bool(text: str) -> bool:
    if text not in ("0", "1"):
        raise ValueError(f"expected 0 or 1, got {text!r}")
    return text == "1"


_PARSERS: Dict[str, Callable[[str], object]] = {
    "slot": int, "iter": int, "code": int,
    "lambda": _parse_float, "rho": _parse_float, "mean": _parse_float,
    "power": _parse_float, "price": _parse_float,
    "converged": _parse_bool,
}


def decode_message(line: Union[bytes, str]) -> Message:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"not UTF-8: {exc}") from exc
    try:
        tokens = shlex.split(line.strip())
    except ValueError as exc:
        raise DecodeError(f"unbalanced quoting in {line!r}") from exc
    if not tokens:
        raise DecodeError("empty line")

    kind, *pairs = tokens
    if kind not in _FIELDS:
        raise DecodeError(f"unknown message type {kind!r}")
    keys = _FIELDS[kind]

    values: Dict[str, object] = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or key not in keys:
            raise DecodeError(f"{kind}: unexpected field {pair!r}")
        if keys[key] in values:
            raise DecodeError(f"{kind}: duplicate field {key!r}")
        try:
            values[keys[key]] = _PARSERS.get(key, str)(raw)
        except ValueError as exc:
            raise DecodeError(f"{kind}: bad value for {key}: {exc}") from exc

    missing = [k for k, attr in keys.items() if attr not in values]
    if missing:
        raise DecodeError(f"{kind}: missing field(s) {', '.join(missing)}")
    try:
        return _MODELS[kind].model_validate(values)
    except ValidationError as exc:
        raise DecodeError(f"{kind}: {exc.errors()[0]['msg']}") from exc
