"""Device types, parameter validation, command application, and wire payloads.

Four device kinds are supported: bulb, fan, AC, and door lock. Commands are
whole-state replacements (a payload always carries every parameter of its
kind), so applying the same command twice is idempotent.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Union

DEVICE_ID_RE = re.compile(r"^[a-z][a-z0-9_]*$")
COLOR_RE = re.compile(r"^#[0-9a-fA-F]{6}$")

TEMP_MIN = 18
TEMP_MAX = 26

H_DIRECTIONS = ("rotate(0deg)", "rotate(-45deg)", "rotate(45deg)")
DOOR_STATUSES = ("locked", "unlocked")

DEFAULT_TOPIC_PREFIX = "ELL893/muneeb_majid/smarthome/mqtt"


class DeviceError(Exception):
    """Base for device-layer errors."""

    code = "device_error"


class DecodeError(DeviceError):
    """Raw payload is not a well-formed device command."""

    code = "decode_error"


class ValidationError(DeviceError):
    code = "validation_error"


class UnknownDevice(ValidationError):
    code = "unknown_device"


class KindMismatch(ValidationError):
    code = "kind_mismatch"


class RangeError(ValidationError):
    code = "range_error"


class InvalidValue(ValidationError):
    code = "invalid_value"


class DeviceKind(str, Enum):
    BULB = "bulb"
    FAN = "fan"
    AC = "ac"
    LOCK = "lock"


@dataclass(frozen=True)
class BulbParams:
    power: bool
    color: str


@dataclass(frozen=True)
class FanParams:
    power: bool


@dataclass(frozen=True)
class AcParams:
    power: bool
    h_direction: str
    temperature: int


@dataclass(frozen=True)
class LockParams:
    door_status: str


Params = Union[BulbParams, FanParams, AcParams, LockParams]

PARAMS_TYPE = {
    DeviceKind.BULB: BulbParams,
    DeviceKind.FAN: FanParams,
    DeviceKind.AC: AcParams,
    DeviceKind.LOCK: LockParams,
}

# Payload key order per kind, as printed on the wire.
PARAMS_KEYS = {
    DeviceKind.BULB: ("power", "color"),
    DeviceKind.FAN: ("power",),
    DeviceKind.AC: ("power", "h_direction", "temperature"),
    DeviceKind.LOCK: ("door_status",),
}

KIND_BY_KEYSET = {frozenset(keys): kind for kind, keys in PARAMS_KEYS.items()}


@dataclass(frozen=True)
class DeviceState:
    id: str
    kind: DeviceKind
    params: Params
    room: str


@dataclass(frozen=True)
class DeviceCommand:
    device: str
    params: Params


@dataclass(frozen=True)
class DeviceResponse:
    response: str


@dataclass
class HomeRegistry:
    devices: list[DeviceState] = field(default_factory=list)
    topic_prefix: str = DEFAULT_TOPIC_PREFIX

    def __post_init__(self):
        ids = [d.id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate device ids in registry: {ids}")
        for d in self.devices:
            if not DEVICE_ID_RE.match(d.id):
                raise ValueError(f"bad device id: {d.id!r}")
            if not d.room:
                raise ValueError(f"device {d.id}: room must be non-empty")

    def get(self, device_id: str) -> DeviceState | None:
        for d in self.devices:
            if d.id == device_id:
                return d
        return None

    def ids(self) -> list[str]:
        return [d.id for d in self.devices]


def capitalized(device_id: str) -> str:
    """First letter uppercased, rest untouched (`smart_bulb1` -> `Smart_bulb1`)."""
    return device_id[:1].upper() + device_id[1:]


def params_to_dict(params: Params) -> dict[str, Any]:
    kind = kind_of_params(params)
    return {key: getattr(params, key) for key in PARAMS_KEYS[kind]}


def kind_of_params(params: Params) -> DeviceKind:
    for kind, cls in PARAMS_TYPE.items():
        if isinstance(params, cls):
            return kind
    raise TypeError(f"not a params object: {params!r}")


def params_from_dict(obj: dict[str, Any]) -> Params:
    """Build a typed params object from a decoded JSON dict.

    The kind is inferred from the key set (the four schemas are disjoint).
    Structural problems (wrong keys, wrong JSON types) raise DecodeError;
    out-of-range or bad-literal values survive until validate_command.
    """
    if not isinstance(obj, dict):
        raise DecodeError(f"params must be an object, got {type(obj).__name__}")
    kind = KIND_BY_KEYSET.get(frozenset(obj))
    if kind is None:
        raise DecodeError(f"unrecognized params keys: {sorted(obj)}")
    fields: dict[str, Any] = {}
    for key in PARAMS_KEYS[kind]:
        value = obj[key]
        if key == "power":
            if not isinstance(value, bool):
                raise DecodeError(f"power must be a boolean, got {value!r}")
        elif key == "temperature":
            value = _coerce_temperature(value)
        elif not isinstance(value, str):
            raise DecodeError(f"{key} must be a string, got {value!r}")
        fields[key] = value
    return PARAMS_TYPE[kind](**fields)


def _coerce_temperature(value: Any) -> int:
    # The wire carries either 20 or "20" (both forms appear in real traffic).
    if isinstance(value, bool):
        raise DecodeError(f"temperature must be an integer, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return int(value, 10)
        except ValueError:
            raise DecodeError(f"temperature is not an integer: {value!r}") from None
    raise DecodeError(f"temperature must be an integer, got {value!r}")


def normalize_params(params: Params) -> Params:
    """Canonical stored form: bulb color lowercased."""
    if isinstance(params, BulbParams):
        return BulbParams(power=params.power, color=params.color.lower())
    return params


def validate_params(kind: DeviceKind, params: Params) -> None:
    """Raise KindMismatch/RangeError/InvalidValue unless params fit the kind."""
    expected = PARAMS_TYPE[kind]
    if not isinstance(params, expected):
        raise KindMismatch(
            f"params are {type(params).__name__}, expected {expected.__name__}"
        )
    if isinstance(params, BulbParams):
        if not COLOR_RE.match(params.color):
            raise InvalidValue(f"color must be #RRGGBB hex, got {params.color!r}")
    elif isinstance(params, AcParams):
        if params.h_direction not in H_DIRECTIONS:
            raise InvalidValue(
                f"h_direction must be one of {H_DIRECTIONS}, got {params.h_direction!r}"
            )
        if not (TEMP_MIN <= params.temperature <= TEMP_MAX):
            raise RangeError(
                f"temperature must be in {TEMP_MIN}-{TEMP_MAX}, got {params.temperature}"
            )
    elif isinstance(params, LockParams):
        if params.door_status not in DOOR_STATUSES:
            raise InvalidValue(
                f"door_status must be one of {DOOR_STATUSES}, got {params.door_status!r}"
            )


def validate_command(registry: HomeRegistry, cmd: DeviceCommand) -> None:
    """Raise a ValidationError subclass unless cmd is applicable to the registry."""
    state = registry.get(cmd.device)
    if state is None:
        raise UnknownDevice(f"no such device: {cmd.device!r}")
    validate_params(state.kind, cmd.params)


def response_for(state: DeviceState, params: Params) -> DeviceResponse:
    """Human-readable acknowledgement for the new params.

    Power devices: `<Capitalized id> Turned On|Off in <room>`.
    Lock: `<Capitalized id> Locked|Unlocked`.
    """
    name = capitalized(state.id)
    if isinstance(params, LockParams):
        verb = "Locked" if params.door_status == "locked" else "Unlocked"
        return DeviceResponse(f"{name} {verb}")
    onoff = "On" if params.power else "Off"  # type: ignore[union-attr]
    return DeviceResponse(f"{name} Turned {onoff} in {state.room}")


def apply_command(state: DeviceState, cmd: DeviceCommand) -> tuple[DeviceState, DeviceResponse]:
    """Replace the device's params with the command's and build the response.

    Precondition: the command validated against the registry and targets
    this state's id.
    """
    if cmd.device != state.id:
        raise ValueError(f"command for {cmd.device!r} applied to {state.id!r}")
    params = normalize_params(cmd.params)
    new_state = DeviceState(id=state.id, kind=state.kind, params=params, room=state.room)
    return new_state, response_for(state, params)


def encode_payload(cmd: DeviceCommand) -> bytes:
    """Compact UTF-8 JSON with keys `device` then `params` in Table-order."""
    obj = {"device": cmd.device, "params": params_to_dict(cmd.params)}
    return json.dumps(obj, separators=(",", ":")).encode("utf-8")


def decode_payload(raw: bytes | str) -> DeviceCommand:
    """Inverse of encode_payload; tolerant of key order and whitespace."""
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"payload is not UTF-8: {exc}") from None
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"payload is not JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise DecodeError("payload must be a JSON object")
    if set(obj) != {"device", "params"}:
        raise DecodeError(f"payload keys must be exactly device/params, got {sorted(obj)}")
    device = obj["device"]
    if not isinstance(device, str) or not DEVICE_ID_RE.match(device):
        raise DecodeError(f"bad device id: {device!r}")
    return DeviceCommand(device=device, params=params_from_dict(obj["params"]))


def command_from_wire(device: str, params_obj: dict[str, Any]) -> DeviceCommand:
    """Command from already-parsed JSON values (HTTP envelope path)."""
    if not isinstance(device, str) or not DEVICE_ID_RE.match(device):
        raise DecodeError(f"bad device id: {device!r}")
    return DeviceCommand(device=device, params=params_from_dict(params_obj))


def state_to_dict(state: DeviceState) -> dict[str, Any]:
    return {
        "id": state.id,
        "kind": state.kind.value,
        "room": state.room,
        "params": params_to_dict(state.params),
    }


def state_from_dict(obj: dict[str, Any]) -> DeviceState:
    try:
        kind = DeviceKind(obj["kind"])
        params = params_from_dict(obj["params"])
        state = DeviceState(id=obj["id"], kind=kind, params=params, room=obj["room"])
    except (KeyError, ValueError, TypeError) as exc:
        raise DecodeError(f"bad device state object: {exc}") from None
    validate_params(kind, params)
    return state


def registry_from_config(obj: dict[str, Any]) -> HomeRegistry:
    """Load a registry from its JSON config form.

    Shape: {"topic_prefix": str, "devices": [{"id","kind","room","initial_params"}]}.
    """
    devices = []
    for entry in obj.get("devices", []):
        try:
            kind = DeviceKind(entry["kind"])
            params = params_from_dict(entry["initial_params"])
            state = DeviceState(
                id=entry["id"], kind=kind, params=normalize_params(params), room=entry["room"]
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"bad registry entry {entry!r}: {exc}") from None
        validate_params(kind, state.params)
        devices.append(state)
    return HomeRegistry(
        devices=devices,
        topic_prefix=obj.get("topic_prefix", DEFAULT_TOPIC_PREFIX),
    )


def load_registry(path: str) -> HomeRegistry:
    with open(path, "r", encoding="utf-8") as fh:
        return registry_from_config(json.load(fh))


def home_fingerprint(states) -> str:
    """Order-independent SHA-256 over the canonical encoding of device states."""
    blob = json.dumps(
        sorted((state_to_dict(s) for s in states), key=lambda d: d["id"]),
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def default_registry() -> HomeRegistry:
    """The stock four-device home: one bulb, fan, AC, and door lock."""
    return HomeRegistry(
        devices=[
            DeviceState("smart_bulb1", DeviceKind.BULB, BulbParams(False, "#ffffff"), "living room"),
            DeviceState("smart_fan1", DeviceKind.FAN, FanParams(False), "living room"),
            DeviceState("smart_ac1", DeviceKind.AC, AcParams(False, "rotate(0deg)", 20), "bedroom"),
            DeviceState("smart_lock1", DeviceKind.LOCK, LockParams("locked"), "main door"),
        ]
    )
