import random
import string

import pytest
from hypothesis import strategies as st

from hearthwire import devices as dv


def bulb_params():
    return st.builds(
        dv.BulbParams,
        power=st.booleans(),
        color=st.from_regex(r"#[0-9a-f]{6}", fullmatch=True),
    )


def fan_params():
    return st.builds(dv.FanParams, power=st.booleans())


def ac_params():
    return st.builds(
        dv.AcParams,
        power=st.booleans(),
        h_direction=st.sampled_from(dv.H_DIRECTIONS),
        temperature=st.integers(min_value=dv.TEMP_MIN, max_value=dv.TEMP_MAX),
    )


def lock_params():
    return st.builds(dv.LockParams, door_status=st.sampled_from(dv.DOOR_STATUSES))


PARAMS_STRATEGY = {
    dv.DeviceKind.BULB: bulb_params(),
    dv.DeviceKind.FAN: fan_params(),
    dv.DeviceKind.AC: ac_params(),
    dv.DeviceKind.LOCK: lock_params(),
}

DEVICE_IDS = {
    dv.DeviceKind.BULB: "smart_bulb1",
    dv.DeviceKind.FAN: "smart_fan1",
    dv.DeviceKind.AC: "smart_ac1",
    dv.DeviceKind.LOCK: "smart_lock1",
}


def valid_commands():
    """Random valid command for one of the stock registry devices."""
    return st.sampled_from(list(dv.DeviceKind)).flatmap(
        lambda kind: PARAMS_STRATEGY[kind].map(
            lambda params: dv.DeviceCommand(device=DEVICE_IDS[kind], params=params)
        )
    )


def random_valid_command(rng: random.Random) -> dv.DeviceCommand:
    """Plain-random counterpart of valid_commands for high-volume loops."""
    kind = rng.choice(list(dv.DeviceKind))
    if kind is dv.DeviceKind.BULB:
        params = dv.BulbParams(
            power=rng.random() < 0.5,
            color="#" + "".join(rng.choice(string.hexdigits.lower()[:16]) for _ in range(6)),
        )
    elif kind is dv.DeviceKind.FAN:
        params = dv.FanParams(power=rng.random() < 0.5)
    elif kind is dv.DeviceKind.AC:
        params = dv.AcParams(
            power=rng.random() < 0.5,
            h_direction=rng.choice(dv.H_DIRECTIONS),
            temperature=rng.randint(dv.TEMP_MIN, dv.TEMP_MAX),
        )
    else:
        params = dv.LockParams(door_status=rng.choice(dv.DOOR_STATUSES))
    return dv.DeviceCommand(device=DEVICE_IDS[kind], params=params)


@pytest.fixture
def registry():
    return dv.default_registry()
