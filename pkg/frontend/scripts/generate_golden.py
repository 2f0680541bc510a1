#!/usr/bin/env python3
"""Regenerate test/golden_payloads.json from the primary component's encoders.

The frontend must emit bytes identical to what the Python side produces;
these fixtures pin that contract. Requires the hearthwire package installed.
"""

import base64
import json
import os

from hearthwire import devices as dv
from hearthwire import signing as sg

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "test", "golden_payloads.json")

CARD_ACTIONS = [
    ("bulb power on", dv.DeviceCommand("smart_bulb1", dv.BulbParams(True, "#ffffff"))),
    ("bulb power off", dv.DeviceCommand("smart_bulb1", dv.BulbParams(False, "#ffffff"))),
    ("bulb color red", dv.DeviceCommand("smart_bulb1", dv.BulbParams(True, "#ff0000"))),
    ("fan power on", dv.DeviceCommand("smart_fan1", dv.FanParams(True))),
    ("fan power off", dv.DeviceCommand("smart_fan1", dv.FanParams(False))),
    ("ac defaults", dv.DeviceCommand("smart_ac1", dv.AcParams(True, "rotate(0deg)", 20))),
    ("ac off center 20", dv.DeviceCommand("smart_ac1", dv.AcParams(False, "rotate(0deg)", 20))),
    ("ac left 18", dv.DeviceCommand("smart_ac1", dv.AcParams(True, "rotate(-45deg)", 18))),
    ("ac right 26", dv.DeviceCommand("smart_ac1", dv.AcParams(True, "rotate(45deg)", 26))),
    ("lock locked", dv.DeviceCommand("smart_lock1", dv.LockParams("locked"))),
    ("lock unlocked", dv.DeviceCommand("smart_lock1", dv.LockParams("unlocked"))),
]

# fixed test-only key so the TS signer can be checked byte-for-byte
KEY = sg.generate_keypair(1024)
NUMBERS = KEY.private_key.private_numbers()

ENVELOPE = sg.IntentEnvelope(
    client_id="ui_client",
    commands=(
        dv.DeviceCommand("smart_bulb1", dv.BulbParams(True, "#ffffff")),
        dv.DeviceCommand("smart_ac1", dv.AcParams(False, "rotate(0deg)", 20)),
    ),
    issued_at=1_700_000_000_123,
)
PACKET = sg.sign_intent(ENVELOPE, KEY.private_key)

data = {
    "card_actions": [
        {
            "name": name,
            "device": cmd.device,
            "params": dv.params_to_dict(cmd.params),
            "payload": dv.encode_payload(cmd).decode("utf-8"),
        }
        for name, cmd in CARD_ACTIONS
    ],
    "envelope": {
        "client_id": ENVELOPE.client_id,
        "issued_at": ENVELOPE.issued_at,
        "commands": [
            {"device": c.device, "params": dv.params_to_dict(c.params)}
            for c in ENVELOPE.commands
        ],
        "canonical_bytes": sg.canonical_bytes(ENVELOPE).decode("utf-8"),
        "md5_hex": sg.intent_digest(ENVELOPE).hex(),
    },
    "rsa_key": {
        "bits": KEY.bits,
        "n": format(NUMBERS.public_numbers.n, "x"),
        "e": NUMBERS.public_numbers.e,
        "d": format(NUMBERS.d, "x"),
    },
    "signature_b64": base64.b64encode(PACKET.signature).decode("ascii"),
    "wire_packet": sg.packet_to_obj(PACKET),
}

with open(OUT, "w", encoding="utf-8") as fh:
    json.dump(data, fh, indent=2)
print(f"wrote {os.path.normpath(OUT)}")
