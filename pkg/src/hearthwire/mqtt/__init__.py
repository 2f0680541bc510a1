"""Embedded MQTT 3.1.1-subset stack: codec, topic matching, policies, broker, client."""

from .packets import (  # noqa: F401
    Connack,
    Connect,
    Disconnect,
    MqttPacket,
    Pingreq,
    Pingresp,
    ProtocolError,
    Puback,
    Publish,
    Suback,
    Subscribe,
    Unsuback,
    Unsubscribe,
    decode_packet,
    encode_packet,
)
from .topics import topic_matches, validate_topic_filter, validate_topic_name  # noqa: F401
from .policy import Effect, PolicyDocument, Statement, authorize  # noqa: F401
