"""Topic names, topic filters, and MQTT 3.1.1 wildcard matching."""

from __future__ import annotations

from .packets import ProtocolError


def validate_topic_name(topic: str) -> None:
    """Publishable topic: at least one char, no wildcards, no U+0000."""
    if not topic:
        raise ProtocolError("topic name must be at least one character")
    if "+" in topic or "#" in topic:
        raise ProtocolError(f"topic name may not contain wildcards: {topic!r}")
    if "\x00" in topic:
        raise ProtocolError("topic name may not contain U+0000")


def validate_topic_filter(topic_filter: str) -> None:
    """Subscription filter: `+` fills a whole level, `#` only ends the filter."""
    if not topic_filter:
        raise ProtocolError("topic filter must be at least one character")
    if "\x00" in topic_filter:
        raise ProtocolError("topic filter may not contain U+0000")
    levels = topic_filter.split("/")
    for i, level in enumerate(levels):
        if "#" in level:
            if level != "#" or i != len(levels) - 1:
                raise ProtocolError(f"'#' must be the final whole level: {topic_filter!r}")
        if "+" in level and level != "+":
            raise ProtocolError(f"'+' must occupy a whole level: {topic_filter!r}")


def topic_matches(topic_filter: str, topic: str) -> bool:
    """MQTT 3.1.1 matching: `+` one level, `#` zero or more trailing levels.

    Wildcard-led filters deliberately do not match `$`-prefixed topics.
    """
    filter_levels = topic_filter.split("/")
    if topic.startswith("$") and filter_levels[0] in ("+", "#"):
        return False
    topic_levels = topic.split("/")
    for i, level in enumerate(filter_levels):
        if level == "#":
            return True  # also matches the parent level itself
        if i >= len(topic_levels):
            return False
        if level == "+":
            continue
        if level != topic_levels[i]:
            return False
    return len(filter_levels) == len(topic_levels)
