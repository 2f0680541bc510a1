"""Allow/deny topic authorization, shaped like cloud-IAM IoT policies.

A policy is an ordered list of statements over the actions connect, publish,
and subscribe. Topic patterns are literal except for a trailing `*`, which
prefix-matches (`*` alone matches everything). The default is deny, and an
explicit Deny always wins over Allow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

ACTIONS = ("connect", "publish", "subscribe")


class PolicyError(Exception):
    pass


class Effect(str, Enum):
    ALLOW = "Allow"
    DENY = "Deny"


@dataclass(frozen=True)
class Statement:
    effect: Effect
    actions: frozenset[str]
    topic_patterns: tuple[str, ...]

    def __post_init__(self):
        bad = self.actions - set(ACTIONS)
        if bad:
            raise PolicyError(f"unknown actions: {sorted(bad)}")

    def covers(self, action: str, topic: str) -> bool:
        return action in self.actions and any(
            pattern_matches(p, topic) for p in self.topic_patterns
        )


@dataclass(frozen=True)
class PolicyDocument:
    statements: tuple[Statement, ...] = field(default_factory=tuple)


DENY_ALL = PolicyDocument()

PERMISSIVE = PolicyDocument(
    statements=(
        Statement(effect=Effect.ALLOW, actions=frozenset(ACTIONS), topic_patterns=("*",)),
    )
)


def pattern_matches(pattern: str, topic: str) -> bool:
    """Trailing `*` prefix-matches; `*` alone matches everything; else exact."""
    if pattern == "*":
        return True
    if pattern.endswith("*"):
        return topic.startswith(pattern[:-1])
    return topic == pattern


def authorize(policy: PolicyDocument, action: str, topic: str) -> Effect:
    """Explicit Deny wins over Allow; no matching statement means Deny.

    For the connect action the `topic` argument carries the client id.
    """
    if action not in ACTIONS:
        raise PolicyError(f"unknown action: {action!r}")
    allowed = False
    for statement in policy.statements:
        if statement.covers(action, topic):
            if statement.effect is Effect.DENY:
                return Effect.DENY
            allowed = True
    return Effect.ALLOW if allowed else Effect.DENY


def statement_from_obj(obj: dict[str, Any]) -> Statement:
    try:
        effect = Effect(obj["effect"])
        actions = obj["actions"]
        topics = obj["topics"]
    except (KeyError, ValueError) as exc:
        raise PolicyError(f"bad statement {obj!r}: {exc}") from None
    if not isinstance(actions, list) or not all(isinstance(a, str) for a in actions):
        raise PolicyError(f"actions must be a list of strings: {actions!r}")
    if not isinstance(topics, list) or not all(isinstance(t, str) for t in topics):
        raise PolicyError(f"topics must be a list of strings: {topics!r}")
    return Statement(
        effect=effect, actions=frozenset(actions), topic_patterns=tuple(topics)
    )


def policy_from_obj(obj: dict[str, Any]) -> PolicyDocument:
    """Parse `{"statements": [{"effect","actions","topics"}, ...]}`."""
    if not isinstance(obj, dict) or "statements" not in obj:
        raise PolicyError("policy document must carry a statements list")
    statements = obj["statements"]
    if not isinstance(statements, list):
        raise PolicyError("statements must be a list")
    return PolicyDocument(statements=tuple(statement_from_obj(s) for s in statements))


def policy_to_obj(policy: PolicyDocument) -> dict[str, Any]:
    return {
        "statements": [
            {
                "effect": s.effect.value,
                "actions": sorted(s.actions),
                "topics": list(s.topic_patterns),
            }
            for s in policy.statements
        ]
    }


@dataclass
class BrokerPolicyConfig:
    """Named policies plus client-id bindings; unknown clients get the default."""

    policies: dict[str, PolicyDocument] = field(default_factory=dict)
    bindings: dict[str, str] = field(default_factory=dict)
    default_policy: str | None = None

    def policy_for(self, client_id: str) -> PolicyDocument:
        name = self.bindings.get(client_id, self.default_policy)
        if name is None:
            return DENY_ALL
        try:
            return self.policies[name]
        except KeyError:
            raise PolicyError(f"policy {name!r} is not defined") from None


def broker_config_from_obj(obj: dict[str, Any]) -> BrokerPolicyConfig:
    policies = {
        name: policy_from_obj(doc) for name, doc in obj.get("policies", {}).items()
    }
    config = BrokerPolicyConfig(
        policies=policies,
        bindings=dict(obj.get("bindings", {})),
        default_policy=obj.get("default_policy"),
    )
    if config.default_policy is not None and config.default_policy not in policies:
        raise PolicyError(f"default_policy {config.default_policy!r} is not defined")
    for client, name in config.bindings.items():
        if name not in policies:
            raise PolicyError(f"binding for {client!r} references unknown policy {name!r}")
    return config


def load_broker_config(path: str) -> BrokerPolicyConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return broker_config_from_obj(json.load(fh))


def permissive_config() -> BrokerPolicyConfig:
    """Everything allowed for everyone; the out-of-the-box development mode."""
    return BrokerPolicyConfig(
        policies={"permissive": PERMISSIVE}, bindings={}, default_policy="permissive"
    )
