"""hearthwire: self-hosted smart-home control plane and protocol testbed."""

__version__ = "0.1.0"
