"""Learning rewards from demonstration-vs-agent preferences and optimizing
them with demonstration-seeded discrete soft actor-critic."""

__version__ = "0.1.0"
