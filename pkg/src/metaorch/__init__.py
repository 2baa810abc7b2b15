"""MetaOrch: deterministic neural orchestration testbed.

Simulated heterogeneous agents, fuzzy response evaluation, a trainable
neural agent selector with baseline strategies, an experiment harness, and
a human-in-the-loop approval service.
"""

__version__ = "0.1.0"
