"""weboracle: requirement-driven end-to-end web testing.

Natural-language requirements are parsed into (condition, action,
expectation) steps; a model gateway infers formal pre/post-condition
programs over symbolized GUI state; actions run against a web app driver
and the resulting trace is judged step by step. Everything is runnable
offline against simulated apps and scripted model profiles.
"""

__version__ = "0.1.0"
