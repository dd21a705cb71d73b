"""idsentinel: a desk-scale identity-security testbed.

A minimal OAuth 2.0 deployment is driven with labeled benign and attack
traffic, every request is logged in a shared access log, and a rule-based
detection engine turns the log into triaged anomaly events with blast-radius
projection for the operator console.
"""

__version__ = "0.1.0"
