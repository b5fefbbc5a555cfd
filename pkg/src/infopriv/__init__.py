"""Privacy-utility tradeoff toolkit.

Designs privacy preserving channels that minimize average or maximum
information leakage under distortion budgets, and audits finite mechanisms
under information leakage, differential privacy and information privacy.
"""
