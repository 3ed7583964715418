"""Federated and decentralized DPO on synthetic log-linear MDPs."""
__version__ = "0.1.0"
