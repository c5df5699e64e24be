"""Desk-scale data mesh: platform nodes, a metadata service, a search hub,
federated aggregates and a pillar conformance checker."""

__version__ = "0.1.0"
