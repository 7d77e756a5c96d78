"""Exact-arithmetic workbench for fibred neural networks and fibred modal logic."""
