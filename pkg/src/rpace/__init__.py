"""Riemannian principal analysis by conditional expectation (RPACE)."""

version = "0.1.0"
