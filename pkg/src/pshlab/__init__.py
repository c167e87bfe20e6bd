"""Discrete laboratory for Monge-Ampere volumes of omega-psh functions on flat tori."""

__version__ = "0.1.0"
