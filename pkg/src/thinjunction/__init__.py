"""Multiscale asymptotics for convection-dominated transport in a thin three-cylinder junction."""

__version__ = "0.1.0"
