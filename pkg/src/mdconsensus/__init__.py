"""Mechanism-design consensus: SR block commitment and Solomonic fork resolution."""

__version__ = "0.1.0"
