"""Connectivity, capacity and delay of wireless ad hoc networks with random node failures."""

__version__ = "0.1.0"
