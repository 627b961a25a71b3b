"""PocketForge: flow-matching generation of enzyme catalytic pockets"""

__version__ = "0.1.0"
