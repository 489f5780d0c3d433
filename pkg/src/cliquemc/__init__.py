"""Metropolis, greedy and simulated-tempering dynamics on cliques of planted-clique graphs."""

__version__ = "0.1.0"
