"""Graph-based recommendation over heterogeneous user interactions.

Personalized PageRank on a typed interaction graph, with per-edge-type
weights learned by a genetic algorithm.
"""

__version__ = "0.1.0"
