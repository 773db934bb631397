"""Desk-scale constructions for nilpotent group actions on the interval.

Modules: group_core (matrix actions on lattices), interval_model (length
schemes and interval families), orbit_graph, markov_walk, path_decomposition,
distortion_search (path selection and certificates), pixton_maps, smoothing
and cli.
"""

__version__ = "0.1.0"
