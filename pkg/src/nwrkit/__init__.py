"""State-space reduction for weighted/parametric MDPs via never-worse-relation
under-approximations, with exact value oracles and an ETR/SMT exporter."""

__version__ = "0.1.0"
