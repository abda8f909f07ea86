"""Constrained POMDP inspection-and-maintenance planning for
multi-component deteriorating systems.

The package combines exact belief updating over hidden-Markov
deterioration, life-cycle cost and risk accounting, hard budget and soft
risk constraints, a decentralized multi-agent actor-critic trainer, and
optimizable reference policies, behind a library API and the ``lcplan``
command line.
"""

__version__ = "0.1.0"
