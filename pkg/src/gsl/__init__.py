"""Generalist-specialist policy learning.

Train one generalist across environment variations, watch for a performance
plateau, fan specialists out on the weakest variations, then fold their
demonstrations back into the generalist with demonstration-augmented losses.
"""

__version__ = "0.1.0"
