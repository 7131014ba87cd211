"""Mask-guided robust training toolkit.

Learning-from-explanations methods for small classifiers: per-example
irrelevance masks drive an input-gradient regularizer, masked Gaussian
noise, masked PGD attacks, and interval bound propagation, together
with shortcut-learning metrics and a numerical verification suite for
the underlying Gaussian-process and linear-regression analyses.
"""

__version__ = "0.1.0"
