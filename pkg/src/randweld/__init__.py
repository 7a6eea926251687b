"""Random conformal welding laboratory.

Circle homeomorphisms built from the exponentiated trace of a log-correlated
Gaussian field, their quasiconformal extensions, distortion statistics, and a
spectral Beltrami solver producing the welding curves.
"""

__version__ = "0.1.0"
