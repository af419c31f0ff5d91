"""Finite-dimensional approximation of Perron-Frobenius and Koopman operators.

Subpackages cover multiscale wavelet bases (Haar, tensor Haar, triangle
multiwavelets), warped wavelets for weighted spaces, spectral eigenbases and
truncated kernel operators, concrete dynamical systems, measure approximation
with transport metrics, sample-based operator estimators, EDMD/ERM fitting,
and a CLI harness that reruns the convergence experiments.
"""

__version__ = "0.1.0"
