"""Classical numerical laboratory for Koopman-style linearization methods:
polynomial flows, truncated monomial lifts, population dynamics, open
free-fermion covariance dynamics, an R-number separation family, and
windowed spectral estimation.
"""

__version__ = "0.1.0"
