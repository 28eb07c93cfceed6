"""Matrix polar angles for linear Hamiltonian systems."""
__version__ = "0.1.0"
