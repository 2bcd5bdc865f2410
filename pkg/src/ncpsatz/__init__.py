"""Positivity certificates for noncommutative polynomials on free spectrahedra."""
from .ncpoly import NCPoly, WordBasis, adjoint, enumerate_words, evaluate, gram_to_poly, multiply

__version__ = "0.1.0"

__all__ = ["NCPoly", "WordBasis", "adjoint", "enumerate_words", "evaluate", "gram_to_poly", "multiply"]
