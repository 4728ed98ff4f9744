"""Numerical laboratory for a 1-D mean-field (McKean-Vlasov) gradient flow."""

__version__ = "0.1.0"
