"""Differentiable quantum-circuit regression of protein-ligand binding free energies."""

__version__ = "0.1.0"
