"""Non-Bloch self-energies of dissipative quasi-particles in 1D fermionic Lindbladians."""
__version__ = "0.1.0"
