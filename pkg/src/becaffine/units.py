"""Working unit system.

Everything in this package is expressed in harmonic oscillator units of a
reference trap frequency omega_x: times in 1/omega_x, lengths in
a_x = sqrt(hbar / (m omega_x)), energies in hbar omega_x. In these units
hbar = 1 and the particle mass defaults to 1; the mass is still carried
explicitly through the formulas so the conventions stay visible.
"""

HBAR = 1.0
