"""Late-time tails of spherically symmetric waves in odd dimensions.

Modules: numerics (extended precision, quadrature, special functions),
profiles (generator bumps and their moments), freewave (exact free
solutions), models (potentials and nonlinearities), perturb (Duhamel
iterates), evolve (method-of-lines evolver), analysis (tail fits and
predictions) and cli (batch front end).
"""

__version__ = "0.1.0"
