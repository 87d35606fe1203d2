"""Fleming-Viot particle systems and spectral oracles for quasi-stationary
distributions of Markov processes with soft killing.

The package has five layers:

* ``process``     -- killed-process semantics and single-trajectory simulation
* ``fv``          -- the N-particle system with uniform rebirth
* ``oracle``      -- exact QSD / decay-rate computations on finite truncations
* ``zoo``         -- the shipped model families and their Lyapunov certificates
* ``experiments`` -- the theorem-level experiment harness

``config``/``runner`` expose a declarative front end shared by the CLI
(``fvqsd.cli``) and the HTTP service (``fvqsd.service``).
"""

__version__ = "0.1.0"
