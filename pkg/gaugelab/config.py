"""
Config
------

Operator-facing settings come from the environment,
numerical constants are plain module attributes so that
every tolerance in the lab is declared in one place.
"""

import os

lab_mode = os.getenv("GAUGELAB_MODE", "development")
"""The operational mode of the lab (development, production, or testing)."""

workers = int(os.getenv("GAUGELAB_WORKERS", "1"))
"""The size of the worker pool used for batches of independent solves."""

default_seed = int(os.getenv("GAUGELAB_SEED", "0"))
"""The seed used when a command is not given one."""

newton_tolerance = 1e-10
"""Max-norm residual at which a Newton solve is accepted."""

newton_max_iterations = 50
"""Newton iteration cap."""

newton_max_halvings = 30
"""Maximum step halvings in a single damped Newton step."""

linear_tolerance = 1e-12
"""Relative residual for Krylov solves of the Newton systems."""

eigen_tolerance = 1e-8
"""Relative change in the Rayleigh quotient that ends inverse iteration."""

eigen_max_iterations = 500
"""Inverse iteration cap."""

well_posed_threshold = 1e-6
"""Eigenvalues of smaller magnitude mark the linearized problem as ill-posed."""

default_epsilon = 1e-2
"""Default step of the mixed divided differences."""

roundoff_floor = 1e-6
"""Differences between divided-difference estimates below this are treated as round-off."""

default_alpha_reg = 1e-6
"""Default Tikhonov weight."""

condition_limit = 1e12
"""Largest acceptable condition number of a regularized normal matrix."""

pivot_threshold = 1e-2
"""Fraction of its largest magnitude below which a gauge breaking pivot counts as vanishing."""

source_smoothing = 0.04
"""Width of the Gaussian average applied to the Laplacian of a recovered base solution."""

continuation_steps = 8
"""Initial number of datum steps when a solve falls back to continuation."""
