import logging

import numpy as np

from choquard import FunctionalContext, SolverOptions, make_grid, make_nonlinearity, solve_fixed_mu
from choquard.solvers import initial_guess
from choquard.spectral_core import Field

log = logging.getLogger()
log.setLevel(logging.INFO)
console_handler = logging.StreamHandler()
formatter = logging.Formatter(
    "%(asctime)s %(levelname)s: [%(module)s:%(funcName)s] %(message)s"
)
console_handler.setFormatter(formatter)
log.addHandler(console_handler)


ctx = FunctionalContext(
    N=1,
    s=0.4,
    alpha=0.5,
    lam=0.0,
    nonlinearity=make_nonlinearity("power", {"p": 2.0}),
)

grid = make_grid(1, 16.0, 256)
init = initial_guess(Field(grid, np.zeros(grid.shape)), amplitude=1.5)

solution = solve_fixed_mu(ctx, init, SolverOptions(max_iter=2000))
# solution = solve_normalized(ctx.with_mass(1.0), init)
print(solution.summary())
