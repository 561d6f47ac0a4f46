"""
The nuisance learners one at a time
===================================

Each learner is a closed-form solve. Feeding the pmf itself instead of a
sample gives the population version, which should reproduce the oracle.
"""

# %%
import numpy as np

from lsqdebias import dgp
from lsqdebias.learners import (
    default_lambda,
    minimax_dual,
    minimax_primary,
    minimax_weak_riesz,
    projection_ls,
    riesz_regression,
)

R = dgp.realize(dgp.exact_solution_dgp())
o, op = R.oracle, R.operator
H, G, fp = R.hspace, R.gspace, R.functionals

# %%
# Population limit with a tiny ridge.
h = minimax_primary(R.pmf, H, G, fp, 1e-10).coef
print("h  vs oracle:", np.abs(h.coef - o.h_dag.coef).max())
g = minimax_dual(R.pmf, H, G, fp, 1e-10).coef
print("g  vs oracle:", np.abs(g.coef - o.g_dag.coef).max())

# %%
# Finite samples: errors shrink with n.
for n in (500, 2000, 8000):
    d = R.sample(n, seed=n)
    lam = default_lambda(n)
    h = minimax_primary(d, H, G, fp, lam).coef
    # the weak-norm representer takes the smaller default ridge 1 / n
    a = minimax_weak_riesz(d, H, G, o.g_dag, 1.0 / n).coef
    xi = projection_ls(d, o.h_dag, G)
    r = riesz_regression(d, G, fp, "r")
    print(f"n {n:5d}  weak h err {op.norm(op.apply(h - o.h_dag)):.4f}"
          f"  weak alpha err {op.norm(op.apply(a - o.alpha_h_dag)):.4f}"
          f"  xi err {op.norm(xi - o.xi_h):.4f}  r err {op.norm(r - o.r_P):.4f}")
