"""
Exact population quantities on a small table
=============================================

X takes three values, Z two. The operator sending h to E[h(X) | Z] has a
one-dimensional kernel, so h is only identified up to a kernel shift; the
target E[g(Z) h(X)] is not affected by the shift.
"""

# %%
import numpy as np

from lsqdebias import dgp
from lsqdebias.function_space import CoefVector

R = dgp.realize(dgp.table_3x2_dgp())
print(R.pmf.to_csv())

# %%
# The oracle: minimum-norm solutions and the value of the target.
o = R.oracle
print("singular values", o.singular_values)
print("h (minimum norm)", o.h_dag.coef)
print("g (minimum norm)", o.g_dag.coef)
print("Psi", o.psi)

# %%
# Shift h along the kernel of T; the cross moment does not move.
op = R.operator
k = o.kernel_H[:, 0]
for t in (-2.0, 0.5, 3.0):
    h = CoefVector(op.hspace, o.h_dag.coef + t * k)
    print(f"shift {t:+.1f}:  Psi = {op.cross_moment(o.g_dag, h):.15f}")

# %%
# Two other ways to write the same number.
print(op.inner_g(o.r_P, o.g_dag), op.inner_h(o.a_P, o.h_dag))
