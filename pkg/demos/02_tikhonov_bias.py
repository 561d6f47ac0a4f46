"""
Tikhonov bias and the source exponent
=====================================

On a design with geometric spectrum and coefficient decay s**beta, the
squared ridge bias of h scales like lambda**min(beta, 2) in the L2 norm and
like lambda**min(beta + 1, 2) in the weak (projected) norm.
"""

# %%
import numpy as np

from lsqdebias import dgp
from lsqdebias.experiments import tikhonov_errors

lambdas = np.geomspace(1e-6, 1e-1, 11)

# %%
for beta in (0.5, 1.0, 2.0, 3.0):
    R = dgp.realize(dgp.source_dgp(beta))
    err = tikhonov_errors(R, lambdas)
    strong = np.polyfit(np.log(lambdas), np.log(err["h_strong"]), 1)[0]
    weak = np.polyfit(np.log(lambdas), np.log(err["h_weak"]), 1)[0]
    print(f"beta {beta:3g}:  strong slope {strong:.3f} (theory {min(beta, 2):g})"
          f"   weak slope {weak:.3f} (theory {min(beta + 1, 2):g})")

# %%
# Optional picture.
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots()
    for beta in (0.5, 1.0, 2.0):
        err = tikhonov_errors(dgp.realize(dgp.source_dgp(beta)), lambdas)
        ax.loglog(lambdas, err["h_strong"], "o-", label=f"beta {beta:g}")
    ax.set_xlabel("lambda")
    ax.set_ylabel("||h_lambda - h||^2")
    ax.legend()
    fig.savefig("tikhonov_bias.png", dpi=90)
    print("saved tikhonov_bias.png")
except ImportError:
    pass
