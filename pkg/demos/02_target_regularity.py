"""
When does a curved target make the refractor smooth?

For graph targets psi seen from the origin the sign of
``psi D^2 psi - kappa/(1-kappa)`` decides.  Three independent checks are
run on a bowl, a plane and a bowl that is just barely curved enough, and
they agree.
"""

import numpy as np

from parallel_refractor import GraphSurface
from parallel_refractor.regularity import (
    G_hessian_closed_form,
    aw_condition_numeric,
    classify_graph_target,
    min_condition_check,
)

kappa = 0.5
X = np.zeros(3)
for name, a in [("bowl", 0.5), ("plane", 0.0), ("slightly curved", 0.3)]:
    T = GraphSurface.quadratic(4.0, np.zeros(2), a * np.eye(2), [-3, -3], [3, 3])
    crit = classify_graph_target(T, kappa)
    aw = aw_condition_numeric(T, X, kappa)
    mc = min_condition_check(T, X, T.point(np.array([-0.5, 0.0])),
                             T.point(np.array([0.5, 0.0])), kappa)
    eig = np.linalg.eigvalsh(G_hessian_closed_form(T, kappa))
    print(f"{name:16s} criterion {crit.verdict:12s} AW {aw.verdict:12s} "
          f"synthetic {mc.verdict:12s} eig(D^2 G) {np.round(eig, 4)}")
