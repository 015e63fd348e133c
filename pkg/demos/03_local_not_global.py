"""
Local support does not imply global support.

Two flat ellipsoids with foci 6 hundredths apart meet at P.  A third one
through P, aimed at a point twice as far, stays above their minimum near P
but cuts below it further out.
"""

import numpy as np

from parallel_refractor.raytrace import counterexample_fig3, fig3_profiles

r = counterexample_fig3()
print(f"c(P, Y1) = {r['c_P_Y1']:.6f}")
print(f"smallest phi3 - R on |x| <= {r['local_radius']}: {r['local_min_gap']:.2e}")
print(f"at x = {r['x_star']}: R - phi3 = {r['gap']:.6f}")
print(f"first violation at |x| = {r['first_violation_abs_x']:.3f}")

xs = np.linspace(-0.16, 0.16, 9)
R, p3, _, _ = fig3_profiles(xs)
for x, a, b in zip(xs, R, p3):
    print(f"  x = {x:+.3f}   R = {a:.5f}   phi3 = {b:.5f}   {'below' if b < a - 1e-12 else ''}")
