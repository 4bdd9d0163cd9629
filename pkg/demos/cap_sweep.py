"""Follow absorbing-potential eigenvalues as the strength goes to zero.

Without complex scaling, -i eps (1 - chi) x^2 makes the spectrum discrete.
One eigenvalue path converges to the barrier resonance; the lowest eigenvalues
near arg z = -pi/4 form a string that collapses like sqrt(eps).
"""

from capres.model import barrier_problem
from capres.sweep import SweepConfig, cap_sweep, geometric_schedule, string_trajectories

problem = barrier_problem()
config = SweepConfig(epsilon_schedule=tuple(geometric_schedule(1e-1, 1e-4, 7)))
result = cap_sweep(problem, config, progress=lambda eps, n: print(f"  eps = {eps:.1e}: n = {n}"))

for tr in result.converging():
    print("converging trajectory:")
    for eps, z, _ in tr.points:
        print(f"  {eps:.1e}  {z:.10f}")
    print(f"  limit {tr.extrapolated_limit:.10f}, exponent p = {tr.fit_exponent:.3f}")

for k, tr in enumerate(string_trajectories(result, 3)):
    print(f"string eigenvalue {k}: {tr.status}, displacement exponent {tr.displacement_exponent:.3f}")
