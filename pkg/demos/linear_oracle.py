"""Learn a feedback for dx = (x + u) dt and compare it with the exact one.

For q(x) = 1.5 x^2 and r(u) = u^2 / 2 the stationary Riccati equation
p^2 - 2p - 3 = 0 gives p = 3, so the optimal feedback is u*(x) = -3x.
The pipeline below never sees that answer; it learns the generator from
drift samples and recovers the policy from the value function.
"""
import numpy as np

from genhjb import KernelSpec, PipelineSpec, StateGridSpec, run_pipeline
from genhjb.evaluation import rmse_to_reference
from genhjb.hjb import policy_at, value_at
from genhjb.penalty import symmetric_box_penalty
from genhjb.systems import linear_1d_system

pen = symmetric_box_penalty([0.5], 5.0)
spec = PipelineSpec(
    system=linear_1d_system(a=1.0, b=1.0, u_max=5.0, epsilon=0.01),
    grid=StateGridSpec(bounds=((-2.0, 2.0),), counts=(200,)),
    stage_cost=lambda x: 1.5 * float(x[0]) ** 2,
    pen=pen,
    kernel=KernelSpec("squared-exponential", 1.0),
    gamma=1e-8, dt=0.01, horizon_steps=1000,
)
sol = run_pipeline(spec)

print("    x     value   learned u   exact -3x")
for x in np.linspace(-1.0, 1.0, 9):
    v = value_at(sol, [x])
    u = policy_at(sol, pen, [x])[0]
    print(f"{x:+.2f}  {v:8.3f}  {u:+10.4f}  {-3.0 * x:+10.4f}")

rmse = rmse_to_reference(lambda x: policy_at(sol, pen, x),
                         lambda x: -3.0 * x, [-1.0], [1.0],
                         n_points=1000, seed=0)
print(f"\npolicy RMSE on [-1, 1]: {rmse:.5f}")
