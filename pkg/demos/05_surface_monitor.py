"""
Metric bounds and curvature on a complex surface
================================================

On a surface the flow is watched through the constants ``c1, C2`` with
``c1 omega(0) <= omega(t) <= C2 omega(0)`` and the running maximum of the
full curvature tensor.  As long as the bounds stay in a band the curvature
should stay below what it was early in the run.

This takes one to two minutes.
"""

# %%
from calabi_flow import ModeSpec, RunConfig
from calabi_flow.experiments import experiment_extension_monitor

cfg = RunConfig(
    n=2,
    N=16,
    phi0_modes=(ModeSpec((1, 0, 0, 0), 0.02), ModeSpec((0, 1, 1, 0), 0.01, 0.7)),
    tau0=1e-4,
    t_end=10.0,
    holder_every=10,
)
res = experiment_extension_monitor(cfg)
print(res.summary())

# %%
for r in res.rows[:: max(1, len(res.rows) // 10)]:
    print(f"t={r.t:.4f}  c1={r.c1_bound:.4f}  C2={r.c2_bound:.4f}  max|Rm|={r.max_riemann:.4f}  Ca={r.calabi_energy:.3e}")
