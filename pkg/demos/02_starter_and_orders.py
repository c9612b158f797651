"""Temporal orders and the effect of the first-step starter.

The max-in-time error of the three-level scheme is set by the level-1 value
for the reference solution, so the Taylor predictor error is what a sigma
sweep measures. A backward-Euler starter lowers that floor considerably.
"""
from stokesdarcy import (
    HydraulicTensor,
    ManufacturedSolution,
    PhysicalParams,
    SchemeConfig,
    TimeGrid,
    assemble_operators,
    build_spaces,
    build_structured,
    run,
)
from stokesdarcy.analysis import conv_order
from stokesdarcy.timestep import predictor_error

params, tensor = PhysicalParams(), HydraulicTensor(1.0, 1e-2)
ops = assemble_operators(build_spaces(build_structured(n=16)), params, tensor)
exact = ManufacturedSolution(params, tensor)
sigmas = [2.0 ** -k for k in (3, 4, 5)]

for starter in ("taylor", "backward-euler"):
    res = [run(ops, exact, TimeGrid.from_sigma(1.0, s), SchemeConfig(starter=starter)) for s in sigmas]
    ew = [r.max_err_w for r in res]
    ep = [r.max_err_p for r in res]
    print(f"{starter:>15}: err_w {['%.2e' % e for e in ew]}  CO {['%.2f' % c for c in conv_order(ew)]}")
    print(f"{'':>15}  err_p {['%.2e' % e for e in ep]}  CO {['%.2f' % c for c in conv_order(ep)]}")

pe = [predictor_error(ops, exact, s) for s in sigmas]
print(f"predictor error {['%.2e' % e for e in pe]}, ratios {['%.2f' % (a / b) for a, b in zip(pe, pe[1:])]}")
