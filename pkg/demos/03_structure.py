"""Structural properties of the discretisation and the discrete inf-sup constant."""
from stokesdarcy import HydraulicTensor, PhysicalParams, assemble_operators, build_spaces, build_structured
from stokesdarcy.analysis import infsup_estimate
from stokesdarcy.checks import run_checks

for result in run_checks():
    print(result.line())

params, tensor = PhysicalParams(), HydraulicTensor(1.0, 1e-2)
for label, kw in (("Q2/Q1", {}), ("Q2/(Q1+Q0)", {"pressure": "q1q0"}), ("Q1/Q1", {"velocity_element": "Q1"})):
    betas = [infsup_estimate(assemble_operators(build_spaces(build_structured(n=n), **kw), params, tensor))
             for n in (2, 4, 8)]
    print(f"inf-sup {label:>11}: " + ", ".join(f"{b:.4f}" for b in betas))
