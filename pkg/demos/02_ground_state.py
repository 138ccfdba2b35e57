"""
Ground state by VQE and QAOA
============================

The bundled 12-variable model is solved with a hardware-efficient Ry ansatz
(Nelder-Mead from many random starts) and with QAOA at depths 1 to 3.
"""

from isingscreen import (AnsatzSpec, OptimizerConfig, count_resources, embedded_ising,
                         exact_spectrum, vqe_run)
from isingscreen.vqe import qaoa_sweep

model = embedded_ising()
exact = exact_spectrum(model, 1)
e0, gs = exact.energies[0], exact.bitstrings(0)[0]
print(f"exact ground state {gs}, score {model.score(e0):.4f}")

spec = AnsatzSpec("ry", 12, 1)
print("Ry depth 1: (CNOTs, parameters) =", count_resources(spec))
res = vqe_run(model, spec, OptimizerConfig(seed=0, restarts=20))
print(f"VQE: {res.top_bitstring} with p={res.top_probability:.3f}, "
      f"score {model.score(res.energy):.4f}, {res.evals} evaluations")

# each depth starts from the previous optimum, so the energy cannot get worse
for p, r in zip((1, 2, 3), qaoa_sweep(model, [1, 2, 3], OptimizerConfig(seed=0, restarts=3))):
    cnots, params = count_resources(AnsatzSpec("qaoa", 12, p), model)
    print(f"QAOA p={p}: {cnots} CNOTs, {params} angles, error {r.exact_energy - e0:.3f}, "
          f"top {r.top_bitstring} p={r.top_probability:.3f}")
