"""Surrogate-model screening of binary-encoded candidates with variational solvers.

A factorization machine is fit to labeled bitstrings and exported as a QUBO;
the QUBO is mapped to an Ising Hamiltonian whose low-lying spectrum is
searched with VQE/QAOA and deflation (overlap-penalized VQD or the
computational-basis variant cVQD), optionally with readout-error mitigation.
"""

from .ansatz import AnsatzSpec, build_ansatz, count_resources
from .deflation import (DeflationLedger, DeflationResult, cvqd_objective, default_beta, deflate,
                        swap_test_estimate, vqd_objective)
from .fm import (FitReport, FmModel, TrainConfig, active_learning_loop, fm_predict, fm_to_qubo,
                 fm_train, pearson_r, stratified_split)
from .mitigation import (ConfusionSpec, MitigationError, QuasiDistribution, mitigate,
                         mitigated_expectation)
from .planted import embedded_ising, embedded_qubo, generate_dataset, planted_qubo
from .problem import (CapacityError, EncodingError, IsingModel, LabeledSample, QuboModel,
                      SpectrumSlice, decode_groups, encode_groups, exact_spectrum, qubo_to_ising)
from .sim import (Circuit, ReadoutNoise, ShotHistogram, Statevector, apply_circuit, sample)
from .vqe import Backend, OptimizationError, OptimizerConfig, VqeResult, vqe_run

__version__ = "0.1.0"
