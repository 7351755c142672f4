"""Train a disentangler for Ising-scrambled product states.

A random 6-qubit transverse-field Ising circuit V scrambles Haar-random
product states. We train U (same ansatz, 18 parameters) on a single such
state and check that it also disentangles fresh states from V.
"""

import numpy as np

from dqae import TrainConfig, build_with_params, cost_test, generate_dataset, train
from dqae.dqfim import critical_params
from dqae.state import purities

n = 6
data = generate_dataset("ising", n, L=1, L_test=50, seed=0)

# how many parameters are needed before the DQFIM rank stops growing?
mc, rank = critical_params("ising", n, 1, n_theta_samples=20)
print(f"M_c = {mc}, saturated rank = {rank}")  # 3n - 1 = 17 on the ring

circuit = build_with_params("ising", n, mc + 1)
cfg = TrainConfig(optimizer="lbfgs", max_epochs=3000, convergence_tol=1e-8, seed=0, restarts=3)
res = train(circuit, data.train, cfg)

print("converged:", res.converged, " C_train = %.2e" % res.cost)
print("C_test over 50 unseen states = %.2e" % cost_test(circuit, res.theta, data.test))

# every qubit of an encoded test state is (close to) pure
phi = circuit.apply(res.theta, data.test[0])
print("purities of an encoded test state:", np.round(purities(phi), 8))
