"""Compress 3 qubits into 2 product qubits plus one classical bit."""

from dqae.capacity import (CapacityConfig, capacity_cost, capacity_objective, encode_measure,
                           generate_capacity_dataset, round_trip_fidelity)
from dqae.circuits import build_he
from dqae.training import TrainConfig, train

cfg = CapacityConfig(n_product=2, n_reference=1)
ds = generate_capacity_dataset(cfg, L=4, seed=0)
circuit = build_he(cfg.n_total, 12)
tc = TrainConfig(optimizer="lbfgs", max_epochs=3000, convergence_tol=1e-8, seed=0, restarts=5)
res = train(circuit, ds.states, tc, objective=capacity_objective(cfg))
print("C' = %.1e" % capacity_cost(circuit, res.theta, ds.states, cfg))

for i, psi in enumerate(ds.states):
    enc = encode_measure(psi, circuit, res.theta, cfg, rng=i)
    f = round_trip_fidelity(psi, circuit, res.theta, cfg, rng=i)
    print(f"state {i}: bit={enc.bits} (p={enc.probability:.6f})  round-trip F={f:.8f}")
