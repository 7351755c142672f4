"""Hardware-efficient ansatz: too little data memorizes, enough data generalizes.

With n=4 and an overparameterized HE circuit (M=400), four training states
give zero training error but poor test error. Sixteen states (L = 2^n)
pin down the disentangler.
"""

from dqae import TrainConfig, build_with_params, cost_test, generate_dataset, train
from dqae.dqfim import critical_data, he_rank_formula

n = 4
cd = critical_data("he", 3)
print("n=3 ranks by L:", cd["ranks"], " L_c =", cd["lc_exact"])
print("closed form:", [he_rank_formula(3, L) for L in range(1, 10)])

circuit = build_with_params("he", n, 400)
cfg = TrainConfig(optimizer="lbfgs", max_epochs=3000, convergence_tol=1e-8, seed=0, restarts=5)
for L in (4, 16):
    data = generate_dataset("he", n, L, 100, seed=1)
    res = train(circuit, data.train, cfg)
    print(f"L={L:2d}: C_train={res.cost:.1e}  C_test={cost_test(circuit, res.theta, data.test):.3f}")
