"""How many copies survive a lossy channel?

Sending an entangled n-qubit state needs one copy to arrive intact.
After disentangling, it is enough that each qubit index survives somewhere.
"""

from dqae.loss_channel import (LossSpec, failure_product, min_copies, scaling_fits,
                               simulate_transport)
from dqae.training import generate_dataset

for n in (8, 20, 40, 64):
    print(f"n={n:2d}  unencoded R={min_copies(n, 0.1, 0.01, 'unencoded'):5d}"
          f"  product R={min_copies(n, 0.1, 0.01, 'product')}")

fit = scaling_fits(range(4, 65), 0.1)
print("log-slope of unencoded R: %.4f (expected %.4f)"
      % (fit["unencoded_log_slope"], fit["expected_log_slope"]))

# Monte Carlo with a perfect disentangler U = V^dag
ds = generate_dataset("he", 4, 1, 0, seed=2)
out = simulate_transport(ds.train[0], ds.scrambler.inverse(), -ds.scrambler_theta,
                         LossSpec.homogeneous(4, 0.2), R=3, trials=100_000, rng=1)
lo, hi = out.ci("product")
print("product failure: MC %.4f [%.4f, %.4f], closed form %.4f"
      % (1 - out.rate_product, 1 - hi, 1 - lo, failure_product(4, 0.2, 3)))
print("mean reconstruction fidelity:", out.mean_fidelity)
