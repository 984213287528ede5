# The verification helpers by themselves: finite differences, exact enumeration, rate envelopes.
from fractions import Fraction

import numpy as np

from riemvr.compression import RandK
from riemvr.oracles import LsvrgSpec, RateEnvelope, brute_force_estimator_mean, check_rate, gradient_check
from riemvr.optimizers import OptimizerConfig, default_stepsize_lsvrg, rlsvrg_run
from riemvr.problems import make_quadratic, make_rayleigh

rng = np.random.default_rng(0)
R = make_rayleigh(rng.standard_normal((30, 6)) / np.sqrt(30))
print(gradient_check(R, points=50))

# every minibatch of the estimator, weighted; the mean is the full gradient
x, y = R.manifold.random_point(rng), R.manifold.random_point(rng)
err = brute_force_estimator_mean(R, LsvrgSpec(x, y, B=2)) - R.full_gradient(x)
print("enumerated bias:", np.abs(err).max())

# RandK in exact arithmetic
v = np.array([Fraction(1), Fraction(-2, 3), Fraction(5, 7)], dtype=object)
atoms = RandK(1).outcomes(v)
print("E[Q(v)] == v:", [sum(w * q[j] for w, q in atoms) for j in range(3)] == list(v))

# a run against its linear envelope
P = make_quadratic(50, 20, 0.1, 1.0, seed=0)
eta = default_stepsize_lsvrg(0.1, 1.0)
tr = rlsvrg_run(P, np.ones(20), OptimizerConfig(eta=eta, K=3000, p=1 / 50, trace_stride=50))
print(check_rate(tr, RateEnvelope.linear(max(1 - eta * 0.1, 1 - 1 / 100), slack=1.0)))
