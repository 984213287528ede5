# Leading eigenvector of a sample covariance, by minimizing -x^T A x on the sphere.
import numpy as np

from riemvr.harness.runner import gaussian_samples
from riemvr.optimizers import OptimizerConfig, rgd_run, rlsvrg_run, rsvrg_run, with_defaults
from riemvr.problems import make_rayleigh

Z = gaussian_samples(500, 50, seed=2024)
P = make_rayleigh(Z)
print("n, d:", P.n, P.d, " L:", round(P.meta.L, 3), " f*:", round(P.meta.f_star, 5))

x0 = P.manifold.random_point(np.random.default_rng(0))
eta = 0.5 / P.meta.L_components

# same stepsize for all three, same budget of iterations
lsvrg = rlsvrg_run(P, x0, OptimizerConfig(eta=eta, K=6000, p=1 / P.n, seed=1))
svrg = rsvrg_run(P, x0, OptimizerConfig(eta=eta, K=6000, inner_loop_m=P.n, seed=1))
gd = rgd_run(P, x0, OptimizerConfig(eta=1 / P.meta.L, K=60))

for tr in (lsvrg, svrg, gd):
    evals = int(tr.column("grad_evals")[-1])
    print(f"{tr.algorithm:7s} evals {evals:7d}  min |grad|^2 {tr.running_min('grad_norm_sq')[-1]:.2e}")

# angle to the true top eigenvector
top = P.meta.x_star
for tr in (lsvrg, svrg, gd):
    print(tr.algorithm, "angle:", np.arccos(min(1.0, abs(tr.x_final @ top))))

# theorem defaults, if you'd rather not pick eta by hand
cfg = with_defaults(P, "rpage", {"K": 10})
print("PAGE defaults: B", cfg.B, "b", cfg.b, "p", round(cfg.p, 4), "eta", round(cfg.eta, 4))
