"""Fit the regression RVM to noisy sinc data and report held-out error,
sparsity and the chosen kernel width.

    python scripts/sinc_demo.py [--n 100] [--noise 0.1] [--seed 0]
"""

import argparse

import numpy as np

from gspca_rvm.experiments import noisy_sinc
from gspca_rvm.rvm import fit_regression, predict_regression, select_kernel_width


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=100)
    parser.add_argument("--noise", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    X, t = noisy_sinc(args.n, args.seed, args.noise)
    Xh, th = noisy_sinc(1000, args.seed + 1, args.noise)
    kernel, scores = select_kernel_width(X, t, [0.03, 0.1, 0.3, 1.0, 3.0], mode="regression",
                                         loo_cutoff=0, k_folds=5, seed=args.seed)
    model, diag = fit_regression(X, t, kernel)
    pred = predict_regression(model, Xh)
    clean = np.sinc(Xh[:, 0] / np.pi)
    for w, s in zip(scores.widths, scores.scores):
        print(f"width {w:<5} cv mse {-s:.4f}")
    print(f"chosen width {kernel.width}, {model.n_relevance_vectors} relevance vectors "
          f"out of {args.n}, noise sd estimate {np.sqrt(model.noise_variance):.4f}")
    print(f"held-out RMSE vs noisy targets {np.sqrt(np.mean((pred - th) ** 2)):.4f}, "
          f"vs clean sinc {np.sqrt(np.mean((pred - clean) ** 2)):.4f}")
    print(f"outer iterations {diag.outer_iterations}, converged {diag.converged}")


if __name__ == "__main__":
    main()
