"""Accuracy and size of the two 1/x approximations as the target error shrinks.

The number of terms grows only logarithmically in 1/epsilon, which is where the
polylogarithmic precision dependence of both solvers comes from.
"""
from qlsp import chebyshev_series, fourier_grid

kappa = 8.0
print(f"kappa = {kappa:g}")
print(f"{'epsilon':>8} {'fourier err':>12} {'fourier alpha':>14} {'cheb terms':>11} {'cheb err':>10} {'cheb alpha':>11}")
for k in range(2, 11, 2):
    eps = 10.0 ** -k
    grid = fourier_grid(kappa, eps)
    series = chebyshev_series(kappa, eps)
    print(f"{eps:>8.0e} {grid.max_error:>12.2e} {grid.alpha:>14.2f} "
          f"{len(list(series.terms())):>11d} {series.max_error:>10.2e} {series.alpha:>11.2f}")
