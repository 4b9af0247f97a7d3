"""How well do the three count likelihoods agree where they should?

Run: python demos/02_likelihoods.py
"""
import math

from tvepi.observation import binomial_loglik, gaussian_loglik, poisson_loglik

# Binomial sample of 1000 with a rare event: Poisson is a good stand-in.
for k in (5, 10, 15):
    b = binomial_loglik(k, 1000, 0.01)
    p = poisson_loglik(k, 10.0)
    print(f"k={k:2d}  binomial {b:9.5f}  poisson {p:9.5f}  gap {abs(b - p):.4f}")

# Large counts: Gaussian with matching mean and variance.
lam = 1e4
sd = math.sqrt(lam)
print()
for z in (-3, -1, 0, 1, 3):
    k = round(lam + z * sd)
    p = poisson_loglik(k, lam)
    g = gaussian_loglik(k, lam, lam)
    print(f"z={z:+d}  poisson {p:9.5f}  gaussian {g:9.5f}  gap {p - g:+.4f}")

# The gap is the Poisson skewness: about (z^3 / 6 - z / 2) / sd, so 0.030 at
# |z| = 3.  It only shrinks like 1/sd.

# Impossible outcomes score a large negative finite number, not -inf.
print()
print("3 positives at p=0:", binomial_loglik(3, 3, 0.0))
print("2 cases at rate 0:", poisson_loglik(2, 0.0))
