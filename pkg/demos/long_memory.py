"""Equilibrium autocorrelation: exponential decay becomes a power law.

For the OU process on an inverse 1/2-stable clock the correlation at lag s
falls off like s^(-1/2); the fitted slope and the ratio to the asymptotic
envelope are printed for increasing lags.
"""
import numpy as np

from fracpoly.equilibrium import correlation, lrd_asymptote, make_context
from fracpoly.models import Pearson

ctx = make_context(Pearson(beta=1.0, theta=0.0), 1)
alpha, t = 0.5, 1.0
lags = np.logspace(-1, 4, 11)
corr = np.array([correlation(ctx, s, t, alpha) for s in lags])
print(f"{'lag':>10} {'exp(-s)':>12} {'fractional':>12} {'/ envelope':>11}")
for s, c in zip(lags, corr):
    print(f"{s:10.2f} {np.exp(-s):12.4e} {c:12.4e} {c / lrd_asymptote(alpha, 1.0, s, t):11.4f}")
tail = lags >= 100
slope = np.polyfit(np.log(lags[tail]), np.log(corr[tail]), 1)[0]
print(f"\nlog-log slope over lags >= 100: {slope:.4f}")
