"""Regenerate tests/data/oracles.json with mpmath at high precision.

These values are computed independently of the package (plain series or
special-function identities in arbitrary precision) and frozen; the test
suite only reads the JSON.  Run from the repository root:

    python tools/gen_oracles.py
"""
import json
from pathlib import Path

import mpmath as mp


def ml_series(alpha, z, digits=40):
    """Mittag-Leffler series in enough precision to survive cancellation."""
    z = mp.mpc(z)
    # terms peak near |z|^(1/alpha); budget digits for that peak
    peak = float(abs(z)) ** (1 / alpha) / mp.log(10) + 10
    with mp.workdps(int(digits + peak)):
        alpha = mp.mpf(alpha)
        total = mp.mpf(0)
        k = 0
        term_max = mp.mpf(0)
        while True:
            term = z**k / mp.gamma(alpha * k + 1)
            total += term
            term_max = max(term_max, abs(term))
            if k > 10 and abs(term) < mp.mpf(10) ** (-digits - 5) * max(abs(total), 1e-300):
                break
            k += 1
        return complex(total)


def main():
    mp.mp.dps = 50
    out = {}
    out["ml_half_negative"] = [
        [float(x), float(mp.exp(x * x) * mp.erfc(x))] for x in [i * 0.25 for i in range(41)]
    ]
    pts = []
    for alpha in (0.25, 0.5, 0.75, 0.9):
        for z in (-1, -4.5, -12, -30, 2, 4.9, 6, 3 + 2j, -5 + 5j, 10j, -20 + 1j):
            if alpha == 0.25 and abs(z) > 5:
                continue
            v = ml_series(alpha, z)
            pts.append([alpha, z.real if isinstance(z, complex) else z, z.imag if isinstance(z, complex) else 0.0,
                        v.real, v.imag])
    out["ml_points"] = pts
    # derivative of E_alpha: series differentiated term-wise
    dpts = []
    for alpha in (0.5, 0.8):
        for z in (-2.0, -8.0, 3.0):
            for order in (1, 2, 3):
                dpts.append([alpha, z, order, float(ml_deriv_series(alpha, z, order))])
    out["ml_deriv_points"] = dpts
    out["inv_gamma_1p5"] = float(1 / mp.gamma(1.5))
    out["pearson_mean_b2_t1_x3_t05"] = float(1 + 2 * mp.e ** -1)
    out["exp_minus_one"] = float(mp.e ** -1)
    out["ml_half_minus_one"] = float(mp.exp(1) * mp.erfc(1))
    # Volterra equation with kappa(s) = s^-0.3 e^-s, lam = 1.5, c(0) = 1:
    # Laplace transform khat / (p khat - lam), khat = Gamma(0.7) (p + 1)^-0.7
    with mp.workdps(30):
        khat = lambda p: mp.gamma(0.7) * (p + 1) ** (-0.7)
        F = lambda p: khat(p) / (p * khat(p) - 1.5)
        rows = []
        for t in (0.25, 0.5, 1.0, 2.0):
            a = mp.invertlaplace(F, t, method="talbot")
            b = mp.invertlaplace(F, t, method="dehoog")
            assert abs(a - b) < 1e-12 * abs(a), (t, a, b)
            rows.append([t, float(a)])
    out["volterra_tempered_lam1p5"] = rows
    out["tempered_clock_ou_mean"] = tempered_clock_rows()
    Path(__file__).resolve().parents[1].joinpath("tests", "data", "oracles.json").write_text(
        json.dumps(out, indent=1) + "\n"
    )


def tempered_clock_rows():
    """E[exp(-L_t)] for the inverse of the subordinator with f(p) = sqrt(p + 1) - 1.

    This is the mean of an OU process (beta=1, theta=0) started at 1; its
    transform is f / (p (f + 1)).
    """
    with mp.workdps(30):
        f = lambda p: mp.sqrt(p + 1) - 1
        F = lambda p: f(p) / (p * (f(p) + 1))
        rows = []
        for t in (0.5, 1.0, 5.0, 20.0):
            a = mp.invertlaplace(F, t, method="talbot")
            b = mp.invertlaplace(F, t, method="dehoog")
            assert abs(a - b) < 1e-12 * abs(a), (t, a, b)
            rows.append([t, float(a)])
    return rows


def ml_deriv_series(alpha, z, order):
    """Term-wise differentiated series: sum_k k!/(k-order)! z^(k-order) / Gamma(alpha k + 1)."""
    with mp.workdps(120):
        alpha = mp.mpf(alpha)
        z = mp.mpf(z)
        total = mp.mpf(0)
        k = order
        while True:
            term = mp.ff(k, order) * z ** (k - order) / mp.gamma(alpha * k + 1)
            total += term
            if k > order + 10 and abs(term) < mp.mpf(10) ** -60:
                return total
            k += 1


if __name__ == "__main__":
    main()
