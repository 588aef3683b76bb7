"""Failure/privacy bounds against Monte Carlo estimates.

A round fails when any group loses more than half its members.  The union
bound (N / N_g) * exp(-c * N_g) with a KL exponent should dominate the
simulated failure rate, and with log-sized groups the all-survive
probability must collapse as N grows (the converse direction).
"""

import math

from circagg import analysis

print("failure bound vs simulation (10k trials each):")
print(f"{'N':>5} {'N_g':>4} {'p':>5} {'bound':>10} {'simulated':>10}")
for n in (64, 256):
    for group in (8, 16):
        for p in (0.1, 0.3):
            bound = analysis.failure_bound(n, group, p)
            est, ci = analysis.monte_carlo_failure(n, group, p, 10_000, seed=1)
            print(f"{n:>5} {group:>4} {p:>5} {bound:>10.4f} {est:>10.4f}")

print("\nprivacy bound (half-colluder exponent):")
for n, group, t in ((64, 8, 6), (256, 8, 25), (256, 16, 25)):
    print(f"  N={n:<4} N_g={group:<3} T={t:<3} ->",
          f"{analysis.privacy_bound(n, group, t):.6f}")

print("\nconverse direction: log-sized groups at dropout rate 0.45.")
print("log of the all-survive probability (product-form estimate):")
for n in (64, 512, 4096):
    group = max(2, math.ceil(math.log(n)))
    log_s = analysis.monte_carlo_log_survival(n, group, 0.45, 10_000, seed=2)
    conv = analysis.robustness_converse_bound(n, 0.45)
    print(f"  N={n:<5} N_g={group:<3} log-survive = {log_s:>8.1f}"
          f"   (converse bound on the probability: {conv:.2e})")
print("larger N -> smaller survival: shrinking groups below log N cannot work.")
