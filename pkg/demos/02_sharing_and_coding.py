"""Masking, secret sharing, and erasure-coded redundancy.

Three building blocks, shown in isolation:
  1. additive shares that hide a vector but sum back to it,
  2. Shamir threshold sharing of a vector,
  3. Lagrange-coded copies that let receivers rebuild lost evaluations.
"""

import numpy as np

from circagg.field import vec, vec_scale, vec_sum
from circagg.lagrange import EvalPoints, encode_shares, recover_missing
from circagg.sharing import make_additive_shares, shamir_reconstruct, shamir_share

# --- 1. Additive shares -----------------------------------------------------
x = vec([10, 20])          # the private model
u = vec([7, 7])            # its round mask
shares = make_additive_shares(x, u, n=3, seed=5)
print("additive shares:", [s.tolist() for s in shares])
print("sum of shares  :", vec_sum(shares).tolist(), "= 3 * (x + u) =",
      vec_scale(3, vec(np.array([17, 27]))).tolist())

# --- 2. Shamir sharing -------------------------------------------------------
secret = vec([1234, 5678])
dealt = shamir_share(secret, t=3, n=5, seed=9)
print("\nany 3 of 5 Shamir shares reconstruct:",
      shamir_reconstruct(dealt[1:4], 3).tolist())
print("shares themselves look unrelated:", [s.value.tolist() for s in dealt[:2]])

# --- 3. Coded redundancy -----------------------------------------------------
# A user turns its 3 shares into a degree-2 polynomial and also evaluates it
# at 3 reserve points.  Any 3 of the 6 evaluations pin the polynomial down.
pts = EvalPoints.standard(3, copies=1)
coded = encode_shares(shares, pts)
print("\ncoded copies  :", [c.tolist() for c in coded])

pool = [
    (pts.alpha(0), shares[0]),
    (pts.beta(0, 0), coded[0]),
    (pts.beta(0, 1), coded[1]),
]
rebuilt = recover_missing(pool, degree_bound=3, targets=[pts.alpha(1), pts.alpha(2)])
print("rebuilt shares:", [r.tolist() for r in rebuilt])
assert np.array_equal(rebuilt[0], shares[1])
assert np.array_equal(rebuilt[1], shares[2])
print("erasure recovery is exact.")
