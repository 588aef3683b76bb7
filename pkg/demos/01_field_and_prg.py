"""Field arithmetic and the deterministic PRG.

Everything downstream reduces to exact arithmetic in F_q (q = 2**32 - 5)
and reproducible randomness.  This script pokes both.
"""

import numpy as np

from circagg import field
from circagg.field import Q, prg, vec

print(f"field modulus q = {Q} (= 2**32 - 5)")

# Scalars wrap exactly.
print("q-1 + 1        =", field.add(Q - 1, 1))
print("inverse of 2   =", field.inv(2), " check:", field.mul(2, field.inv(2)))

# Vectors are numpy uint64 arrays; ops are elementwise mod q.
a = vec([1, 2, Q - 1])
b = vec([10, 20, 30])
print("a + b          =", field.vec_add(a, b))
print("a - b          =", field.vec_sub(a, b))
print("3 * a          =", field.vec_scale(3, a))

# The PRG is a pure function of (seed, index): same seed, same stream,
# and shorter draws are prefixes of longer ones.
s = 42
print("prg(42, 6)     =", prg(s, 6).tolist())
print("prg(42, 3)     =", prg(s, 3).tolist(), "(a prefix)")
assert np.array_equal(prg(s, 3), prg(s, 6)[:3])

# Uniformity sanity: the mean of many draws sits near (q-1)/2.
draws = prg(7, 200_000)
print(f"mean of 2e5 draws / ((q-1)/2) = {float(draws.mean()) / ((Q - 1) / 2):.5f}")

print("\nNOTE: the PRG is splitmix64 with rejection sampling -- deterministic")
print("simulation fidelity only, with no cryptographic strength whatsoever.")
