"""Reference InfoNCE values at 256-bit precision.

Prints Rust tuples `(pos_sim, &[neg_sims], tau, loss)` for tests/common/mod.rs.
Inputs are exact binary64 values; logits are formed exactly before the
high-precision log-softmax, so the only error on the Rust side is its own.
"""
import mpmath as mp

mp.mp.prec = 256

CASES = [
    (0.5, [0.0], 0.5),
    (1.0, [-1.0] * 8, 0.1),
    (0.3, [0.1, -0.2, 0.25, 0.0], 0.07),
    (-0.4, [0.9, 0.8, 0.7], 0.2),
    (0.99, [0.98, -0.5], 0.05),
    # logits reach +-700
    (1.0, [-1.0, 0.5, 0.999], 1.0 / 700.0),
    (-1.0, [1.0, -1.0], 1.0 / 700.0),
    (0.7, [0.7, -0.7, 0.69], 0.001),
    (-0.7, [0.7], 0.001),
    (0.123456789, [0.987654321, -0.5, 0.25, 0.111, -0.999], 0.013),
    (0.0, [0.0] * 63, 1e6),
    (0.8, [0.1, 0.2, 0.3, 0.4, 0.5], 1e6),
]


def loss(pos, negs, tau):
    t = mp.mpf(tau)
    s = [mp.mpf(pos) / t] + [mp.mpf(n) / t for n in negs]
    m = max(s)
    lse = m + mp.log(mp.fsum(mp.exp(x - m) for x in s))
    return lse - s[0]


for pos, negs, tau in CASES:
    l = loss(pos, negs, tau)
    negs_txt = ", ".join(repr(float(n)) for n in negs)
    print(f"    ({pos!r}, &[{negs_txt}], {tau!r}, {mp.nstr(l, 25, min_fixed=-400, max_fixed=400)}),")
