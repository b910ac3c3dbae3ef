"""Smoke test for the kernpos extension module. Run after installing the wheel."""

import math

import kernpos

g = kernpos.GaussianParams(4.0, 1.0)
eps0, eps, r, s = g.spectrum()
assert abs(eps0 - 2 / 3) < 1e-15 and abs(eps - 1 / 3) < 1e-15

gauss = kernpos.Kernel(g)
assert abs(gauss.eval(0.0, 0.0) - 2 / math.sqrt(math.pi)) < 1e-14
assert abs(gauss.trace() - 1.0) < 1e-10

m, merr = gauss.moments_with_errors(4)
assert abs(m[1] - eps0**2 / (1 - eps**2)) < 1e-14

cert = gauss.certify(depth=12)
assert cert.is_positive and cert.depth == 12, str(cert)

flipped = kernpos.Kernel(kernpos.GaussianParams(1.0, 4.0))
cert = flipped.certify(depth=10)
assert cert.verdict == "NonPositive" and cert.witness == "NegativeEk" and cert.witness_k == 2
e, eerr = flipped.ek(2)
assert abs(e[1] + 0.5) < 1e-12

quad = kernpos.Kernel(kernpos.GaussianParams(1.5, 1.0), kernpos.PolyCoeffs(alpha2=-1.0, gamma2=5.0))
cert = quad.certify()
assert cert.witness == "NegativeEk" and cert.verified
assert quad.rs_z() > 0.0

linear = kernpos.Kernel(kernpos.GaussianParams(2.0, 1.0, e=1.0), kernpos.PolyCoeffs(alpha1=1.0, gamma0=2.0))
assert linear.certify().witness == "LinearWitness"

xs, ps, w = gauss.wigner(65, 128, 4.0)
total = sum(map(sum, w)) * (xs[1] - xs[0]) * (ps[1] - ps[0])
assert abs(total - 1.0) < 1e-8

csv, summary = kernpos.sweep(kernpos.GaussianParams(1.0, 1.0), kernpos.PolyCoeffs(), "A", 0.5, 2.0, 8, depth=4)
assert csv.startswith("# kpos-sweep v1") and "H_4:" in summary

try:
    kernpos.GaussianParams(-1.0, 1.0)
except ValueError:
    pass
else:
    raise AssertionError("negative A accepted")

print("kernpos smoke test passed")
