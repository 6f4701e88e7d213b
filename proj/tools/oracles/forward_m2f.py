#!/usr/bin/env python3
"""Forward-side oracle for the W==0, L=5 configuration.

Closed forms for the harmonic pair, the spine transition kernel, the k=1/k=2
many-to-few moments, and the spine Green function.  Everything here is
independent of the C++ implementation path: sine eigenbasis, exact
exponential-trig integrals, and scipy quadrature only.

Also verifies the Wronskian normalization (omega carries the Sturm-Liouville
p=1/2 factor so the Green flux jump is -2), checks eq-wronk behaviour on a
pushed Step potential, and pins the Philox4x32-10 known-answer vector.
"""

import json
import math

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

OUT = {}

# ---------------------------------------------------------------- W==0, L=5
L = 5.0
MU = 1.0
B = math.pi / L                      # base wavenumber
S1 = math.sin(B)                     # sin(pi/5) = v1 normalizer at x=1
LAM1 = -math.pi ** 2 / (2 * L * L)   # principal eigenvalue, -pi^2/50
LAM_INF = -math.pi ** 2 / (2 * (2 * L) ** 2)  # 2L-solve limit proxy
W_EFF = (MU * MU - 1) / 2 - LAM1     # exact additive-martingale decay rate
W_TILDE = LAM_INF - LAM1             # gap entering the Green-function energy


def v1(x):
    return math.sin(B * x) / S1


def v1p(x):
    return B * math.cos(B * x) / S1


NORM2 = (L / 2) / S1 ** 2            # ||v1||_2^2

# h_tilde = c_L e^{-mu x} v1 has unit mass; closed form for the mass
mass_closed = B * (1 + math.exp(-L)) / (1 + B * B)
mass_quad = quad(lambda x: math.exp(-MU * x) * v1(x), 0, L, epsabs=1e-14)[0]
mass_quad *= S1  # quad used v1; closed form is for sin(Bx)
assert abs(mass_closed - mass_quad) < 1e-12
CL = S1 / mass_closed                # h_tilde = CL e^{-x} sin(Bx)/S1


def h(x):
    return math.exp(MU * x) * v1(x) / (CL * NORM2)


H2 = h(2.0)
OUT["w_eff"] = W_EFF
OUT["lambda1"] = LAM1
OUT["lambda1_inf_2L"] = LAM_INF
OUT["cL"] = CL
OUT["v1_norm2_sq"] = NORM2
OUT["h_at_2"] = H2
OUT["k1_rhs_x2_t2"] = H2 * math.exp(-2 * W_EFF)

# <h_tilde, h> = 1 by construction
ip = quad(lambda x: CL * math.exp(-MU * x) * v1(x) * h(x), 0, L, epsabs=1e-13)[0]
assert abs(ip - 1.0) < 1e-10

# ------------------------------------------------- spine kernel coefficients
# q_s(x,y) = (v1(y)/v1(x)) sum_k (2/L) sin(kBx) sin(kBy) e^{-s(k^2-1)W1},
# W1 = pi^2/(2L^2).  The kernel ratio's v1(y) joins h(y), so the function
# expanded in the sine basis is v1(y)h(y) = e^y sin^2(By)/(S1^2 CL NORM2):
# E^spine_x[h(zeta_s)] = sum_k A_k(x) e^{-s(k^2-1)W1} with
# A_k(x) = (2/L) sin(kBx) a_k / (v1(x) CL NORM2),
# a_k = int_0^L sin(kBy) e^y sin^2(By) dy / S1^2  (closed form below).
W1 = math.pi ** 2 / (2 * L * L)
assert abs(W1 - W_EFF) < 1e-15       # mu = 1 makes them coincide


def sin_exp_integral(m):
    """int_0^L sin(m B y) e^y dy, exact; odd in m."""
    mb = m * B
    return mb * (1.0 - ((-1) ** abs(m)) * math.exp(L)) / (1 + mb * mb)


def a_coef(k):
    return (0.5 * sin_exp_integral(k)
            - 0.25 * sin_exp_integral(k + 2)
            - 0.25 * sin_exp_integral(k - 2)) / S1 ** 2


def A_coef(k, x):
    return (2 / L) * math.sin(k * B * x) * a_coef(k) / (v1(x) * CL * NORM2)


# s=0 the series must resum to h(x); coefficients decay like 1/k^2
acc = sum(A_coef(k, 2.0) for k in range(1, 40000))
assert abs(acc - H2) < 1e-7, (acc, H2)

# s -> infinity: only k=1 survives and the limit is <Pi, h>
pih = quad(lambda y: v1(y) ** 2 / NORM2 * h(y), 0, L, epsabs=1e-13)[0]
assert abs(A_coef(1, 2.0) - pih) < 1e-12


def espine_h(s, x=2.0, kmax=400):
    tot = 0.0
    for k in range(1, kmax + 1):
        tot += A_coef(k, x) * math.exp(-s * (k * k - 1) * W1)
    return tot


# ------------------------------------------------------- k=2 spine moment
# M2_spine = int_0^t e^{-w s} E^spine[r h(zeta_s)] e^{-2w(t-s)} ds, r = 1/2.
# Term-by-term the time integral is exact:
#   (1/2) sum_k A_k e^{-2wt} int_0^t e^{-w(k^2-2)s} ds.
T = 2.0
X0 = 2.0
m2 = 0.0
for k in range(1, 4000):
    Ak = A_coef(k, X0)
    c = W_EFF * (k * k - 2)
    m2 += Ak * math.exp(-2 * W_EFF * T) * (1.0 - math.exp(-c * T)) / c
m2 *= 0.5

# independent route: Gauss-Legendre in s against the truncated series
nodes, weights = np.polynomial.legendre.leggauss(80)
s_nodes = 0.5 * T * (nodes + 1.0)
m2_gl = 0.0
for s, wgt in zip(s_nodes, weights):
    kmax = max(60, int(20 / math.sqrt(s * W1)))
    m2_gl += 0.5 * T * wgt * math.exp(-W_EFF * s) * 0.5 * espine_h(s, X0, kmax) \
        * math.exp(-2 * W_EFF * (T - s))
assert abs(m2 - m2_gl) < 1e-10, (m2, m2_gl)

OUT["m2_spine_x2_t2"] = m2
OUT["k2_pair_sum_x2_t2"] = 2 * H2 * m2

# ------------------------------------------------------------ Green function
# Energy lambda = lambda1 + xi (resolvent of the spine semigroup at xi; the
# spine generator is the lambda1-shifted h-transform, top eigenvalue 0).
# d_lam(x) = sinh(sqrt(2 lam)(L-x)) / sinh(sqrt(2 lam1)(L-1)), trig branch for
# negative arguments; g_lam solves the same ODE with g(0)=0, g'(0)=v1'(0);
# omega = (1/2)(d g' - d' g) so that the flux jump of G is -2.
def fundamental(lam):
    s2 = math.sqrt(-2 * lam)             # lam < 0 along this family
    s1n = math.sqrt(-2 * LAM1)
    denom = math.sin(s1n * (L - 1))
    v1p0 = v1p(0.0)

    def g(x):
        return v1p0 * math.sin(s2 * x) / s2

    def gp(x):
        return v1p0 * math.cos(s2 * x)

    def d(x):
        return math.sin(s2 * (L - x)) / denom

    def dp(x):
        return -s2 * math.cos(s2 * (L - x)) / denom

    omega = 0.5 * (d(1.0) * gp(1.0) - dp(1.0) * g(1.0))
    return g, gp, d, dp, omega


def green(xi, x, y):
    lam = LAM1 + xi
    g, gp, d, dp, omega = fundamental(lam)
    lo, hi = min(x, y), max(x, y)
    return (v1(y) / v1(x)) * d(hi) * g(lo) / omega


XI = 0.01
G_23 = green(XI, 2.0, 3.5)
G_32 = green(XI, 3.5, 2.0)
assert abs(G_23 / G_32 - (v1(3.5) / v1(2.0)) ** 2) < 1e-12

# G at energy lambda1 + xi solves (xi - Lspine) G = delta_y with
# Lspine = (1/2)d^2 + (v1'/v1)d, i.e. G is the resolvent of the spine kernel:
# G_xi = int_0^infty e^{-xi t} q_t dt with no extra damping.
# Residual away from y:
def pde_residual(xi, x, y, hh=1e-4):
    gm2 = green(xi, x - 2 * hh, y)
    gm1 = green(xi, x - hh, y)
    g0 = green(xi, x, y)
    gp1 = green(xi, x + hh, y)
    gp2 = green(xi, x + 2 * hh, y)
    d1 = (-gp2 + 8 * gp1 - 8 * gm1 + gm2) / (12 * hh)
    d2 = (-gp2 + 16 * gp1 - 30 * g0 + 16 * gm1 - gm2) / (12 * hh * hh)
    drift = B * math.cos(B * x) / math.sin(B * x)
    return xi * g0 - 0.5 * d2 - drift * d1


for xx in (1.2, 2.8, 4.1):
    r = pde_residual(XI, xx, 3.5)
    scale = max(1.0, abs(green(XI, xx, 3.5)))
    assert abs(r) < 1e-6 * scale, (xx, r)

# flux jump across x=y must be -2 (pins the 1/2 in omega)
y0 = 3.5
hh = 1e-6
jump = (green(XI, y0 + hh, y0) - green(XI, y0, y0)) / hh \
    - (green(XI, y0, y0) - green(XI, y0 - hh, y0)) / hh
assert abs(jump - (-2.0)) < 1e-3, jump

# omega vanishes linearly at the eigenvalue with slope ||v1||^2 (the
# eq-wronk statement localized at lambda1, the sharp form of the invariant)
for eps, tol in ((1e-5, 1e-3), (1e-7, 1e-5)):
    _, _, _, _, om = fundamental(LAM1 + eps)
    ratio = om / (eps * NORM2)
    assert abs(ratio - 1) < tol, (eps, ratio)

# g,d -> v1 pointwise as xi -> 0 (energy -> lambda1): exact collapse
g0, _, d0, _, _ = fundamental(LAM1 + 1e-9)
for xx in (0.5, 1.0, 2.0, 2.5):
    assert abs(g0(xx) - v1(xx)) < 1e-6
    assert abs(d0(xx) - v1(xx)) < 1e-6

OUT["green_xi"] = XI
OUT["green_2_35"] = G_23
OUT["green_35_2"] = G_32
OUT["green_omega_xi001"] = fundamental(LAM1 + XI)[4]

# Remark rem:1 style bound on the occupation (resolvent convention makes it
# exact as printed): int_0^t q_s(x,y) ds <= e * G_{1/t}(x,y)
def occupation(t, x, y, kmax=2000):
    tot = 0.0
    for k in range(1, kmax + 1):
        ck = (v1(y) / v1(x)) * (2 / L) * math.sin(k * B * x) * math.sin(k * B * y)
        rate = (k * k - 1) * W1
        tot += ck * t if rate == 0 else ck * (1 - math.exp(-rate * t)) / rate
    return tot


for tt in (60.0, 200.0):   # xi = 1/t must satisfy xi <= 1/(10L)
    occ = occupation(tt, 2.0, 3.5)
    bound = math.e * green(1.0 / tt, 2.0, 3.5)
    assert occ <= bound, (tt, occ, bound)

# ------------------------------------------- pushed Step potential, eq-wronk
BSTEP = 3.09


def lam1_step(Lbox):
    """Principal eigenvalue of (1/2)v'' + (1/2)W v = lam v, W = BSTEP on [0,1]."""
    def f(q):
        lam = (BSTEP - q * q) / 2
        k = math.sqrt(2 * lam)
        return q / math.tan(q) + k / math.tanh(k * (Lbox - 1))
    qlo, qhi = 1e-9, math.sqrt(BSTEP) - 1e-12
    # ground state: first sign change of the matching condition
    qq = np.linspace(qlo, min(qhi, math.pi - 1e-9), 20000)
    vals = [f(q) for q in qq]
    for i in range(len(qq) - 1):
        if vals[i] > 0 and vals[i + 1] < 0:
            q = brentq(f, qq[i], qq[i + 1], xtol=1e-15)
            return (BSTEP - q * q) / 2
    raise RuntimeError("no root")


lam_inf_true = lam1_step(40.0)


def step_wronk_ratio(Lbox, xi_s):
    lam1 = lam1_step(Lbox)
    w = lam_inf_true - lam1
    p1 = math.sqrt(BSTEP - 2 * lam1)
    k1 = math.sqrt(2 * lam1)
    ell = Lbox - 1.0
    norm2 = (0.5 - math.sin(2 * p1) / (4 * p1)) / math.sin(p1) ** 2 \
        + (math.sinh(2 * k1 * ell) / (2 * k1) - ell) / (2 * math.sinh(k1 * ell) ** 2)
    lam = lam1 + xi_s
    p = math.sqrt(BSTEP - 2 * lam)
    k = math.sqrt(2 * lam)
    v1p0 = p1 / math.sin(p1)
    g1 = v1p0 * math.sin(p) / p
    gp1 = v1p0 * math.cos(p)
    d1 = math.sinh(k * ell) / math.sinh(k1 * ell)
    dp1 = -k * math.cosh(k * ell) / math.sinh(k1 * ell)
    omega = 0.5 * (d1 * gp1 - dp1 * g1)
    return omega / ((xi_s + w) * norm2)


# In the admissible window w << xi <= 1/(10L) the ratio is
# xi/(xi+w) * (1 + O(xi L)); measured curvature d(ln omega')/d(lambda) grows
# ~7(L-1), so at the window top the upward term is ~0.33 for either L.  The
# decisive pin of the 1/2 Wronskian factor is the eps->0 collapse test above;
# here we only require the same-ballpark window (a misplaced factor of 2
# would land near 2.4-2.6 or 0.61-0.66, outside these bounds).
for Lbox in (10.0, 14.0):
    xi_top = 1.0 / (10.0 * Lbox)
    r_top = step_wronk_ratio(Lbox, xi_top)
    print(f"step_wronk_ratio L={Lbox} xi={xi_top:.4g}: {r_top:.6f}")
    assert 0.8 < r_top < 1.6, (Lbox, r_top)
r_in = step_wronk_ratio(14.0, 1.0 / (30.0 * 14.0))
print(f"step_wronk_ratio L=14 xi={1.0/420.0:.4g}: {r_in:.6f}")
assert 0.9 < r_in < 1.25, r_in

OUT["step_lambda1_L10"] = lam1_step(10.0)
OUT["step_lambda_inf"] = lam_inf_true
OUT["step_w_L10"] = lam_inf_true - lam1_step(10.0)

# ------------------------------------------------------------- Philox4x32-10
M0 = 0xD2511F53
M1 = 0xCD9E8D57
KW0 = 0x9E3779B9
KW1 = 0xBB67AE85


def philox4x32(ctr, key, rounds=10):
    x = list(ctr)
    k0, k1 = key
    for _ in range(rounds):
        p0 = x[0] * M0
        p1 = x[2] * M1
        hi0, lo0 = (p0 >> 32) & 0xFFFFFFFF, p0 & 0xFFFFFFFF
        hi1, lo1 = (p1 >> 32) & 0xFFFFFFFF, p1 & 0xFFFFFFFF
        x = [(hi1 ^ x[1] ^ k0) & 0xFFFFFFFF, lo1,
             (hi0 ^ x[3] ^ k1) & 0xFFFFFFFF, lo0]
        k0 = (k0 + KW0) & 0xFFFFFFFF
        k1 = (k1 + KW1) & 0xFFFFFFFF
    return x


kat = philox4x32((0, 0, 0, 0), (0, 0))
expected = [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]
assert kat == expected, [hex(v) for v in kat]

OUT["philox_zero_kat"] = [f"{v:08x}" for v in kat]
OUT["philox_key42_ctr0"] = [f"{v:08x}" for v in philox4x32((0, 0, 0, 0), (42, 0))]
OUT["philox_keyDB_ctr1234"] = [
    f"{v:08x}" for v in philox4x32((1, 2, 3, 4), (0xDEADBEEF, 0xCAFEBABE))]

print(json.dumps(OUT, indent=1, sort_keys=True))
with open("/root/proj/tools/oracles/oracle_values_forward.json", "w") as fh:
    json.dump(OUT, fh, indent=1, sort_keys=True)
print("wrote /root/proj/tools/oracles/oracle_values_forward.json")
