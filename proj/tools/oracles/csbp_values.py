#!/usr/bin/env python3
"""Independent reference values for the CSBP layer.

Closed forms for the stable and Feller mechanisms; adaptive quadrature plus
implicit-time inversion (t = int_u^inf ds/psi(s)) for the mixed mechanism --
deliberately different machinery from the C++ layer, which integrates the
Laplace-exponent ODE directly.

Writes oracle_values_csbp.json next to this script.
"""

import json
import math
import os

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq


ALPHA = 1.5


# --- stable mechanism psi(theta) = C theta^alpha, C=1 ------------------------

def u_stable(t, theta, alpha=ALPHA, C=1.0):
    return (theta ** (1 - alpha) + (alpha - 1) * C * t) ** (-1.0 / (alpha - 1))


def ubar_stable(t, alpha=ALPHA, C=1.0):
    return ((alpha - 1) * C * t) ** (-1.0 / (alpha - 1))


def sibuya_p(alpha, imax):
    """offspring law of the reduced process for the stable mechanism:
    p_2 = alpha/2, p_{i+1} = p_i (i-alpha)/(i+1)."""
    p = {2: alpha / 2.0}
    for i in range(2, imax):
        p[i + 1] = p[i] * (i - alpha) / (i + 1)
    return p


# --- CutoffStable jump part: Lambda_A = A^{-alpha} image of Lebesgue[0,1] ----

def psi_jump_cutoff(u, A, alpha):
    """int (e^{-ux} - 1 + ux) Lambda_A(dx), closed form, complex-safe."""
    c = u * A
    if abs(c) < 1e-8:
        ee = c * c / 6.0 - c ** 3 / 24.0
    else:
        ee = (1.0 - np.exp(-c)) / c - 1.0 + c / 2.0
    return A ** (-alpha) * ee


def jump_moment_cutoff(p, A, alpha):
    # int x^p Lambda_A = A^{p-alpha}/(p+1)
    return A ** (p - alpha) / (p + 1.0)


def main():
    out = {}

    # stable closed forms used by the acceptance gate
    out["stable_u1_at_theta1"] = u_stable(1.0, 1.0)          # = 4/9
    out["stable_ubar_t1"] = ubar_stable(1.0)                 # = 4
    out["stable_ubar_t05"] = ubar_stable(0.5)                # = 16
    assert abs(out["stable_u1_at_theta1"] - 4.0 / 9.0) < 1e-15
    assert abs(out["stable_ubar_t1"] - 4.0) < 1e-12
    out["stable_m_tau1"] = out["stable_ubar_t1"] ** (ALPHA - 1)      # psi(u)/u = 2
    out["stable_r_tau1"] = (ALPHA - 1) * out["stable_ubar_t1"] ** (ALPHA - 1)  # = 1
    out["stable_EZ_s05_t1"] = out["stable_ubar_t05"] / out["stable_ubar_t1"]  # = 4

    p = sibuya_p(ALPHA, 40)
    out["stable_p"] = {str(i): p[i] for i in (2, 3, 4, 5, 6, 8, 12)}
    assert abs(p[2] - 0.75) < 1e-15 and abs(p[3] - 0.125) < 1e-15
    assert abs(p[4] - 0.046875) < 1e-15
    s40 = sum(p.values())
    out["stable_p_head40_mass"] = s40
    # mean number of offspring alpha/(alpha-1) = 3
    out["stable_EK"] = ALPHA / (ALPHA - 1)

    # entrance-law right-hand side 1 - u_t(theta*ubar)/ubar at t=1, b=0
    out["stable_entrance_rhs"] = {
        str(th): 1.0 - u_stable(1.0, th * 4.0) / 4.0 for th in (0.5, 1.0, 2.0)
    }

    # Feller d=1: psi = theta^2/2, u_t = theta/(1+theta t/2), ubar_t = 2/t
    out["feller_ubar_t1"] = 2.0
    out["feller_Mhat2_t1"] = 0.5        # (m2/2!) * int_0^1 1 = 1/2  (m2 = d = 1)
    out["feller_unplanar2_t1"] = 0.5    # 2 * Mhat2 / ubar_1
    out["feller_entrance_rhs"] = {str(th): 1.0 / (1.0 + th) for th in (0.5, 1.0, 2.0)}

    # CutoffStable A=2 jump moments and the frozen recursion example
    A = 2.0
    # direct quadrature of int x^p Lambda_A = A^{-alpha} int_0^1 (Ax)^p dx
    for pp in (2, 3, 4, 5):
        num = A ** (-ALPHA) * quad(lambda x: (A * x) ** pp, 0, 1)[0]
        assert abs(num - jump_moment_cutoff(pp, A, ALPHA)) < 1e-12
    out["cutoff_m2_A2"] = jump_moment_cutoff(2, A, ALPHA)    # 2^{0.5}/3
    out["cutoff_Mhat2_t1"] = out["cutoff_m2_A2"] / 2.0       # 2^{0.5}/6
    assert abs(out["cutoff_Mhat2_t1"] - math.sqrt(2.0) / 6.0) < 1e-14

    # psi closed form vs direct quadrature, and the A-scaling identity
    for th in (0.5, 1.0, 2.0, 5.0):
        direct = quad(lambda x: (math.exp(-th * A * x) - 1 + th * A * x) * A ** (-ALPHA),
                      0, 1)[0]
        assert abs(direct - psi_jump_cutoff(th, A, ALPHA)) < 1e-13
    for pp in (2, 3, 4):
        assert abs(jump_moment_cutoff(pp, 2 * A, ALPHA) /
                   jump_moment_cutoff(pp, A, ALPHA) - 2 ** (pp - ALPHA)) < 1e-14

    # Carleman proxy: m_k^{1/k}/k decreasing on k in [4,12]
    seq = [jump_moment_cutoff(k, A, ALPHA) ** (1.0 / k) / k for k in range(4, 13)]
    assert all(a > b for a, b in zip(seq, seq[1:]))

    # Grey's condition fails for a pure compact-support jump mechanism (psi
    # grows linearly), holds once d>0
    big = 1e8
    assert psi_jump_cutoff(big, A, ALPHA) / big < 1.0  # linear growth, slope<1

    # --- mixed mechanism: d=1, b=0, CutoffStable(A=2, alpha=1.5, Leb[0,1]) ---
    def psi_mixed(u):
        return 0.5 * u * u + psi_jump_cutoff(u, A, ALPHA)

    def time_to_fall(u_hi, u_lo):
        # t = int_{u_lo}^{u_hi} du/psi(u), via y = log u so the 1/u^2 spike at
        # small u and the quadratic tail are both tame; u_hi may be inf.  The
        # infinite tail must also be done in log space: a direct quad on
        # [1e8, inf) puts all its mass in a ~1e-8 sliver of the transformed
        # variable and silently returns ~0.  Past 1e14 psi == v^2/2 to 1e-14
        # relative, so the remainder is 2/1e14 exactly at this precision.
        top = min(u_hi, 1e14 if math.isinf(u_hi) else 1e8)
        f = lambda y: math.exp(y) / psi_mixed(math.exp(y))
        mid = min(0.0, math.log(top))
        t = quad(f, math.log(u_lo), mid, limit=800, epsabs=1e-13, epsrel=1e-13)[0] \
            + quad(f, mid, math.log(top), limit=800, epsabs=1e-13, epsrel=1e-13)[0]
        if math.isinf(u_hi):
            t += 2.0 / 1e14
        return t

    def ubar_mixed(t):
        return brentq(lambda v: time_to_fall(np.inf, v) - t, 0.5, 1e4,
                      xtol=1e-14, rtol=1e-14)

    def u_mixed(t, theta):
        return brentq(lambda v: time_to_fall(theta, v) - t,
                      0.01 * theta, theta * (1 - 1e-12), xtol=1e-14, rtol=1e-14)

    ub1 = ubar_mixed(1.0)
    out["mixed_ubar_t1"] = ub1
    out["mixed_ubar_t05"] = ubar_mixed(0.5)
    out["mixed_u1_theta1"] = u_mixed(1.0, 1.0)
    out["mixed_u1_theta2"] = u_mixed(1.0, 2.0)
    # semigroup sanity: u_{0.5}(u_{0.5}(theta)) == u_1(theta)
    assert abs(u_mixed(0.5, u_mixed(0.5, 2.0)) - out["mixed_u1_theta2"]) < 1e-9

    # reduced-process rates at ubar_1:
    #   r_i = ubar^{i-1} [ int x^i e^{-ubar x} Lambda_A(dx) + 1_{i=2} d ] / i!
    def jump_exp_moment(i, u):
        return A ** (-ALPHA) * quad(lambda x: (A * x) ** i * math.exp(-u * A * x),
                                    0, 1, epsabs=1e-14, epsrel=1e-13)[0]

    def psi_prime(u):
        # psi_J'(u) = int x (1 - e^{-ux}) Lambda_A(dx)
        return u + A ** (-ALPHA) * quad(
            lambda x: A * x * (1.0 - math.exp(-u * A * x)), 0, 1,
            epsabs=1e-14, epsrel=1e-13)[0]

    r_tau = psi_prime(ub1) - psi_mixed(ub1) / ub1
    out["mixed_r_tau1"] = r_tau
    out["mixed_m_tau1"] = psi_mixed(ub1) / ub1
    r = {}
    for i in range(2, 65):
        r[i] = ub1 ** (i - 1) * ((1.0 if i == 2 else 0.0) + jump_exp_moment(i, ub1)) \
            / math.factorial(i)
    tail = r_tau - sum(r.values())
    out["mixed_p"] = {str(i): r[i] / r_tau for i in (2, 3, 4, 5, 6, 8, 12)}
    out["mixed_p_tail_after64"] = tail / r_tau
    assert abs(tail) / r_tau < 1e-8  # super-geometric decay justifies K_max=64

    # factorial moments of the offspring law: E[K^(k)] = ubar^{k-1} m_k / r_tau
    out["mixed_EK2"] = ub1 * (1.0 + jump_moment_cutoff(2, A, ALPHA)) / r_tau
    out["mixed_EK3"] = ub1 ** 2 * jump_moment_cutoff(3, A, ALPHA) / r_tau

    # Cauchy-circle derivative extraction of the same p_i (the C++ method),
    # validated against the quadrature values above: H entire for compact
    # support jumps, so a radius > 1 is safe and keeps high orders accurate
    M, rho = 256, 2.0
    js = np.arange(M)
    th = rho * np.exp(2j * np.pi * js / M)
    Hv = []
    for t_ in th:
        z = (1.0 - t_) * ub1
        val = t_ * psi_prime(ub1) - (psi_mixed(ub1) -
                                     (0.5 * z * z + psi_jump_cutoff(z, A, ALPHA))) / ub1
        Hv.append(val / r_tau)
    coef = np.fft.fft(np.array(Hv)) / M
    for i in range(2, 41):
        ph = coef[i].real / rho ** i
        assert abs(ph - r[i] / r_tau) < 1e-10, (i, ph, r[i] / r_tau)

    path = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                        "oracle_values_csbp.json")
    with open(path, "w") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)
    print(json.dumps(out, indent=1, sort_keys=True))
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
