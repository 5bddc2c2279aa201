"""Independent reference values for the C++ test suite.

Re-implements the reactor model with numpy/scipy and prints the numbers that
the tests freeze. Run with `python3 tests/oracles/reference_model.py`.
"""

import numpy as np
from scipy.integrate import solve_ivp

P = dict(mu_X_max=0.153, mu_D_max=3.955e-5, mu_m1_bar=1.0, mu_m2_bar=1.0, mu_Lp2_bar=1.0,
         K1=1689.0, K2=524.0, K_G=0.85, KI_L=344.0, KI_P=0.688, L_max1=628.0, L_max2=0.5,
         cG_bar=7.5, a1G=0.4876, a1P=6.62e-8, a3G=1.102e-4, a3P=1.2e-5, a4L=1.89e-5,
         a5L=0.5504, a6L=1.0249e-5, gamma=10.0, alpha=100.0, cG_in=32.5)

X0 = np.array([5.650, 3.955, 0.0, 34.18, 0.678, 0.0])


def stoich(p):
    return np.array([
        [1, 0, -p["a1G"], 0, p["a1P"]],
        [-1, 1, 0, 0, 0],
        [0, 0, -p["a3G"], 0, p["a3P"]],
        [0, 0, 0, p["a4L"], 0],
        [0, 0, 0, p["a5L"], 0],
        [0, 0, 0, p["a6L"], 0],
    ])


def smax(xs, alpha):
    xs = np.asarray(xs, dtype=float)
    w = np.exp(alpha * (xs - xs.max()))
    return float((xs * w).sum() / w.sum())


def rhs(t, x, u, p=P):
    V, m = x[0], x[1:]
    FW, FG, Fper, Fout, T = u
    c = m / V
    Xv, G, L, Pm = c[0], c[2], c[3], c[4]
    den = p["K_G"] * Xv + G
    f_lim = 0.0 if den == 0.0 else G / den
    f_G = 1.0 - 1.0 / (1.0 + np.exp(-p["gamma"] * (G - p["cG_bar"])))
    f_inh = p["KI_L"] / (p["KI_L"] + L) * smax([0.0, 1.0 - p["KI_P"] * Pm], p["alpha"]) * f_G
    mu_X = p["mu_X_max"] * f_lim * f_inh * np.exp(-p["K1"] / T)
    mu_D = p["mu_D_max"] * np.exp(-p["K2"] / T)
    mus = np.array([mu_X, mu_D, p["mu_m1_bar"], p["mu_m2_bar"] * (p["L_max2"] - L) / p["L_max2"],
                    mu_X * (p["L_max1"] - L) / p["L_max1"], p["mu_Lp2_bar"] * (p["L_max1"] - L) / p["L_max1"]])
    r = mus * Xv
    R = stoich(p).T @ r
    C_in = np.zeros((5, 2))
    C_in[2, 1] = p["cG_in"]
    C_per = np.diag([0, 0, 1, 1, 0])
    dV = FW + FG - Fout - Fper
    dm = C_in @ np.array([FW, FG]) - c * Fout - C_per @ c * Fper + R * V
    return np.concatenate([[dV], dm])


def integrate(x0, u, t0, t1):
    sol = solve_ivp(rhs, (t0, t1), x0, args=(u,), method="DOP853", rtol=1e-13, atol=1e-14)
    assert sol.success
    return sol.y[:, -1]


def base_case_inputs(p=P, days=14, ts=30.0, batch_end=2, fed_end=6, T=310.15,
                     bolus_total=0.018, bolus_conc=32.0, per_flow=0.0015, per_total=0.0015, per_conc=8.65,
                     draw_offset=720.0, draw_len=30.0, draw_vol=0.05):
    n = int(days * 1440 / ts)
    inputs = []
    for k in range(n):
        mid = (k + 0.5) * ts
        day, tod = divmod(mid, 1440.0)
        FW = FG = Fper = Fout = 0.0
        if batch_end * 1440 <= mid < fed_end * 1440 and tod < 30.0:
            FG = bolus_total * bolus_conc / p["cG_in"]
            FW = bolus_total - FG
        elif mid >= fed_end * 1440:
            Fper = per_flow
            FG = per_total * per_conc / p["cG_in"]
            FW = per_total - FG
        if day >= batch_end and draw_offset <= tod < draw_offset + draw_len:
            Fout = draw_vol / draw_len
            if mid >= fed_end * 1440:
                FG = (per_total + Fout) * per_conc / p["cG_in"]
                FW = per_total + Fout - FG
        inputs.append((FW, FG, Fper, Fout, T))
    return inputs, ts


def simulate(inputs, ts, x0=X0):
    x = x0.copy()
    xs = [x.copy()]
    for k, u in enumerate(inputs):
        x = integrate(x, u, k * ts, (k + 1) * ts)
        xs.append(x.copy())
    return np.array(xs)


def main():
    np.set_printoptions(precision=17)
    u_probe = (0.001, 0.002, 0.0015, 0.0005, 309.0)
    x_probe = np.array([6.2, 8.1, 0.9, 40.0, 3.5, 1.2])
    print("rhs(x_probe, u_probe) =", repr(rhs(0.0, x_probe, u_probe)))
    print("rhs(x0, batch) =", repr(rhs(0.0, X0, (0, 0, 0, 0, 310.15))))
    print("f_temp(310.15) =", repr(np.exp(-1689.0 / 310.15)))
    print("x(1 day, batch) =", repr(integrate(X0, (0, 0, 0, 0, 310.15), 0.0, 1440.0)))
    print("x(1 day, u_probe) =", repr(integrate(X0, u_probe, 0.0, 1440.0)))
    inputs, ts = base_case_inputs()
    xs = simulate(inputs, ts)
    print("base case final state =", repr(xs[-1]))
    print("base case max V =", repr(xs[:, 0].max()), "min m_G =", repr(xs[:, 3].min()))
    # Floor of y * s(alpha y): minimise t * sigma(t) over t.
    from scipy.optimize import minimize_scalar
    res = minimize_scalar(lambda t: t / (1 + np.exp(-t)), bounds=(-5, 0), method="bounded",
                          options=dict(xatol=1e-12))
    print("smooth-max floor * alpha =", repr(res.fun), "at", repr(res.x))


if __name__ == "__main__":
    main()
