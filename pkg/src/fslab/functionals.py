"""Weighted energy, CK, dissipation, and boundary functionals.

Integer-level functionals at order k with polynomial weight exponent n:

    E_kn   = int ub^2 U_k^2        x^{2k - 1/100}     <eta>^{2n} dy
    CK_kn  = int ub^2 U_k^2        x^{2k - 1 - 1/100} <eta>^{2n} dy / 100
    CKP_kn = int (-dp_E/dx) U_k^2  x^{2k - 1/100}     <eta>^{2n} dy
    D_kn   = int ub |d_y U_k|^2    x^{2k - 1/100}     <eta>^{2n} dy
    B_k    = ub_y(0) U_k(x,0)^2    x^{2k - 1/100}

plus the half-level (Y: streamwise, Z: vorticity) families, the quasilinear
top level built on mu = ub + eps u, and stream-function-weighted variants
carrying the extra factor <psi> = (1 + psi_bar^2)^{1/2}.  The CK terms are
created by the x^{-1/100} decay factor and by the favorable pressure gradient
(-dp_E/dx = m x^{2m-1} >= 0), respectively; every integrand is a square
against a nonnegative weight.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBackground, MissingOrder
from .numerics import deriv1, deriv2, tail_fraction, trapz, wall_derivative

N_MAX = 10
K_MAX = 5

_X_LOSS = 1.0 / 100.0


@dataclass(frozen=True)
class WeightSet:
    """Scalar weights of the level hierarchy, strictly decreasing with order."""

    sigma: tuple       # sigma_k, k = 0..5
    sigma_y: tuple     # sigma^{(Y)}_{k+1/2}, k = 0..4
    sigma_z: tuple     # sigma^{(Z)}_{k+1/2}, k = 0..4

    def __post_init__(self):
        if len(self.sigma) != 6 or len(self.sigma_y) != 5 or len(self.sigma_z) != 5:
            raise ValueError("need 6 integer and 5 half-level weights")
        if any(a != b for a, b in zip(self.sigma_y, self.sigma_z)):
            raise ValueError("Y and Z half-level weights must coincide")
        chain = []
        for k in range(5):
            chain += [self.sigma[k], self.sigma_y[k]]
        chain.append(self.sigma[5])
        if any(c <= 0 for c in chain):
            raise ValueError("weights must be positive")
        if any(later >= earlier for earlier, later in zip(chain, chain[1:])):
            raise ValueError("weights must decrease strictly with the order")

    @classmethod
    def geometric(cls, ratio=0.3):
        """Chain sigma_0 = 1 > sigma_{1/2} = r > sigma_1 = r^2 > ..."""
        if not 0 < ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        sigma = tuple(ratio ** (2 * k) for k in range(6))
        half = tuple(ratio ** (2 * k + 1) for k in range(5))
        return cls(sigma=sigma, sigma_y=half, sigma_z=half)


@dataclass(frozen=True)
class FunctionalReport:
    """All functional values at one station; absent orders are NaN."""

    x: float
    k_max: int
    E: np.ndarray
    CK: np.ndarray
    CKP: np.ndarray
    D: np.ndarray
    B: np.ndarray
    EY: np.ndarray
    DY: np.ndarray
    EZ: np.ndarray
    DZ: np.ndarray
    BZ: np.ndarray
    Ebar5: float
    CKbar5: float
    CKPbar5: float
    Dbar5: float
    Bbar5: float
    hE: np.ndarray
    hCK: np.ndarray
    hCKP: np.ndarray
    hD: np.ndarray
    hEY: np.ndarray
    hDY: np.ndarray
    hEZ: np.ndarray
    hDZ: np.ndarray
    I_le: np.ndarray
    I_le_half: np.ndarray
    I_hat: np.ndarray
    I_hat_half: np.ndarray
    J_hat: np.ndarray
    J_hat_half: np.ndarray
    alpha: float
    gamma: float
    max_tail_fraction: float

    def quasi_energy(self, w: WeightSet):
        """Combined quasilinear energy: integer + half cascade plus the top level."""
        val = 0.0
        for k in range(5):
            val += w.sigma[k] * self.E[k, 10 - k]
            val += w.sigma_y[k] * self.EY[k, 9 - k] + w.sigma_z[k] * self.EZ[k, 9 - k]
        return val + w.sigma[5] * self.Ebar5

    def linear_energy(self, w: WeightSet):
        val = 0.0
        for k in range(5):
            val += w.sigma[k] * self.E[k, 10 - k]
            val += w.sigma_y[k] * self.EY[k, 9 - k] + w.sigma_z[k] * self.EZ[k, 9 - k]
        return val + w.sigma[5] * self.E[5, 0]

    def quasi_dissipation(self, w: WeightSet):
        val = 0.0
        for k in range(5):
            val += w.sigma[k] * self.D[k, 10 - k]
            val += w.sigma_y[k] * self.DY[k, 9 - k] + w.sigma_z[k] * self.DZ[k, 9 - k]
        return val + w.sigma[5] * self.Dbar5

    def quasi_ck(self, w: WeightSet):
        return sum(w.sigma[k] * self.CK[k, 10 - k] for k in range(5)) + w.sigma[5] * self.CKbar5

    def quasi_ckp(self, w: WeightSet):
        return sum(w.sigma[k] * self.CKP[k, 10 - k] for k in range(5)) + w.sigma[5] * self.CKPbar5

    def quasi_boundary(self, w: WeightSet):
        val = sum(w.sigma[k] * self.B[k] for k in range(5)) + w.sigma[5] * self.Bbar5
        val += sum(w.sigma_z[k] * self.BZ[k] for k in range(5))
        return val

    def flat(self):
        """Ordered name -> value mapping for CSV export."""
        out = {"x": self.x, "alpha": self.alpha, "gamma": self.gamma,
               "max_tail_fraction": self.max_tail_fraction}
        tables = [("E", self.E), ("CK", self.CK), ("CKP", self.CKP), ("D", self.D),
                  ("hatE", self.hE), ("hatCK", self.hCK), ("hatCKP", self.hCKP),
                  ("hatD", self.hD)]
        for name, tab in tables:
            for k in range(6):
                for n in range(N_MAX + 1):
                    out[f"{name}_k{k}_n{n}"] = float(tab[k, n])
        half = [("EY", self.EY), ("DY", self.DY), ("EZ", self.EZ), ("DZ", self.DZ),
                ("hatEY", self.hEY), ("hatDY", self.hDY), ("hatEZ", self.hEZ),
                ("hatDZ", self.hDZ)]
        for name, tab in half:
            for k in range(5):
                for n in range(N_MAX + 1):
                    out[f"{name}_k{k}half_n{n}"] = float(tab[k, n])
        for k in range(6):
            out[f"B_k{k}"] = float(self.B[k])
        for k in range(5):
            out[f"BZ_k{k}half"] = float(self.BZ[k])
        for name, val in [("Ebar5", self.Ebar5), ("CKbar5", self.CKbar5),
                          ("CKPbar5", self.CKPbar5), ("Dbar5", self.Dbar5),
                          ("Bbar5", self.Bbar5)]:
            out[name] = float(val)
        for name, arr in [("I_le", self.I_le), ("I_le_half", self.I_le_half),
                          ("I_hat", self.I_hat), ("I_hat_half", self.I_hat_half),
                          ("J_hat", self.J_hat), ("J_hat_half", self.J_hat_half)]:
            for k, v in enumerate(arr):
                out[f"{name}_{k}"] = float(v)
        return out


def ck_pressure(stack, bg, k, n):
    """Pressure CK term; identically zero on the flat plate (m = 0)."""
    if k > stack.k_max:
        raise MissingOrder(f"stack holds orders <= {stack.k_max}")
    if bg.m == 0.0:
        return 0.0
    x = stack.x
    w = (1.0 + bg.eta_grid ** 2) ** n
    g = bg.minus_dx_pE * stack.U[k] ** 2 * w
    return trapz(bg.y_grid, g) * x ** (2 * k - _X_LOSS)


def alpha_gamma(state, bg):
    """Weighted size of the first two y-derivatives of the ratio u/ub."""
    u = state.u if hasattr(state, "u") else np.asarray(state, dtype=float)
    if bg.u_bar_y[0] <= 0.0:
        raise DegenerateBackground("background wall shear must be positive")
    y = bg.y_grid
    r = np.empty_like(u)
    r[1:] = u[1:] / bg.u_bar[1:]
    r[0] = wall_derivative(y, u, 1) / bg.u_bar_y[0]
    r_y = deriv1(y, r)
    r_yy = deriv2(y, r)
    w4 = (1.0 + bg.eta_grid ** 2) ** 2
    x = bg.x
    m = bg.m
    alpha = trapz(y, r_y ** 2 * w4) * x ** (1.0 + m - _X_LOSS)
    gamma = trapz(y, bg.u_bar ** 2 * r_yy ** 2 * w4) * x ** (2.0 - 2.0 * m - _X_LOSS)
    return float(alpha), float(gamma)


def evaluate_all(stack, bg, check_tail=True) -> FunctionalReport:
    """Evaluate the full functional tables for one station."""
    y = bg.y_grid
    x = stack.x
    m = bg.m
    eta2 = 1.0 + bg.eta_grid ** 2
    psi_w = np.sqrt(1.0 + bg.psi_bar ** 2)
    k_max = stack.k_max

    E = np.full((6, N_MAX + 1), np.nan)
    CK = np.full((6, N_MAX + 1), np.nan)
    CKP = np.full((6, N_MAX + 1), np.nan)
    D = np.full((6, N_MAX + 1), np.nan)
    B = np.full(6, np.nan)
    EY = np.full((5, N_MAX + 1), np.nan)
    DY = np.full((5, N_MAX + 1), np.nan)
    EZ = np.full((5, N_MAX + 1), np.nan)
    DZ = np.full((5, N_MAX + 1), np.nan)
    BZ = np.full(5, np.nan)
    hE = np.full((6, N_MAX + 1), np.nan)
    hCK = np.full((6, N_MAX + 1), np.nan)
    hCKP = np.full((6, N_MAX + 1), np.nan)
    hD = np.full((6, N_MAX + 1), np.nan)
    hEY = np.full((5, N_MAX + 1), np.nan)
    hDY = np.full((5, N_MAX + 1), np.nan)
    hEZ = np.full((5, N_MAX + 1), np.nan)
    hDZ = np.full((5, N_MAX + 1), np.nan)

    mdp = bg.minus_dx_pE
    tail = 0.0

    def table_row(values, weight_extra=None):
        """Integrals of values * <eta>^{2n} (dy), n = 0..N_MAX."""
        g = values if weight_extra is None else values * weight_extra
        out = np.empty(N_MAX + 1)
        acc = g.copy()
        out[0] = trapz(y, acc)
        for n in range(1, N_MAX + 1):
            acc = acc * eta2
            out[n] = trapz(y, acc)
        return out

    for k in range(min(k_max, 5) + 1):
        Uk = stack.U[k]
        dyU = stack.dy_U(k)
        xw = x ** (2 * k - _X_LOSS)
        base_e = bg.u_bar ** 2 * Uk ** 2
        base_d = bg.u_bar * dyU ** 2
        E[k] = table_row(base_e) * xw
        CK[k] = table_row(base_e) * (x ** (2 * k - 1 - _X_LOSS) / 100.0)
        CKP[k] = table_row(Uk ** 2) * (mdp * xw)
        D[k] = table_row(base_d) * xw
        B[k] = bg.u_bar_y[0] * Uk[0] ** 2 * xw
        hE[k] = table_row(base_e, psi_w) * xw
        hCK[k] = table_row(base_e, psi_w) * (x ** (2 * k - 1 - _X_LOSS) / 100.0)
        hCKP[k] = table_row(Uk ** 2, psi_w) * (1.5 * mdp * xw)
        hD[k] = table_row(base_d, psi_w) * xw
        tail = max(tail, tail_fraction(y, base_e * eta2 ** N_MAX))

        if k <= 4:
            xw_y = x ** (2 * k + 1 - _X_LOSS)
            xw_z = x ** (2 * k + 1 - m - _X_LOSS)
            EY[k] = table_row(base_d) * xw_y
            hEY[k] = table_row(base_d, psi_w) * xw_y
            base_ez = bg.u_bar ** 2 * dyU ** 2
            EZ[k] = table_row(base_ez) * xw_z
            hEZ[k] = table_row(base_ez, psi_w) * xw_z
            dyyU = stack.dyy_U(k)
            base_dz = bg.u_bar * dyyU ** 2
            DZ[k] = table_row(base_dz) * xw_z
            hDZ[k] = table_row(base_dz, psi_w) * xw_z
            BZ[k] = bg.u_bar_y[0] * dyU[0] ** 2 * xw_z
            if k + 1 <= k_max:
                dxU = stack.dx_U(k)
                base_dy = bg.u_bar ** 2 * dxU ** 2
                DY[k] = table_row(base_dy) * xw_y
                hDY[k] = table_row(base_dy, psi_w) * xw_y

    if k_max >= 5:
        cU = stack.calU[5]
        dy_cU = stack.dy_calU(5)
        xw = x ** (10 - _X_LOSS)
        Ebar5 = trapz(y, stack.mu ** 2 * cU ** 2) * xw
        CKbar5 = trapz(y, bg.u_bar ** 2 * cU ** 2) * x ** (9 - _X_LOSS) / 100.0
        CKPbar5 = trapz(y, cU ** 2) * mdp * xw
        Dbar5 = trapz(y, stack.mu * dy_cU ** 2) * xw
        Bbar5 = stack.mu_y[0] * cU[0] ** 2 * xw
    else:
        Ebar5 = CKbar5 = CKPbar5 = Dbar5 = Bbar5 = float("nan")

    def aggregate(d_tab, ck_tab, b_vec, dy_tab, dz_tab, bz_vec, cascade):
        i_le = np.full(6, np.nan)
        i_half = np.full(5, np.nan)
        for k in range(6):
            ns = (lambda kk: 10 - kk) if cascade else (lambda kk: 0)
            nh = (lambda kk: 9 - kk) if cascade else (lambda kk: 0)
            vals = [d_tab[kp, ns(kp)] + ck_tab[kp, ns(kp)] + b_vec[kp] for kp in range(k + 1)]
            halves = [dy_tab[kp, nh(kp)] + dz_tab[kp, nh(kp)] + bz_vec[kp] for kp in range(k)]
            i_le[k] = float(np.sum(vals) + np.sum(halves))
            if k <= 4:
                i_half[k] = float(np.sum(vals) + np.sum(halves)
                                  + dy_tab[k, nh(k)] + dz_tab[k, nh(k)] + bz_vec[k])
        return i_le, i_half

    I_le, I_le_half = aggregate(D, CK, B, DY, DZ, BZ, cascade=False)
    I_hat, I_hat_half = aggregate(D, CK, B, DY, DZ, BZ, cascade=True)
    J_hat, J_hat_half = aggregate(hD, hCK, B, hDY, hDZ, BZ, cascade=True)

    a, g = alpha_gamma(stack.u_derivs[0], bg)

    return FunctionalReport(
        x=x, k_max=k_max, E=E, CK=CK, CKP=CKP, D=D, B=B,
        EY=EY, DY=DY, EZ=EZ, DZ=DZ, BZ=BZ,
        Ebar5=Ebar5, CKbar5=CKbar5, CKPbar5=CKPbar5, Dbar5=Dbar5, Bbar5=Bbar5,
        hE=hE, hCK=hCK, hCKP=hCKP, hD=hD, hEY=hEY, hDY=hDY, hEZ=hEZ, hDZ=hDZ,
        I_le=I_le, I_le_half=I_le_half, I_hat=I_hat, I_hat_half=I_hat_half,
        J_hat=J_hat, J_hat_half=J_hat_half,
        alpha=a, gamma=g,
        max_tail_fraction=float(tail) if check_tail else float("nan"))


@dataclass(frozen=True)
class SigmaCalibration:
    weights: WeightSet
    violations: int
    monotone: bool
    x_power: float


def calibrate_sigma(reports, candidate_ratios=None, x_power=0.0,
                    violation_threshold=None) -> SigmaCalibration:
    """Search decreasing weight chains for monotone combined energy decay.

    Scans geometric chains sigma_j = r^j over the candidate ratios and counts
    stations where the discrete x-derivative of x^x_power * E_quasi is
    positive; returns the weight set with the fewest violations.  A violation
    count above the threshold is flagged, not raised.
    """
    reports = list(reports)
    if len(reports) < 20:
        raise ValueError("need at least 20 stations to calibrate weights")
    if candidate_ratios is None:
        candidate_ratios = np.linspace(0.05, 0.8, 16)
    if violation_threshold is None:
        violation_threshold = max(1, len(reports) // 10)
    xs = np.array([r.x for r in reports])
    best = None
    for ratio in candidate_ratios:
        w = WeightSet.geometric(float(ratio))
        e = np.array([rep.quasi_energy(w) for rep in reports]) * xs ** x_power
        viol = int(np.sum(np.diff(e) > 0.0))
        if best is None or viol < best[0]:
            best = (viol, w)
    viol, w = best
    return SigmaCalibration(weights=w, violations=viol,
                            monotone=viol <= violation_threshold, x_power=x_power)


def write_reports_csv(reports, path):
    """One CSV row per station, all functional values."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to write")
    names = list(reports[0].flat().keys())
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for rep in reports:
            row = rep.flat()
            fh.write(",".join(repr(float(row[n])) for n in names) + "\n")
