"""Chromatography column and holdup-loop transport kernels.

Loading of the capture column follows a general rate model: axial
convection-dispersion in the mobile phase, film mass transfer to the bead
surface, pore diffusion in spherical coordinates, and two-site adsorption
(one fast, one slow site).  Elution, cation-exchange and anion-exchange
share a lumped convective-dispersive-adsorption model whose isotherm
strength scales with a modifier (salt) concentration; anion exchange runs
flow-through (zero kinetic constant).  Holdup loops are plain open-tube
dispersive-convective transport.

All stencils are written in flux (finite-volume) form, so the discrete
column inventory changes only through the inlet/outlet fluxes; the mass
audits in the test suite rely on that.

Unit conventions follow the parameter tables: lengths cm, volumes mL,
velocities cm/min, concentrations mg/mL, modifier M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ...errors import NonFiniteStateError, ZeroModifierError
from ...kernels import SpatialGrid, central_dispersion, upwind_convection


@dataclass(frozen=True)
class CaptureParams:
    """Protein-A capture column (loading mode)."""

    q_max1: float = 36.45      # mg/mL, fast site capacity
    k_1: float = 0.704         # mL/(mg min)
    q_max2: float = 77.85      # mg/mL, slow site capacity
    k_2: float = 2.1e-2        # mL/(mg min)
    k_eq: float = 15.3         # mL/mg, adsorption equilibrium constant
    d_eff: float = 7.6e-5      # cm^2/min, pore diffusivity
    d_ax_factor: float = 0.55  # D_ax = factor * v (cm^2/min per cm/min)
    k_f_coeff: float = 0.067   # k_f = coeff * v^exp (cm/min)
    k_f_exp: float = 0.58
    r_p: float = 4.25e-3       # cm, bead radius
    length: float = 20.0       # cm
    volume: float = 1.0e5      # mL
    eps_c: float = 0.31        # extra-particle void
    eps_p: float = 0.94        # particle porosity

    @property
    def area(self) -> float:
        return self.volume / self.length


@dataclass(frozen=True)
class ExchangeParams:
    """Lumped adsorption column (capture elution, CEX, AEX).

    ``eps_total`` is the void the interstitial velocity sees; for the
    packed-bead capture column it includes the particle pores, for the
    exchange columns only the extra-particle void is tabulated.
    """

    q_max: float
    k_kin: float               # 1/min; zero means flow-through
    h_0: float                 # M^beta, modifier-scaled Henry coefficient
    beta: float
    d_ax_factor: float
    length: float
    volume: float
    eps_c: float
    eps_total: float

    @property
    def area(self) -> float:
        return self.volume / self.length


@dataclass(frozen=True)
class LoopParams:
    """Open holdup loop for virus inactivation / pH conditioning."""

    d_ax_factor: float = 290.0
    length: float = 600.0      # cm
    volume: float = 5.0e5      # mL

    @property
    def area(self) -> float:
        return self.volume / self.length


def capture_elution_params(cap: CaptureParams | None = None) -> ExchangeParams:
    cap = cap or CaptureParams()
    return ExchangeParams(
        q_max=114.3,
        k_kin=0.64,
        h_0=2.2e-2,
        beta=0.2,
        d_ax_factor=cap.d_ax_factor,
        length=cap.length,
        volume=cap.volume,
        eps_c=cap.eps_c,
        eps_total=cap.eps_c + (1.0 - cap.eps_c) * cap.eps_p,
    )


def cex_params() -> ExchangeParams:
    return ExchangeParams(
        q_max=150.2, k_kin=0.99, h_0=6.9e-4, beta=8.5,
        d_ax_factor=0.11, length=10.0, volume=5.0e4,
        eps_c=0.34, eps_total=0.34,
    )


def aex_params() -> ExchangeParams:
    # flow-through polishing: nothing binds (k = 0)
    return ExchangeParams(
        q_max=150.2, k_kin=0.0, h_0=0.0, beta=0.0,
        d_ax_factor=0.16, length=10.0, volume=5.0e4,
        eps_c=0.34, eps_total=0.34,
    )


# -- capture (general rate model) ----------------------------------------


def radial_shell_volumes(p: CaptureParams, n_radial: int) -> np.ndarray:
    """Shell volumes (over 4*pi) of the uniform radial discretization."""
    faces = np.linspace(0.0, p.r_p, n_radial + 1)
    return np.diff(faces**3) / 3.0


def grm_loading_rhs(
    c: np.ndarray,
    c_p: np.ndarray,
    q1: np.ndarray,
    q2: np.ndarray,
    v: float,
    c_feed: float,
    p: CaptureParams,
    grid: SpatialGrid,
):
    """Time derivatives of (c, c_p, q1, q2) during loading.

    ``c`` is the mobile phase over axial nodes, ``c_p`` the pore liquid over
    (axial, radial) nodes, ``q1``/``q2`` the fast/slow adsorbed phases over
    axial nodes.  Film transfer couples the mobile phase to the outermost
    radial node; the adsorption sink is distributed uniformly over the bead.
    """
    if v < 0.0:
        raise ValueError("superficial velocity must be nonnegative")
    n_r = grid.n_radial
    d_ax = p.d_ax_factor * v
    k_f = p.k_f_coeff * v**p.k_f_exp if v > 0.0 else 0.0

    cp_surf = c_p[:, -1]
    film = k_f * (c - cp_surf)

    dc = (
        central_dispersion(grid, c, d_ax)
        + upwind_convection(grid, c, v / p.eps_c, c_feed)
        - ((1.0 - p.eps_c) / p.eps_c) * (3.0 / p.r_p) * film
    )

    dq1 = p.k_1 * ((p.q_max1 - q1) * cp_surf - q1 / p.k_eq)
    dq2 = p.k_2 * ((p.q_max2 - q2) * cp_surf - q2 / p.k_eq)

    # spherical finite-volume diffusion with the film flux at the surface
    dr = p.r_p / n_r
    faces = np.linspace(0.0, p.r_p, n_r + 1)
    shell_vol = np.diff(faces**3) / 3.0  # (n_r,)
    flux = np.zeros((grid.n_axial, n_r + 1))
    flux[:, 1:-1] = p.d_eff * faces[1:-1] ** 2 * np.diff(c_p, axis=1) / dr
    flux[:, -1] = p.r_p**2 * film
    d_cp = np.diff(flux, axis=1) / shell_vol - (dq1 + dq2)[:, None] / p.eps_p
    return dc, d_cp, dq1, dq2


def capture_holdup(
    c: np.ndarray,
    c_p: np.ndarray,
    q1: np.ndarray,
    q2: np.ndarray,
    p: CaptureParams,
    grid: SpatialGrid,
) -> float:
    """Total antibody mass (mg) held in the column.

    The conserved density implied by the loading equations is
    ``eps_c*c + (1-eps_c)*<c_p> + (1-eps_c)/eps_p * (q1+q2)``
    with <c_p> the bead-volume average.
    """
    shell_vol = radial_shell_volumes(p, grid.n_radial)
    cp_avg = (c_p * shell_vol).sum(axis=1) / shell_vol.sum()
    density = (
        p.eps_c * c
        + (1.0 - p.eps_c) * cp_avg
        + ((1.0 - p.eps_c) / p.eps_p) * (q1 + q2)
    )
    return float(density.sum() * grid.dz * p.area)


# -- elution / ion exchange ------------------------------------------------


def exchange_rhs(
    c: np.ndarray,
    q: np.ndarray,
    c_s: np.ndarray,
    v: float,
    inlet_c: float,
    inlet_cs: float,
    p: ExchangeParams,
    grid: SpatialGrid,
    literal_adsorption_sign: bool = False,
):
    """Time derivatives of (c, q, c_s) for the lumped adsorption model.

    The adsorbed-phase exchange enters the mobile phase with a minus sign
    (adsorption removes mass from the liquid); ``literal_adsorption_sign``
    restores the plus-sign variant.  Raises ``ZeroModifierError`` when the
    isotherm would be evaluated at a vanishing modifier level.
    """
    if v < 0.0:
        raise ValueError("superficial velocity must be nonnegative")
    d_ax = p.d_ax_factor * v
    if p.k_kin != 0.0:
        if np.any(c_s <= 1e-12):
            raise ZeroModifierError(
                "modifier concentration vanished where the isotherm is evaluated"
            )
        dq = p.k_kin * (p.h_0 * c_s ** (-p.beta) * (1.0 - q / p.q_max) * c - q)
    else:
        dq = np.zeros_like(q)

    sign = 1.0 if literal_adsorption_sign else -1.0
    dc = (
        central_dispersion(grid, c, d_ax)
        + upwind_convection(grid, c, v / p.eps_total, inlet_c)
        + sign * ((1.0 - p.eps_c) / p.eps_total) * dq
    )
    dcs = central_dispersion(grid, c_s, d_ax) + upwind_convection(
        grid, c_s, v / p.eps_total, inlet_cs
    )
    return dc, dq, dcs


def elution_rhs(
    c, q, c_s, v, inlet_c, inlet_cs, grid,
    p: ExchangeParams | None = None,
    literal_adsorption_sign: bool = False,
):
    """Capture-column elution derivatives (modifier-scaled isotherm)."""
    return exchange_rhs(
        c, q, c_s, v, inlet_c, inlet_cs, p or capture_elution_params(), grid,
        literal_adsorption_sign,
    )


def aex_rhs(c, q, c_s, v, inlet_c, inlet_cs, grid,
            p: ExchangeParams | None = None):
    """Anion-exchange (flow-through) derivatives: zero kinetic constant, so
    nothing binds and the adsorbed phase is frozen."""
    return exchange_rhs(c, q, c_s, v, inlet_c, inlet_cs, p or aex_params(), grid)


def exchange_holdup(
    c: np.ndarray, q: np.ndarray, p: ExchangeParams, grid: SpatialGrid
) -> float:
    """Mass (mg) held in a lumped-adsorption column."""
    density = p.eps_total * c + (1.0 - p.eps_c) * q
    return float(density.sum() * grid.dz * p.area)


# -- holdup loops ------------------------------------------------------------


def loop_rhs(
    c: np.ndarray, v: float, inlet: float, p: LoopParams, grid: SpatialGrid
) -> np.ndarray:
    """Open-tube dispersive-convective transport (no packing, no voidage)."""
    if v < 0.0:
        raise ValueError("velocity must be nonnegative")
    d_ax = p.d_ax_factor * v
    return central_dispersion(grid, c, d_ax) + upwind_convection(grid, c, v, inlet)


def loop_holdup(c: np.ndarray, p: LoopParams, grid: SpatialGrid) -> float:
    return float(np.sum(c) * grid.dz * p.area)


class LoadingStepper:
    """Fused RK4 march of the loading equations over one coupling slice.

    Numerically identical to RK4 over ``grm_loading_rhs`` (pinned by a
    test); exists because the pore-diffusion stability limit forces
    hundreds of substeps per minute of column time, which makes the
    per-call overhead of the composable kernel the dominant cost.
    Velocity and feed are frozen for the duration of one ``advance``.
    """

    def __init__(self, p: CaptureParams, grid: SpatialGrid):
        self.p = p
        self.grid = grid
        n_r = grid.n_radial
        dr = p.r_p / n_r
        faces = np.linspace(0.0, p.r_p, n_r + 1)
        shell_vol = np.diff(faces**3) / 3.0
        # diffusive flux across interior faces: coef * (cp[k] - cp[k-1])
        self.flux_coef = p.d_eff * faces[1:-1] ** 2 / dr          # (n_r-1,)
        self.inv_vol = 1.0 / shell_vol                            # (n_r,)
        self.surf_coef = p.r_p**2                                  # film flux area
        self.film_coef = (1.0 - p.eps_c) / p.eps_c * 3.0 / p.r_p
        self.inv_dz = 1.0 / grid.dz
        self.inv_eps_dz = 1.0 / (p.eps_c * grid.dz)

    def _deriv(self, c, cp, q1, q2, v, d_ax_dz2, k_f, c_feed):
        p = self.p
        cp_surf = cp[:, -1]
        film = k_f * (c - cp_surf)

        dc = np.empty_like(c)
        dc[0] = d_ax_dz2 * (c[1] - c[0]) - v * self.inv_eps_dz * (c[0] - c_feed)
        dc[-1] = d_ax_dz2 * (c[-2] - c[-1]) - v * self.inv_eps_dz * (c[-1] - c[-2])
        dc[1:-1] = d_ax_dz2 * (c[2:] - 2.0 * c[1:-1] + c[:-2]) - (
            v * self.inv_eps_dz
        ) * (c[1:-1] - c[:-2])
        dc -= self.film_coef * film

        dq1 = p.k_1 * ((p.q_max1 - q1) * cp_surf - q1 / p.k_eq)
        dq2 = p.k_2 * ((p.q_max2 - q2) * cp_surf - q2 / p.k_eq)

        flux = self.flux_coef * (cp[:, 1:] - cp[:, :-1])          # (nz, n_r-1)
        dcp = np.empty_like(cp)
        dcp[:, 0] = flux[:, 0] * self.inv_vol[0]
        dcp[:, 1:-1] = (flux[:, 1:] - flux[:, :-1]) * self.inv_vol[1:-1]
        dcp[:, -1] = (self.surf_coef * film - flux[:, -1]) * self.inv_vol[-1]
        dcp -= ((dq1 + dq2) / p.eps_p)[:, None]
        return dc, dcp, dq1, dq2

    def advance(self, c, cp, q1, q2, v, c_feed, dt, h):
        p = self.p
        d_ax_dz2 = p.d_ax_factor * v * self.inv_dz**2
        k_f = p.k_f_coeff * v**p.k_f_exp if v > 0.0 else 0.0
        c = c.copy()
        cp = cp.copy()
        q1 = q1.copy()
        q2 = q2.copy()
        n = max(1, int(np.ceil(dt / h)))
        h = dt / n
        half, sixth = 0.5 * h, h / 6.0
        for _ in range(n):
            a1 = self._deriv(c, cp, q1, q2, v, d_ax_dz2, k_f, c_feed)
            a2 = self._deriv(
                c + half * a1[0], cp + half * a1[1],
                q1 + half * a1[2], q2 + half * a1[3],
                v, d_ax_dz2, k_f, c_feed,
            )
            a3 = self._deriv(
                c + half * a2[0], cp + half * a2[1],
                q1 + half * a2[2], q2 + half * a2[3],
                v, d_ax_dz2, k_f, c_feed,
            )
            a4 = self._deriv(
                c + h * a3[0], cp + h * a3[1],
                q1 + h * a3[2], q2 + h * a3[3],
                v, d_ax_dz2, k_f, c_feed,
            )
            c = c + sixth * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
            cp = cp + sixth * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
            q1 = q1 + sixth * (a1[2] + 2.0 * a2[2] + 2.0 * a3[2] + a4[2])
            q2 = q2 + sixth * (a1[3] + 2.0 * a2[3] + 2.0 * a3[3] + a4[3])
        np.maximum(c, 0.0, out=c)
        np.maximum(cp, 0.0, out=cp)
        np.maximum(q1, 0.0, out=q1)
        np.maximum(q2, 0.0, out=q2)
        if not (
            np.all(np.isfinite(c)) and np.all(np.isfinite(cp))
            and np.all(np.isfinite(q1)) and np.all(np.isfinite(q2))
        ):
            raise NonFiniteStateError("loading column integration diverged")
        return c, cp, q1, q2


# -- adaptive positive-preserving integration -------------------------------


def integrate_fields(
    deriv,
    fields: list[np.ndarray],
    dt: float,
    h_start: float,
    floors: list[float] | None = None,
    max_halvings: int = 10,
):
    """Advance coupled fields by RK4 with a stability safety net.

    ``h_start`` should come from a stability estimate of the stiffest term;
    a candidate substep is rejected (and the substep halved, up to
    ``max_halvings`` times) only when it produces non-finite values or grows
    any field beyond ten times its previous scale, which is how an unstable
    explicit step announces itself.  ``floors`` clamps each field from below
    at every stage and accepted substep (0 keeps concentrations nonnegative;
    a modifier field uses its recipe floor so the isotherm never sees a
    vanishing salt level).  Accepted substeps let h grow back to ``h_start``.
    """
    if floors is None:
        floors = [0.0] * len(fields)
    y = [np.asarray(f, dtype=float).copy() for f in fields]
    t = 0.0
    h = min(h_start, dt)

    def clamped(arrs):
        return [np.maximum(a, lo) for a, lo in zip(arrs, floors)]

    while t < dt - 1e-12:
        h_try = min(h, dt - t)
        scales = [10.0 * (float(np.max(np.abs(a))) + 1.0) for a in y]
        halvings = 0
        while True:
            k1 = deriv(y)
            k2 = deriv(clamped([a + 0.5 * h_try * b for a, b in zip(y, k1)]))
            k3 = deriv(clamped([a + 0.5 * h_try * b for a, b in zip(y, k2)]))
            k4 = deriv(clamped([a + h_try * b for a, b in zip(y, k3)]))
            cand = [
                a + (h_try / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
            ]
            ok = all(
                np.all(np.isfinite(arr)) and float(np.max(np.abs(arr))) <= cap
                for arr, cap in zip(cand, scales)
            )
            if ok or halvings >= max_halvings:
                break
            h_try *= 0.5
            h = h_try
            halvings += 1
        cand = clamped(cand)
        if not all(np.all(np.isfinite(arr)) for arr in cand):
            raise NonFiniteStateError("field integration diverged")
        y = cand
        t += h_try
        h = min(h * 2.0, h_start)
    return y
