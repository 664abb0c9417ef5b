"""Integrated antibody manufacturing environment.

Upstream, a perfusion bioreactor with cell-retention recycle produces a
harvest stream whose antibody content feeds the downstream capture step.
Downstream, two protein-A columns alternate: one loads from the harvest
while the other is eluted through a virus-inactivation loop, a
cation-exchange column, a holdup loop and a flow-through anion-exchange
column.  Loading and purification phases have equal length, so the capture
step runs continuously.

Action (9): the seven upstream inputs, the elution pump velocity (capture
column + VI loop) and the polish pump velocity (CEX + holdup loop + AEX),
both in cm/min.  Reward: antibody mass flow leaving the bioreactor and
separator, scaled to keep step rewards O(1); it is nonnegative, so the
error reward is strictly below anything an episode can earn.

The downstream is integrated with one-minute operator splitting: within a
slice each unit sees its upstream neighbour's outlet frozen, and every unit
advances with a stability-limited positive-preserving step.  Unit-level
mass audits are exact (see the column kernels); the splitting only affects
the coupling resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ...kernels import SpatialGrid
from ...spaces import ContinuousSpace
from ..base import ProcessEnv, deep_merge
from .columns import (
    CaptureParams,
    ExchangeParams,
    LoadingStepper,
    LoopParams,
    aex_params,
    capture_elution_params,
    cex_params,
    exchange_rhs,
    integrate_fields,
    loop_rhs,
)
from .schedule import TwinColumnSchedule, twin_column_tick
from .upstream import (
    N_INPUTS,
    N_STATES,
    UpstreamParams,
    economic_objective,
    upstream_rhs,
)


@dataclass
class ColumnState:
    """One capture column; carries both mode field sets (inactive one zero)."""

    mode: str                 # "loading" or "purify"
    c: np.ndarray             # mobile phase during loading (nz,)
    c_p: np.ndarray           # pore liquid (nz, nr)
    q1: np.ndarray            # fast-site adsorbed (nz,)
    q2: np.ndarray            # slow-site adsorbed (nz,)
    c_elu: np.ndarray         # mobile phase during elution (nz,)
    q_elu: np.ndarray         # adsorbed phase during elution (nz,)
    cs_elu: np.ndarray        # modifier during elution (nz,)

    def flat(self) -> np.ndarray:
        return np.concatenate(
            [self.c, self.c_p.ravel(), self.q1, self.q2,
             self.c_elu, self.q_elu, self.cs_elu]
        )


@dataclass
class MabState:
    upstream: np.ndarray
    columns: list[ColumnState]
    loop_vi: np.ndarray
    cex_c: np.ndarray
    cex_q: np.ndarray
    cex_cs: np.ndarray
    loop_hold: np.ndarray
    aex_c: np.ndarray
    aex_q: np.ndarray
    aex_cs: np.ndarray
    schedule: TwinColumnSchedule
    product_mg: float = 0.0


DEFAULT_CONFIG: dict = {
    "params": {},          # UpstreamParams overrides
    "capture": {},         # CaptureParams overrides
    "elution": {},         # ExchangeParams overrides for capture elution
    "cex": {},             # ExchangeParams overrides for cation exchange
    "aex": {},             # ExchangeParams overrides for anion exchange
    "loop": {},            # LoopParams overrides (both holdup loops)
    "max_steps": 200,
    "error_reward": -100.0,
    "step_hours": 1.0,
    "slice_minutes": 1.0,  # operator-splitting slice inside one step
    "grids": {
        "capture_axial": 30,
        "capture_radial": 8,
        "loop_axial": 40,
        "polish_axial": 20,
    },
    "schedule_minutes": 240.0,
    "elution_modifier_in": 0.1,  # M
    "cex_modifier_in": 0.5,
    "aex_modifier_in": 0.5,
    "modifier_floor": 1e-3,
    "reward_scale": 1e-3,
    "literal_gln_recycle": False,
    "literal_adsorption_sign": False,
    # per-step capture/elution/polish outlet log for breakthrough curves
    "log_breakthrough": False,
    "action_low": [0.0, 0.0, 0.0, 0.0, 33.0, 0.0, 0.0, 0.0, 0.0],
    "action_high": [0.2, 0.5, 0.5, 0.2, 37.0, 100.0, 10.0, 10.0, 10.0],
    "upstream_low": [100.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 33.0,
                     10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    "upstream_high": [2000.0, 5e10, 1e11, 100.0, 50.0, 500.0, 50.0, 5000.0, 37.0,
                      500.0, 5e10, 1e11, 100.0, 50.0, 500.0, 50.0, 5000.0],
    "initial_upstream": [500.0, 5e9, 5.5e9, 25.0, 4.0, 1.0, 0.5, 150.0, 36.5,
                         50.0, 1e9, 1.1e9, 20.0, 3.0, 1.0, 0.5, 300.0],
    "init_rel": 0.1,
    "init_temp_range": [36.0, 37.0],
}

# indices of the two pump velocities in the 9-dim action
IDX_V_ELU = 7
IDX_V_POL = 8


class MabEnv(ProcessEnv):
    name = "mab"

    def __init__(self, config: dict | None = None):
        cfg = deep_merge(DEFAULT_CONFIG, config)
        self.params = UpstreamParams(**cfg["params"])
        self.capture = CaptureParams(**cfg["capture"])
        self.elu = replace(capture_elution_params(self.capture), **cfg["elution"])
        self.cex = replace(cex_params(), **cfg["cex"])
        self.aex = replace(aex_params(), **cfg["aex"])
        self.loop = replace(LoopParams(), **cfg["loop"])
        g = cfg["grids"]
        self.cap_grid = SpatialGrid(
            int(g["capture_axial"]), self.capture.length,
            n_radial=int(g["capture_radial"]), volume=self.capture.volume,
        )
        self.loop_grid = SpatialGrid(
            int(g["loop_axial"]), self.loop.length, volume=self.loop.volume
        )
        self.pol_grid = SpatialGrid(
            int(g["polish_axial"]), self.cex.length, volume=self.cex.volume
        )
        self._load_stepper = LoadingStepper(self.capture, self.cap_grid)
        self.step_hours = float(cfg["step_hours"])
        self.slice_minutes = float(cfg["slice_minutes"])
        self.schedule_minutes = float(cfg["schedule_minutes"])
        self.cs_elu_in = float(cfg["elution_modifier_in"])
        self.cs_cex_in = float(cfg["cex_modifier_in"])
        self.cs_aex_in = float(cfg["aex_modifier_in"])
        self.cs_floor = float(cfg["modifier_floor"])
        self.reward_scale = float(cfg["reward_scale"])
        self.literal_gln_recycle = bool(cfg["literal_gln_recycle"])
        self.literal_adsorption_sign = bool(cfg["literal_adsorption_sign"])
        self.log_breakthrough = bool(cfg["log_breakthrough"])
        self.breakthrough_log: list[tuple] = []
        self.initial_upstream = np.asarray(cfg["initial_upstream"], float)
        self.init_rel = float(cfg["init_rel"])
        self.init_temp_range = tuple(cfg["init_temp_range"])

        self.upstream_box = ContinuousSpace(
            np.asarray(cfg["upstream_low"], float),
            np.asarray(cfg["upstream_high"], float),
        )
        template = self._blank_state(self.initial_upstream)
        o_dim = self._observe(template).size
        obs_low = np.full(o_dim, -np.inf)
        obs_high = np.full(o_dim, np.inf)
        obs_low[:N_STATES] = self.upstream_box.low
        obs_high[:N_STATES] = self.upstream_box.high
        super().__init__(
            max_steps=cfg["max_steps"],
            error_reward=cfg["error_reward"],
            action_space=ContinuousSpace(
                np.asarray(cfg["action_low"], float),
                np.asarray(cfg["action_high"], float),
            ),
            observation_space=ContinuousSpace(obs_low, obs_high),
            state_box=self.upstream_box,  # applies to the upstream block
            state_box_tol=1e-9,
        )

    # -- state plumbing ----------------------------------------------------

    def _blank_column(self, mode: str) -> ColumnState:
        nz, nr = self.cap_grid.n_axial, self.cap_grid.n_radial
        return ColumnState(
            mode=mode,
            c=np.zeros(nz),
            c_p=np.zeros((nz, nr)),
            q1=np.zeros(nz),
            q2=np.zeros(nz),
            c_elu=np.zeros(nz),
            q_elu=np.zeros(nz),
            cs_elu=np.full(nz, self.cs_floor),
        )

    def _blank_state(self, upstream: np.ndarray) -> MabState:
        n_loop, n_pol = self.loop_grid.n_axial, self.pol_grid.n_axial
        return MabState(
            upstream=np.asarray(upstream, float).copy(),
            columns=[self._blank_column("loading"), self._blank_column("purify")],
            loop_vi=np.zeros(n_loop),
            cex_c=np.zeros(n_pol),
            cex_q=np.zeros(n_pol),
            cex_cs=np.full(n_pol, self.cs_cex_in),
            loop_hold=np.zeros(n_loop),
            aex_c=np.zeros(n_pol),
            aex_q=np.zeros(n_pol),
            aex_cs=np.full(n_pol, self.cs_aex_in),
            schedule=TwinColumnSchedule(load_duration=self.schedule_minutes),
            product_mg=0.0,
        )

    def _draw_initial_state(self, rng: np.random.Generator) -> MabState:
        self.breakthrough_log = []
        x = self.initial_upstream.copy()
        jitter = rng.uniform(1.0 - self.init_rel, 1.0 + self.init_rel, size=N_STATES)
        x = x * jitter
        # total cells must dominate viable cells; temperature has its own band
        x[2] = x[1] * rng.uniform(1.05, 1.15)
        x[11] = x[10] * rng.uniform(1.05, 1.15)
        x[8] = rng.uniform(*self.init_temp_range)
        x = self.upstream_box.clip(x)
        return self._blank_state(x)

    # -- physics -----------------------------------------------------------

    def _upstream_deriv(self, action7):
        def deriv(fields):
            return [
                upstream_rhs(
                    fields[0], action7, self.params,
                    strict=False,
                    literal_gln_recycle=self.literal_gln_recycle,
                )
            ]
        return deriv

    def _upstream_h0(self, x: np.ndarray) -> float:
        """Stability-limited substep for the nutrient-uptake stiffness.

        Near depletion the Monod terms steepen to slope 1/K, so the fastest
        local rate scales with mu_max * Xv / (K * yield)."""
        p = self.params
        xv = max(float(x[1]), 1.0)
        mu_max = 0.0016 * float(x[8]) - 0.0308
        lam = mu_max * xv * (
            1.0 / (p.k_glc * p.y_x_glc) + 1.0 / (p.k_gln * p.y_x_gln)
        ) + p.alpha1 * xv / p.alpha2 / p.k_gln
        return 2.0 / max(lam, 2.0)

    def _loading_h0(self, v: float) -> float:
        p, grid = self.capture, self.cap_grid
        dr = p.r_p / grid.n_radial
        k_f = p.k_f_coeff * v**p.k_f_exp if v > 0.0 else 0.0
        lam = (
            4.2 * p.d_eff / dr**2
            + 2.0 * p.d_ax_factor * v / grid.dz**2
            + v / (p.eps_c * grid.dz)
            + 3.0 * (1.0 - p.eps_c) * k_f / (p.eps_c * p.r_p)
            + p.k_1 * (p.q_max1 + 1.0 / p.k_eq)
            + p.k_2 * (p.q_max2 + 1.0 / p.k_eq)
        )
        return 2.6 / max(lam, 1e-9)

    def _exchange_h0(self, p: ExchangeParams, grid: SpatialGrid, v: float,
                     cs_min: float, c_scale: float) -> float:
        lam = 2.0 * p.d_ax_factor * v / grid.dz**2 + v / (p.eps_total * grid.dz)
        if p.k_kin > 0.0:
            henry = p.h_0 * max(cs_min, 1e-12) ** (-p.beta)
            lam += p.k_kin * (1.0 + henry * (1.0 + c_scale / p.q_max))
        return 2.0 / max(lam, 1e-9)

    def _loop_h0(self, v: float) -> float:
        grid = self.loop_grid
        lam = 2.0 * self.loop.d_ax_factor * v / grid.dz**2 + v / grid.dz
        return 2.0 / max(lam, 1e-9)

    def _advance(self, state: MabState, action) -> MabState:
        action = np.asarray(action, float)
        u7 = action[:N_INPUTS]
        v_elu = float(action[IDX_V_ELU])
        v_pol = float(action[IDX_V_POL])
        dt = self.slice_minutes
        n_slices = int(round(self.step_hours * 60.0 / dt))

        s = MabState(
            upstream=state.upstream.copy(),
            columns=[replace(c) for c in state.columns],
            loop_vi=state.loop_vi.copy(),
            cex_c=state.cex_c.copy(),
            cex_q=state.cex_q.copy(),
            cex_cs=state.cex_cs.copy(),
            loop_hold=state.loop_hold.copy(),
            aex_c=state.aex_c.copy(),
            aex_q=state.aex_q.copy(),
            aex_cs=state.aex_cs.copy(),
            schedule=state.schedule,
            product_mg=state.product_mg,
        )
        up_deriv = self._upstream_deriv(u7)
        q_elu = v_elu * self.capture.area          # mL/min through the elution train
        q_pol = v_pol * self.cex.area              # mL/min through the polish train
        v_loop_vi = q_elu / self.loop.area
        v_loop_hold = q_pol / self.loop.area

        for _ in range(n_slices):
            # upstream slice
            s.upstream = integrate_fields(
                up_deriv, [s.upstream], dt, self._upstream_h0(s.upstream)
            )[0]

            # loading column fed by the separator harvest
            f_2 = u7[3]                            # L/min
            v_load = f_2 * 1000.0 / self.capture.area
            c_feed = s.upstream[16] * 1e-3         # mg/L -> mg/mL
            loader = s.columns[s.schedule.loading_column]
            if v_load > 0.0:
                loader.c, loader.c_p, loader.q1, loader.q2 = self._load_stepper.advance(
                    loader.c, loader.c_p, loader.q1, loader.q2,
                    v_load, c_feed, dt, self._loading_h0(v_load),
                )

            # purification train, one unit at a time with frozen inlets
            purifier = s.columns[1 - s.schedule.loading_column]
            if v_elu > 0.0:
                def elu_deriv(fields):
                    return list(
                        exchange_rhs(
                            fields[0], fields[1], fields[2], v_elu,
                            0.0, self.cs_elu_in, self.elu, self.cap_grid,
                            self.literal_adsorption_sign,
                        )
                    )
                cs_min = float(purifier.cs_elu.min())
                out = integrate_fields(
                    elu_deriv,
                    [purifier.c_elu, purifier.q_elu, purifier.cs_elu],
                    dt,
                    self._exchange_h0(self.elu, self.cap_grid, v_elu, cs_min, 10.0),
                    floors=[0.0, 0.0, self.cs_floor],
                )
                purifier.c_elu, purifier.q_elu, purifier.cs_elu = out

                vi_inlet = float(purifier.c_elu[-1])
                s.loop_vi = integrate_fields(
                    lambda f: [loop_rhs(f[0], v_loop_vi, vi_inlet, self.loop, self.loop_grid)],
                    [s.loop_vi], dt, self._loop_h0(v_loop_vi),
                )[0]

            if v_pol > 0.0:
                # flow-matching joint: mass flux from the VI loop is preserved
                cex_inlet = float(s.loop_vi[-1]) * (q_elu / q_pol) if q_pol > 0 else 0.0

                def cex_deriv(fields):
                    return list(
                        exchange_rhs(
                            fields[0], fields[1], fields[2], v_pol,
                            cex_inlet, self.cs_cex_in, self.cex, self.pol_grid,
                            self.literal_adsorption_sign,
                        )
                    )
                cs_min = float(s.cex_cs.min())
                out = integrate_fields(
                    cex_deriv,
                    [s.cex_c, s.cex_q, s.cex_cs], dt,
                    self._exchange_h0(self.cex, self.pol_grid, v_pol, cs_min, 5.0),
                    floors=[0.0, 0.0, self.cs_floor],
                )
                s.cex_c, s.cex_q, s.cex_cs = out

                hold_inlet = float(s.cex_c[-1])
                s.loop_hold = integrate_fields(
                    lambda f: [loop_rhs(f[0], v_loop_hold, hold_inlet, self.loop, self.loop_grid)],
                    [s.loop_hold], dt, self._loop_h0(v_loop_hold),
                )[0]

                aex_inlet = float(s.loop_hold[-1])

                def aex_deriv(fields):
                    return list(
                        exchange_rhs(
                            fields[0], fields[1], fields[2], v_pol,
                            aex_inlet, self.cs_aex_in, self.aex, self.pol_grid,
                            self.literal_adsorption_sign,
                        )
                    )
                out = integrate_fields(
                    aex_deriv,
                    [s.aex_c, s.aex_q, s.aex_cs], dt,
                    self._exchange_h0(self.aex, self.pol_grid, v_pol, 1.0, 5.0),
                    floors=[0.0, 0.0, self.cs_floor],
                )
                s.aex_c, s.aex_q, s.aex_cs = out
                s.product_mg += q_pol * float(s.aex_c[-1]) * dt

            s.schedule, swaps = twin_column_tick(s.schedule, dt)
            for _ in range(swaps):
                self._swap_roles(s)
        if self.log_breakthrough:
            loader = s.columns[s.schedule.loading_column]
            purifier = s.columns[1 - s.schedule.loading_column]
            self.breakthrough_log.append(
                (
                    len(self.breakthrough_log),
                    float(loader.c[-1]),
                    float(purifier.c_elu[-1]),
                    float(s.aex_c[-1]),
                    float(s.product_mg),
                )
            )
        return s

    def _swap_roles(self, s: MabState) -> None:
        """Loading column moves to elution with its adsorbed inventory; the
        emptied column starts loading fresh."""
        old_loader = s.columns[1 - s.schedule.loading_column]
        new_loader = s.columns[s.schedule.loading_column]
        old_loader.mode = "purify"
        old_loader.q_elu = np.minimum(old_loader.q1 + old_loader.q2, self.elu.q_max)
        old_loader.c_elu = old_loader.c.copy()
        old_loader.cs_elu = np.full(self.cap_grid.n_axial, self.cs_floor)
        old_loader.c = np.zeros_like(old_loader.c)
        old_loader.c_p = np.zeros_like(old_loader.c_p)
        old_loader.q1 = np.zeros_like(old_loader.q1)
        old_loader.q2 = np.zeros_like(old_loader.q2)
        new_loader.mode = "loading"
        new_loader.c_elu = np.zeros_like(new_loader.c_elu)
        new_loader.q_elu = np.zeros_like(new_loader.q_elu)
        new_loader.cs_elu = np.full(self.cap_grid.n_axial, self.cs_floor)

    # -- episode hooks -------------------------------------------------------

    def _state_valid(self, state: MabState) -> bool:
        if not np.all(np.isfinite(state.upstream)):
            return False
        if not self.upstream_box.contains(state.upstream, tol=self._state_box_tol):
            return False
        for col in state.columns:
            if not all(
                np.all(np.isfinite(a))
                for a in (col.c, col.c_p, col.q1, col.q2, col.c_elu, col.q_elu, col.cs_elu)
            ):
                return False
        return all(
            np.all(np.isfinite(a))
            for a in (
                state.loop_vi, state.cex_c, state.cex_q, state.cex_cs,
                state.loop_hold, state.aex_c, state.aex_q, state.aex_cs,
            )
        )

    def _observe(self, state: MabState) -> np.ndarray:
        sched = np.array(
            [state.schedule.clock / state.schedule.load_duration,
             float(state.schedule.loading_column)]
        )
        return np.concatenate(
            [state.upstream]
            + [col.flat() for col in state.columns]
            + [
                state.loop_vi, state.cex_c, state.cex_q, state.cex_cs,
                state.loop_hold, state.aex_c, state.aex_q, state.aex_cs,
                sched,
            ]
        )

    def _reward(self, prev_state, action, state: MabState):
        value = economic_objective(state.upstream, np.asarray(action, float))
        return self.reward_scale * float(value), False

    def reward_floor(self) -> float:
        return 0.0  # flows and concentrations are nonnegative

    # -- inspection ----------------------------------------------------------

    @property
    def product_recovered_mg(self) -> float:
        return float(self.state.product_mg)

    def write_breakthrough_csv(self, path) -> None:
        """Dump the per-step outlet log (enable ``log_breakthrough``)."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("step,load_outlet,elution_outlet,polish_outlet,product_mg\n")
            for row in self.breakthrough_log:
                fh.write(",".join(str(v) for v in row) + "\n")

    def write_field_csv(self, path) -> None:
        """Dump the current column axial profiles for breakthrough inspection."""
        s = self.state
        rows = []
        for idx, col in enumerate(s.columns):
            for j in range(self.cap_grid.n_axial):
                rows.append(
                    (f"capture{idx}", j, col.c[j], col.q1[j], col.q2[j],
                     col.c_elu[j], col.q_elu[j], col.cs_elu[j])
                )
        for j in range(self.pol_grid.n_axial):
            rows.append(("cex", j, s.cex_c[j], s.cex_q[j], s.cex_cs[j], "", "", ""))
            rows.append(("aex", j, s.aex_c[j], s.aex_q[j], s.aex_cs[j], "", "", ""))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("unit,node,c,q1_or_q,q2_or_cs,c_elu,q_elu,cs_elu\n")
            for row in rows:
                fh.write(",".join(str(v) for v in row) + "\n")
