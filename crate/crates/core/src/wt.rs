//! Single-turbine DC-link voltage control (DVC) and PLL dynamics.
//!
//! Current control is treated as instantaneous, so the converter current
//! follows its dq references. States, in this order:
//!
//! | index | state | unit |
//! |-------|-------|------|
//! | 0 | DC-link voltage `U_dc` | p.u. |
//! | 1 | DVC integrator | p.u. s |
//! | 2 | PLL angle relative to the XY frame | rad |
//! | 3 | PLL integrator | p.u. s |
//!
//! The DVC loop is negative feedback: a rising `U_dc` raises `i_d`, which
//! raises the exported power and discharges the link.

use std::path::Path;

use nalgebra::{Complex, DMatrix, SMatrix, SVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::farm::{PerUnitBases, WtParams, C64};
use crate::powerflow::{newton_pq, operating_point_at, WtOperatingPoint, PF_MAX_ITER};

pub const N_STATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    DcVoltage,
    DvcIntegrator,
    PllAngle,
    PllIntegrator,
}

impl StateKind {
    pub const ALL: [StateKind; N_STATES] = [
        StateKind::DcVoltage,
        StateKind::DvcIntegrator,
        StateKind::PllAngle,
        StateKind::PllIntegrator,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn short(self) -> &'static str {
        match self {
            StateKind::DcVoltage => "u_dc",
            StateKind::DvcIntegrator => "x_dvc",
            StateKind::PllAngle => "delta",
            StateKind::PllIntegrator => "x_pll",
        }
    }
}

impl std::str::FromStr for StateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StateKind::ALL
            .into_iter()
            .find(|k| k.short() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown state kind {s}")))
    }
}

/// Linearized turbine: `dx = a x + b du_xy`, `di_xy = c x + d du_xy`.
///
/// `b` and `c` act on network quantities in system per unit; `c` carries
/// the turbine's rating ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct WtStateSpace {
    pub a: SMatrix<f64, 4, 4>,
    pub b: SMatrix<f64, 4, 2>,
    pub c: SMatrix<f64, 2, 4>,
    pub d: SMatrix<f64, 2, 2>,
}

/// `C U_dc0` in per-unit seconds.
pub fn effective_capacitance(wt: &WtParams, bases: &PerUnitBases) -> f64 {
    wt.c_pu(bases) * wt.u_dc0_pu
}

pub fn linearize_wt(wt: &WtParams, op: &WtOperatingPoint, bases: &PerUnitBases) -> WtStateSpace {
    let cp = effective_capacitance(wt, bases);
    let m = wt.scale(bases);
    let (s, c) = op.delta0.sin_cos();
    let (ud, id) = (op.u_d0, op.i_d0);
    let (kp, ki) = (wt.kp_dvc_pu, wt.ki_dvc_pu);
    let (kpp, kip) = (wt.kp_pll_pu, wt.ki_pll_pu);

    // du_dq = dT u_xy0 + T0 du_xy, and dT u_xy0 = [u_q0, -u_d0] ddelta
    // with u_q0 = 0. The T0 rows are [c, s] and [-s, c].
    #[rustfmt::skip]
    let a = SMatrix::<f64, 4, 4>::new(
        -ud * kp / cp, -ud * ki / cp, 0.0,        0.0,
        1.0,           0.0,           0.0,        0.0,
        0.0,           0.0,           -kpp * ud,  kip,
        0.0,           0.0,           -ud,        0.0,
    );
    #[rustfmt::skip]
    let b = SMatrix::<f64, 4, 2>::new(
        -id * c / cp, -id * s / cp,
        0.0,          0.0,
        -kpp * s,     kpp * c,
        -s,           c,
    );
    // di_xy = dT^T i_dq0 + T0^T [di_d, 0]
    #[rustfmt::skip]
    let cm = SMatrix::<f64, 2, 4>::new(
        kp * c, ki * c, -s * id, 0.0,
        kp * s, ki * s,  c * id, 0.0,
    ) * m;
    WtStateSpace {
        a,
        b,
        c: cm,
        d: SMatrix::zeros(),
    }
}

/// Closed-form DVC eigenvalues with the terminal voltage held fixed.
///
/// Returns the upper-half-plane member of the pair when oscillatory; for an
/// overdamped loop the two real roots are returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DvcMode {
    Oscillatory(C64),
    Overdamped(f64, f64),
}

impl DvcMode {
    pub fn pair(self) -> [C64; 2] {
        match self {
            DvcMode::Oscillatory(l) => [l, l.conj()],
            DvcMode::Overdamped(a, b) => [C64::new(a, 0.0), C64::new(b, 0.0)],
        }
    }
}

pub fn stiff_grid_mode(wt: &WtParams, op: &WtOperatingPoint, bases: &PerUnitBases) -> DvcMode {
    let cp = effective_capacitance(wt, bases);
    let (kp, ki, ud) = (wt.kp_dvc_pu, wt.ki_dvc_pu, op.u_d0);
    let disc = 4.0 * cp * ki * ud - kp * kp * ud * ud;
    let re = -kp * ud / (2.0 * cp);
    if disc > 0.0 {
        DvcMode::Oscillatory(Complex::new(re, disc.sqrt() / (2.0 * cp)))
    } else {
        let r = (-disc).sqrt() / (2.0 * cp);
        DvcMode::Overdamped(re + r, re - r)
    }
}

/// Nonlinear turbine model around a supplied equilibrium.
#[derive(Debug, Clone)]
pub struct WtNonlinear {
    pub p_m: f64,
    pub c_pu: f64,
    pub u_dc_ref: f64,
    pub kp_dvc: f64,
    pub ki_dvc: f64,
    pub kp_pll: f64,
    pub ki_pll: f64,
    pub scale: f64,
}

impl WtNonlinear {
    pub fn new(wt: &WtParams, bases: &PerUnitBases) -> Self {
        WtNonlinear {
            p_m: wt.p_m0_pu,
            c_pu: wt.c_pu(bases),
            u_dc_ref: wt.u_dc0_pu,
            kp_dvc: wt.kp_dvc_pu,
            ki_dvc: wt.ki_dvc_pu,
            kp_pll: wt.kp_pll_pu,
            ki_pll: wt.ki_pll_pu,
            scale: wt.scale(bases),
        }
    }

    /// Equilibrium state for an operating point.
    pub fn equilibrium(&self, op: &WtOperatingPoint) -> SVector<f64, 4> {
        SVector::<f64, 4>::new(self.u_dc_ref, op.i_d0 / self.ki_dvc, op.delta0, 0.0)
    }

    pub fn i_dq(&self, x: &SVector<f64, 4>) -> (f64, f64) {
        (self.kp_dvc * (x[0] - self.u_dc_ref) + self.ki_dvc * x[1], 0.0)
    }

    pub fn u_dq(x: &SVector<f64, 4>, u_xy: [f64; 2]) -> (f64, f64) {
        let (s, c) = x[2].sin_cos();
        (c * u_xy[0] + s * u_xy[1], -s * u_xy[0] + c * u_xy[1])
    }

    /// Injected current in the XY frame on the system base.
    pub fn output(&self, x: &SVector<f64, 4>) -> [f64; 2] {
        let (id, iq) = self.i_dq(x);
        let (s, c) = x[2].sin_cos();
        [
            self.scale * (c * id - s * iq),
            self.scale * (s * id + c * iq),
        ]
    }

    pub fn rhs(&self, x: &SVector<f64, 4>, u_xy: [f64; 2]) -> SVector<f64, 4> {
        let (id, iq) = self.i_dq(x);
        let (ud, uq) = Self::u_dq(x, u_xy);
        let p_e = ud * id + uq * iq;
        SVector::<f64, 4>::new(
            (self.p_m - p_e) / (self.c_pu * x[0]),
            x[0] - self.u_dc_ref,
            self.kp_pll * uq + self.ki_pll * x[3],
            uq,
        )
    }
}

/// Thevenin source seen by an isolated turbine (system per unit).
#[derive(Debug, Clone, Copy)]
pub struct TheveninSource {
    pub z: C64,
    pub e: f64,
}

/// Step reduction of the source magnitude by `fraction` at `start`.
#[derive(Debug, Clone, Copy)]
pub struct Sag {
    pub fraction: f64,
    pub start: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WtTrajectory {
    pub t: Vec<f64>,
    pub u_dc: Vec<f64>,
    pub delta: Vec<f64>,
    pub i_d: Vec<f64>,
    pub i_q: Vec<f64>,
    pub u_d: Vec<f64>,
    pub u_q: Vec<f64>,
    pub p_e: Vec<f64>,
}

impl WtTrajectory {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "u_dc", "delta", "i_d", "i_q", "u_d", "u_q", "p_e"])?;
        for k in 0..self.t.len() {
            let row = [
                self.t[k], self.u_dc[k], self.delta[k], self.i_d[k], self.i_q[k], self.u_d[k],
                self.u_q[k], self.p_e[k],
            ];
            w.write_record(row.iter().map(|v| format!("{v:.12e}")))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Steady state of a single turbine behind a Thevenin source.
pub fn single_wt_operating_point(
    wt: &WtParams,
    grid: &TheveninSource,
    bases: &PerUnitBases,
) -> Result<WtOperatingPoint> {
    let e = C64::new(grid.e, 0.0);
    if grid.z.norm() == 0.0 {
        return operating_point_at(e, wt, bases);
    }
    let adm = grid.z.inv();
    let y = DMatrix::from_element(1, 1, adm);
    let s = [C64::new(wt.p_m0_pu * wt.scale(bases), 0.0)];
    let out = newton_pq(&y, &[-adm], e, &s, 1e-11, PF_MAX_ITER)?;
    operating_point_at(out.voltage[0], wt, bases)
}

fn terminal_voltage(model: &WtNonlinear, x: &SVector<f64, 4>, grid: &TheveninSource, e: f64) -> [f64; 2] {
    let i = model.output(x);
    let (r, xg) = (grid.z.re, grid.z.im);
    [e + r * i[0] - xg * i[1], xg * i[0] + r * i[1]]
}

/// Integrates the nonlinear turbine connected to a Thevenin source with
/// fixed-step RK4. The terminal voltage is explicit in the states because
/// the converter current depends on states only.
pub fn simulate_wt_nonlinear(
    wt: &WtParams,
    grid: &TheveninSource,
    sag: &Sag,
    horizon: f64,
    dt: f64,
    bases: &PerUnitBases,
) -> Result<WtTrajectory> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::InvalidArgument("dt must be positive and horizon non-negative".into()));
    }
    let model = WtNonlinear::new(wt, bases);
    let op = single_wt_operating_point(wt, grid, bases)?;
    let mut x = model.equilibrium(&op);
    let steps = (horizon / dt).round() as usize;
    let source = |t: f64| {
        if t >= sag.start - 1e-12 {
            grid.e * (1.0 - sag.fraction)
        } else {
            grid.e
        }
    };

    let mut traj = WtTrajectory {
        t: Vec::with_capacity(steps + 1),
        u_dc: Vec::with_capacity(steps + 1),
        delta: Vec::with_capacity(steps + 1),
        i_d: Vec::with_capacity(steps + 1),
        i_q: Vec::with_capacity(steps + 1),
        u_d: Vec::with_capacity(steps + 1),
        u_q: Vec::with_capacity(steps + 1),
        p_e: Vec::with_capacity(steps + 1),
    };
    let record = |traj: &mut WtTrajectory, t: f64, x: &SVector<f64, 4>, e: f64| {
        let (id, iq) = model.i_dq(x);
        let (ud, uq) = WtNonlinear::u_dq(x, terminal_voltage(&model, x, grid, e));
        traj.t.push(t);
        traj.u_dc.push(x[0]);
        traj.delta.push(x[2]);
        traj.i_d.push(id);
        traj.i_q.push(iq);
        traj.u_d.push(ud);
        traj.u_q.push(uq);
        traj.p_e.push(ud * id + uq * iq);
    };
    record(&mut traj, 0.0, &x, source(0.0));
    let f = |x: &SVector<f64, 4>, e: f64| model.rhs(x, terminal_voltage(&model, x, grid, e));
    for k in 0..steps {
        let t = k as f64 * dt;
        // the source is piecewise constant over each step
        let e = source(t);
        let k1 = f(&x, e);
        let k2 = f(&(x + k1 * (dt / 2.0)), e);
        let k3 = f(&(x + k2 * (dt / 2.0)), e);
        let k4 = f(&(x + k3 * dt), e);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !x.iter().all(|v| v.is_finite()) || x[0] <= 0.0 {
            return Err(Error::Nonphysical(format!(
                "turbine {} left the physical region at t = {:.4} s",
                wt.id,
                t + dt
            )));
        }
        let t1 = (k + 1) as f64 * dt;
        record(&mut traj, t1, &x, source(t1));
    }
    Ok(traj)
}
