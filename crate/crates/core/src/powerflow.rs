//! Steady-state power flow: turbines are PQ injections at unity power
//! factor, the infinite bus is the only slack.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::farm::{FarmDescription, PerUnitBases, WtParams, C64};
use crate::network::Topology;

pub const PF_TOLERANCE: f64 = 1e-8;
pub const PF_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusSolution {
    pub bus_ids: Vec<String>,
    /// Complex bus voltage in the XY frame (p.u.).
    pub voltage: Vec<C64>,
    /// Complex power injected at each bus (p.u.).
    pub injection: Vec<C64>,
    /// Current in each farm branch, from `from_bus` to `to_bus` (p.u.).
    pub branch_current: Vec<C64>,
    /// Current from the POI into the infinite bus.
    pub grid_current: C64,
    /// Complex power delivered into the infinite bus.
    pub slack_power: C64,
    /// Sum of I^2 R over the farm branches and the grid Thevenin branch.
    pub losses: f64,
    pub source_voltage: C64,
    pub iterations: usize,
    /// Max-norm power mismatch after every Newton iteration, starting with
    /// the flat start.
    pub mismatch_history: Vec<f64>,
}

impl BusSolution {
    pub fn max_mismatch(&self) -> f64 {
        *self.mismatch_history.last().unwrap_or(&0.0)
    }

    pub fn voltage_at(&self, bus_id: &str) -> Option<C64> {
        self.bus_ids
            .iter()
            .position(|b| b == bus_id)
            .map(|i| self.voltage[i])
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bus_id", "vx", "vy", "p", "q"])?;
        for (i, id) in self.bus_ids.iter().enumerate() {
            let (v, s) = (self.voltage[i], self.injection[i]);
            w.write_record([
                id.clone(),
                format!("{:.12e}", v.re),
                format!("{:.12e}", v.im),
                format!("{:.12e}", s.re),
                format!("{:.12e}", s.im),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) struct NewtonOutcome {
    pub voltage: Vec<C64>,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Full Newton-Raphson in polar coordinates on an all-PQ network with the
/// admittance `y`, source coupling `y_src` and source voltage `e`.
pub(crate) fn newton_pq(
    y: &DMatrix<C64>,
    y_src: &[C64],
    e: C64,
    s_spec: &[C64],
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome> {
    let m = y.nrows();
    let mut va = vec![0.0; m];
    let mut vm = vec![e.norm(); m];
    let mut history = Vec::new();
    let j = C64::new(0.0, 1.0);
    for it in 0..=max_iter {
        let v = DVector::from_fn(m, |i, _| C64::from_polar(vm[i], va[i]));
        let ibus = y * &v + DVector::from_fn(m, |i, _| y_src[i] * e);
        let mut f = DVector::<f64>::zeros(2 * m);
        let mut mis: f64 = 0.0;
        for i in 0..m {
            let d = v[i] * ibus[i].conj() - s_spec[i];
            f[i] = d.re;
            f[m + i] = d.im;
            mis = mis.max(d.re.abs()).max(d.im.abs());
        }
        history.push(mis);
        if mis < tol {
            return Ok(NewtonOutcome {
                voltage: v.iter().copied().collect(),
                iterations: it,
                history,
            });
        }
        if it == max_iter || !mis.is_finite() {
            return Err(Error::PowerFlowDiverged {
                iterations: it,
                mismatch: mis,
            });
        }
        let mut jac = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for r in 0..m {
            for c in 0..m {
                let vn = v[c] / v[c].norm();
                let mut ds_da = -j * v[r] * (y[(r, c)] * v[c]).conj();
                let mut ds_dm = v[r] * (y[(r, c)] * vn).conj();
                if r == c {
                    ds_da += j * v[r] * ibus[r].conj();
                    ds_dm += ibus[r].conj() * vn;
                }
                jac[(r, c)] = ds_da.re;
                jac[(r, m + c)] = ds_dm.re;
                jac[(m + r, c)] = ds_da.im;
                jac[(m + r, m + c)] = ds_dm.im;
            }
        }
        let dx = jac
            .lu()
            .solve(&(-f))
            .ok_or(Error::PowerFlowDiverged {
                iterations: it,
                mismatch: mis,
            })?;
        for i in 0..m {
            va[i] += dx[i];
            vm[i] += dx[m + i];
        }
    }
    unreachable!("loop returns on the last iteration")
}

/// Solves the farm's steady state from a flat start.
pub fn solve_powerflow(farm: &FarmDescription) -> Result<BusSolution> {
    let topo = Topology::new(farm);
    let e = C64::new(farm.grid.e_pu, 0.0);
    let nb = farm.buses.len();

    let mut bus_injection = vec![C64::new(0.0, 0.0); nb];
    for (wt, b) in farm.wts.iter().zip(farm.wt_bus_indices()) {
        bus_injection[b] += C64::new(wt.p_m0_pu * wt.scale(&farm.bases), 0.0);
    }
    let mut node_injection = vec![C64::new(0.0, 0.0); topo.n_nodes - 1];
    for (b, s) in bus_injection.iter().enumerate() {
        let n = topo.node_of_bus(b);
        if n != 0 {
            node_injection[n - 1] += s;
        }
    }

    let outcome = newton_pq(
        &topo.y,
        &topo.y_src,
        e,
        &node_injection,
        PF_TOLERANCE,
        PF_MAX_ITER,
    )?;
    let mut node_voltage = vec![e];
    node_voltage.extend(outcome.voltage.iter().copied());

    let voltage: Vec<C64> = (0..nb).map(|b| node_voltage[topo.node_of_bus(b)]).collect();
    let current_injection: Vec<C64> = (0..nb)
        .map(|b| (bus_injection[b] / voltage[b]).conj())
        .collect();
    let edge_current = topo.edge_currents(&node_voltage, &current_injection);
    let losses = topo
        .edges
        .iter()
        .zip(&edge_current)
        .map(|(edge, i)| i.norm_sqr() * edge.z.re)
        .sum();
    let grid_current = edge_current[0];

    Ok(BusSolution {
        bus_ids: farm.buses.iter().map(|b| b.id.clone()).collect(),
        voltage,
        injection: bus_injection,
        branch_current: edge_current[1..].to_vec(),
        grid_current,
        slack_power: e * grid_current.conj(),
        losses,
        source_voltage: e,
        iterations: outcome.iterations,
        mismatch_history: outcome.history,
    })
}

/// Linearization point of one turbine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WtOperatingPoint {
    /// Terminal voltage in the XY frame (system p.u.).
    pub u_xy0: [f64; 2],
    /// Injected current in the XY frame (system p.u.).
    pub i_xy0: [f64; 2],
    /// PLL angle relative to the XY frame (rad).
    pub delta0: f64,
    pub u_d0: f64,
    /// dq currents on the turbine's own rating.
    pub i_d0: f64,
    pub i_q0: f64,
}

/// Operating point implied by a terminal voltage: the PLL aligns the
/// d-axis with the voltage and the converter runs at unity power factor.
pub fn operating_point_at(u: C64, wt: &WtParams, bases: &PerUnitBases) -> Result<WtOperatingPoint> {
    let u_d0 = u.norm();
    if !(u_d0 > 1e-12) {
        return Err(Error::ZeroVoltage(wt.id.clone()));
    }
    let delta0 = u.im.atan2(u.re);
    let i_d0 = wt.p_m0_pu / u_d0;
    let m = wt.scale(bases);
    let (s, c) = delta0.sin_cos();
    Ok(WtOperatingPoint {
        u_xy0: [u.re, u.im],
        // T(delta)^T [i_d, 0] on the system base
        i_xy0: [m * c * i_d0, m * s * i_d0],
        delta0,
        u_d0,
        i_d0,
        i_q0: 0.0,
    })
}

pub fn wt_operating_point(
    sol: &BusSolution,
    wt: &WtParams,
    bases: &PerUnitBases,
) -> Result<WtOperatingPoint> {
    let u = sol
        .voltage_at(&wt.bus)
        .ok_or_else(|| Error::InvalidArgument(format!("bus {} not in solution", wt.bus)))?;
    operating_point_at(u, wt, bases)
}

/// Operating points of every turbine, in farm order.
pub fn operating_points(farm: &FarmDescription, sol: &BusSolution) -> Result<Vec<WtOperatingPoint>> {
    farm.wts
        .iter()
        .map(|wt| wt_operating_point(sol, wt, &farm.bases))
        .collect()
}

/// Writes a small human-readable summary line per bus; used by the CLI.
pub fn describe(sol: &BusSolution, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "power flow: {} iterations, mismatch {:.2e}, slack P = {:.6} p.u., losses = {:.6} p.u.",
        sol.iterations,
        sol.max_mismatch(),
        sol.slack_power.re,
        sol.losses
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::farm::{Branch, Bus, GridThevenin};
    use crate::testutil::{bases, wt};

    fn single(z: C64, p: f64) -> FarmDescription {
        FarmDescription {
            bases: bases(),
            buses: vec![Bus { id: "POI".into(), poi: true }],
            branches: vec![],
            wts: vec![{
                let mut w = wt("WT01", "POI");
                w.p_m0_pu = p;
                w
            }],
            grid: GridThevenin {
                r_g_pu: z.re,
                l_g_pu: z.im,
                s_base_mva: None,
                e_pu: 1.0,
            },
            provenance: None,
        }
    }

    #[test]
    fn zero_impedance_link_has_no_drop() {
        let sol = solve_powerflow(&single(C64::new(0.0, 0.0), 0.8)).unwrap();
        assert_eq!(sol.voltage[0], C64::new(1.0, 0.0));
        assert!((sol.grid_current - C64::new(0.8, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn single_wt_matches_fixed_point_oracle() {
        let z = C64::new(0.001, 0.01);
        let p = 1.0;
        // u = e + z * conj(P / u)
        let mut u = C64::new(1.0, 0.0);
        for _ in 0..200 {
            let next = C64::new(1.0, 0.0) + z * (C64::new(p, 0.0) / u).conj();
            if (next - u).norm() < 1e-14 {
                u = next;
                break;
            }
            u = next;
        }
        let sol = solve_powerflow(&single(z, p)).unwrap();
        assert!((sol.voltage[0] - u).norm() < 1e-9, "{} vs {}", sol.voltage[0], u);
        assert!(sol.max_mismatch() < PF_TOLERANCE);
    }

    #[test]
    fn operating_point_aligned_case() {
        let w = { let mut w = wt("W", "B"); w.p_m0_pu = 0.9; w };
        let op = operating_point_at(C64::new(1.0, 0.0), &w, &bases()).unwrap();
        assert_eq!(op.delta0, 0.0);
        assert_eq!(op.u_d0, 1.0);
        assert!((op.i_d0 - 0.9).abs() < 1e-15);
    }

    #[test]
    fn operating_point_rotated_case() {
        let w = { let mut w = wt("W", "B"); w.p_m0_pu = 1.0; w };
        let u = C64::from_polar(1.02, 0.05);
        let op = operating_point_at(u, &w, &bases()).unwrap();
        assert!((op.delta0 - 0.05).abs() < 1e-12);
        assert!((op.u_d0 - 1.02).abs() < 1e-12);
        assert!((op.i_d0 - 0.9804).abs() < 1e-4);
        // T(delta0) u_xy0 = [u_d0, 0]
        let (s, c) = op.delta0.sin_cos();
        let ud = c * op.u_xy0[0] + s * op.u_xy0[1];
        let uq = -s * op.u_xy0[0] + c * op.u_xy0[1];
        assert!((ud - op.u_d0).abs() < 1e-12);
        assert!(uq.abs() < 1e-12);
        // u_d0 i_d0 = P
        assert!((op.u_d0 * op.i_d0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_voltage_is_an_error() {
        let w = wt("W", "B");
        assert!(matches!(
            operating_point_at(C64::new(0.0, 0.0), &w, &bases()),
            Err(Error::ZeroVoltage(_))
        ));
    }

    #[test]
    fn feeder_power_balance_and_determinism() {
        let mut farm = single(C64::new(0.001, 0.01), 0.9);
        farm.buses.push(Bus { id: "A".into(), poi: false });
        farm.buses.push(Bus { id: "B".into(), poi: false });
        let br = |a: &str, b: &str, l: f64| Branch {
            from_bus: a.into(),
            to_bus: b.into(),
            length_km: l,
            r_ohm_per_km: 0.1153,
            l_h_per_km: 1.05e-3,
        };
        farm.branches = vec![br("POI", "A", 3.0), br("A", "B", 0.0)];
        farm.wts.push({ let mut w = wt("WT02", "A"); w.p_m0_pu = 0.7; w });
        farm.wts.push({ let mut w = wt("WT03", "B"); w.p_m0_pu = 0.5; w });
        let sol = solve_powerflow(&farm).unwrap();
        let p_total = 0.9 + 0.7 + 0.5;
        assert!((sol.slack_power.re - (p_total - sol.losses)).abs() < 1e-8);
        assert!(sol.losses > 0.0);
        let hist = &sol.mismatch_history;
        assert!(hist.windows(2).all(|w| w[1] < w[0]), "{hist:?}");
        assert_eq!(sol, solve_powerflow(&farm).unwrap());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let sol = solve_powerflow(&single(C64::new(0.001, 0.01), 0.9)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("buses.csv");
        sol.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("bus_id,vx,vy,p,q"));
        assert!(lines.next().unwrap().starts_with("POI,"));
    }
}
