//! DEM fidelity: modal error metrics and linear sag responses.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::aggregation::aggregate_id;
use crate::assembly::{assemble_farm, FarmStateSpace};
use crate::clustering::{GroupAssignment, ModeClusters};
use crate::error::{Error, Result};
use crate::farm::{PerUnitBases, WtParams, C64};
use crate::modal::{eigenvalues, ConcernSet};
use crate::network::{real_blocks, NetworkMatrices};
use crate::wt::{linearize_wt, simulate_wt_nonlinear, single_wt_operating_point, Sag, StateKind, TheveninSource};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 2.0;
pub const DEFAULT_SAG: f64 = 0.05;
pub const DEFAULT_SAG_START: f64 = 0.1;
/// Largest sag treated as small-signal by `linearization_check`.
pub const SMALL_SIGNAL_SAG: f64 = 0.005;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ModeError {
    pub mode: C64,
    /// Cluster centre or nearest DEM mode.
    pub reference: C64,
    pub relative: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ModeErrors {
    pub value: f64,
    pub per_mode: Vec<ModeError>,
}

fn collect(concern: &ConcernSet, reference: impl Fn(usize, C64) -> C64) -> Result<ModeErrors> {
    let mut per_mode = Vec::with_capacity(concern.len());
    let mut value: f64 = 0.0;
    for (i, &l) in concern.eigenvalues.iter().enumerate() {
        if l.norm() == 0.0 {
            return Err(Error::ZeroMode(i));
        }
        let r = reference(i, l);
        let relative = (l - r).norm() / l.norm();
        value = value.max(relative);
        per_mode.push(ModeError {
            mode: l,
            reference: r,
            relative,
        });
    }
    Ok(ModeErrors { value, per_mode })
}

/// `E = max_i |l_i - centre(l_i)| / |l_i|`.
pub fn error_e(concern: &ConcernSet, clusters: &ModeClusters) -> Result<ModeErrors> {
    if clusters.labels.len() != concern.len() {
        return Err(Error::Dimension(format!(
            "clusters cover {} modes, concern set has {}",
            clusters.labels.len(),
            concern.len()
        )));
    }
    collect(concern, |i, _| clusters.centre_of(i))
}

/// `E' = max_i min_j |l_i - l_j^DEM| / |l_i|`.
pub fn error_e_prime(concern: &ConcernSet, dem_modes: &[C64]) -> Result<ModeErrors> {
    if dem_modes.is_empty() {
        return Err(Error::InvalidArgument("DEM concern set is empty".into()));
    }
    collect(concern, |_, l| {
        *dem_modes
            .iter()
            .min_by(|a, b| (l - **a).norm().total_cmp(&(l - **b).norm()))
            .expect("non-empty")
    })
}

/// Sampled linear response to an infinite-bus voltage sag.
#[derive(Debug, Clone, Serialize)]
pub struct LinearResponse {
    pub t: Vec<f64>,
    pub wt_ids: Vec<String>,
    pub ratings_mva: Vec<f64>,
    /// DC-voltage deviation per turbine, `u_dc[k][step]`.
    pub u_dc: Vec<Vec<f64>>,
    /// Active power deviation delivered at the POI (system p.u.).
    pub p_poi: Vec<f64>,
    pub i_poi_x: Vec<f64>,
    pub i_poi_y: Vec<f64>,
    /// Set when the state matrix has an eigenvalue in the right half plane
    /// or the trajectory grows without bound.
    pub unstable: bool,
}

fn check_sim_args(sag: &Sag, horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be non-negative, got {horizon}")));
    }
    if !(0.0..1.0).contains(&sag.fraction) {
        return Err(Error::InvalidArgument(format!("sag must lie in [0, 1), got {}", sag.fraction)));
    }
    Ok((horizon / dt).round() as usize)
}

fn source_step(fss: &FarmStateSpace, sag: &Sag, t: f64) -> DVector<f64> {
    if t >= sag.start - 1e-12 {
        DVector::from_vec(vec![-sag.fraction * fss.source_e, 0.0])
    } else {
        DVector::zeros(2)
    }
}

struct Recorder<'a> {
    fss: &'a FarmStateSpace,
    out: LinearResponse,
    dc_rows: Vec<usize>,
}

impl<'a> Recorder<'a> {
    fn new(fss: &'a FarmStateSpace, steps: usize) -> Self {
        let n = fss.n_wts();
        Recorder {
            fss,
            dc_rows: (0..n).map(|k| fss.state_index(k, StateKind::DcVoltage)).collect(),
            out: LinearResponse {
                t: Vec::with_capacity(steps + 1),
                wt_ids: fss.wt_ids.clone(),
                ratings_mva: fss.ratings_mva.clone(),
                u_dc: vec![Vec::with_capacity(steps + 1); n],
                p_poi: Vec::with_capacity(steps + 1),
                i_poi_x: Vec::with_capacity(steps + 1),
                i_poi_y: Vec::with_capacity(steps + 1),
                unstable: false,
            },
        }
    }

    fn push(&mut self, t: f64, x: &DVector<f64>, de: &DVector<f64>) {
        let f = self.fss;
        let di = &f.poi_i_x * x + &f.poi_i_e * de;
        let du = &f.poi_u_x * x + &f.poi_u_e * de;
        let p = du[0] * f.poi_i0[0] + du[1] * f.poi_i0[1] + f.poi_u0[0] * di[0] + f.poi_u0[1] * di[1];
        self.out.t.push(t);
        for (k, &r) in self.dc_rows.iter().enumerate() {
            self.out.u_dc[k].push(x[r]);
        }
        self.out.p_poi.push(p);
        self.out.i_poi_x.push(di[0]);
        self.out.i_poi_y.push(di[1]);
    }
}

/// Exact zero-order-hold propagation of `dx = A_s x + B_s de` with `de` a
/// step of `-sag` on the infinite-bus voltage magnitude.
pub fn simulate_linear(fss: &FarmStateSpace, sag: &Sag, horizon: f64, dt: f64) -> Result<LinearResponse> {
    let steps = check_sim_args(sag, horizon, dt)?;
    let n = fss.n_states();
    let mut aug = DMatrix::<f64>::zeros(n + 2, n + 2);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&fss.a_s * dt));
    aug.view_mut((0, n), (n, 2)).copy_from(&(&fss.b_s * dt));
    let e = aug.exp();
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma = e.view((0, n), (n, 2)).into_owned();

    let mut rec = Recorder::new(fss, steps);
    let mut x = DVector::<f64>::zeros(n);
    let x_scale = |x: &DVector<f64>| x.amax();
    let mut peak: f64 = 0.0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let de = source_step(fss, sag, t);
        rec.push(t, &x, &de);
        peak = peak.max(x_scale(&x));
        if k < steps {
            x = &phi * &x + &gamma * &de;
        }
    }
    let spectrum_unstable = eigenvalues(&fss.a_s)?.iter().any(|l| l.re > 1e-9);
    let tail = x_scale(&x);
    let diverged = !tail.is_finite() || (peak > 0.0 && tail > 1e3 * peak.max(sag.fraction));
    rec.out.unstable = spectrum_unstable || diverged;
    if rec.out.unstable {
        log::warn!("linear response is unstable");
    }
    Ok(rec.out)
}

/// Fixed-step RK4 on the same system; used to cross-check `simulate_linear`.
pub fn simulate_linear_rk4(fss: &FarmStateSpace, sag: &Sag, horizon: f64, dt: f64, substeps: usize) -> Result<LinearResponse> {
    let steps = check_sim_args(sag, horizon, dt)?;
    let n = fss.n_states();
    let h = dt / substeps.max(1) as f64;
    let mut rec = Recorder::new(fss, steps);
    let mut x = DVector::<f64>::zeros(n);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let de = source_step(fss, sag, t);
        rec.push(t, &x, &de);
        if k == steps {
            break;
        }
        // input held over the whole interval, as in the exact propagation
        let bu = &fss.b_s * &de;
        let f = |x: &DVector<f64>| &fss.a_s * x + &bu;
        for _ in 0..substeps.max(1) {
            let k1 = f(&x);
            let k2 = f(&(&x + &k1 * (h / 2.0)));
            let k3 = f(&(&x + &k2 * (h / 2.0)));
            let k4 = f(&(&x + &k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    Ok(rec.out)
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Nrmse {
    pub value: f64,
    /// The reference signal has zero range; `value` is then the plain RMSE.
    pub flat: bool,
}

/// RMS error normalized by the range of the reference `y`.
pub fn nrmse(y: &[f64], y_hat: &[f64]) -> Result<Nrmse> {
    if y.len() != y_hat.len() {
        return Err(Error::Dimension(format!("signals of length {} and {}", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Ok(Nrmse { value: 0.0, flat: true });
    }
    let rmse = (y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let range = hi - lo;
    if range > 0.0 {
        Ok(Nrmse {
            value: rmse / range,
            flat: false,
        })
    } else {
        Ok(Nrmse { value: rmse, flat: true })
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SignalError {
    pub signal: String,
    pub nrmse: f64,
    pub flat: bool,
}

/// Capacity-weighted mean DC-voltage deviation of each group.
pub fn group_mean_u_dc(resp: &LinearResponse, groups: &GroupAssignment) -> Vec<Vec<f64>> {
    (0..groups.n_groups)
        .map(|g| {
            let members = groups.members(g);
            let total: f64 = members.iter().map(|&k| resp.ratings_mva[k]).sum();
            (0..resp.t.len())
                .map(|s| members.iter().map(|&k| resp.ratings_mva[k] * resp.u_dc[k][s]).sum::<f64>() / total)
                .collect()
        })
        .collect()
}

/// Signal names and (detailed, DEM) traces compared by `compare_responses`.
pub fn monitored_signals(
    detailed: &LinearResponse,
    dem: &LinearResponse,
    groups: &GroupAssignment,
) -> Result<Vec<(String, Vec<f64>, Vec<f64>)>> {
    if detailed.t.len() != dem.t.len() || detailed.t.iter().zip(&dem.t).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::Dimension("detailed and DEM responses use different time grids".into()));
    }
    if groups.wt_ids != detailed.wt_ids {
        return Err(Error::Dimension("group assignment does not match the detailed response".into()));
    }
    if dem.u_dc.len() != groups.n_groups {
        return Err(Error::Dimension(format!(
            "DEM has {} machines for {} groups",
            dem.u_dc.len(),
            groups.n_groups
        )));
    }
    let mut out = vec![
        ("p_poi".to_string(), detailed.p_poi.clone(), dem.p_poi.clone()),
        ("i_poi_x".to_string(), detailed.i_poi_x.clone(), dem.i_poi_x.clone()),
        ("i_poi_y".to_string(), detailed.i_poi_y.clone(), dem.i_poi_y.clone()),
    ];
    for (g, mean) in group_mean_u_dc(detailed, groups).into_iter().enumerate() {
        out.push((format!("u_dc_{}", aggregate_id(g)), mean, dem.u_dc[g].clone()));
    }
    Ok(out)
}

pub fn compare_responses(
    detailed: &LinearResponse,
    dem: &LinearResponse,
    groups: &GroupAssignment,
) -> Result<Vec<SignalError>> {
    monitored_signals(detailed, dem, groups)?
        .into_iter()
        .map(|(signal, y, y_hat)| {
            let e = nrmse(&y, &y_hat)?;
            Ok(SignalError {
                signal,
                nrmse: e.value,
                flat: e.flat,
            })
        })
        .collect()
}

/// `responses.csv`: time plus every monitored signal, detailed and DEM
/// side by side.
pub fn write_responses_csv(
    detailed: &LinearResponse,
    dem: &LinearResponse,
    groups: &GroupAssignment,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let signals = monitored_signals(detailed, dem, groups)?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    for (name, ..) in &signals {
        header.push(format!("{name}_detailed"));
        header.push(format!("{name}_dem"));
    }
    w.write_record(&header)?;
    for s in 0..detailed.t.len() {
        let mut row = vec![format!("{:.6}", detailed.t[s])];
        for (_, y, y_hat) in &signals {
            row.push(format!("{:.9e}", y[s]));
            row.push(format!("{:.9e}", y_hat[s]));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearizationCheck {
    pub sag: f64,
    pub nrmse: f64,
    pub flat: bool,
    /// The sag is larger than the small-signal regime.
    pub out_of_regime: bool,
    pub t: Vec<f64>,
    pub nonlinear_u_dc: Vec<f64>,
    pub linear_u_dc: Vec<f64>,
}

/// Single-turbine linear model closed through a Thevenin source.
pub fn single_wt_state_space(wt: &WtParams, source: &TheveninSource, bases: &PerUnitBases) -> Result<FarmStateSpace> {
    let op = single_wt_operating_point(wt, source, bases)?;
    let blk = linearize_wt(wt, &op, bases);
    let z = DMatrix::from_element(1, 1, source.z);
    let net = NetworkMatrices {
        z: real_blocks(&z),
        k_src: DMatrix::identity(2, 2),
        z_poi: real_blocks(&z),
        k_poi: DMatrix::identity(2, 2),
        z_complex: z,
    };
    let mut fss = assemble_farm(&[wt.id.clone()], &[wt.rating(bases)], &[blk], &net)?;
    fss.poi_u0 = op.u_xy0;
    fss.poi_i0 = op.i_xy0;
    fss.source_e = source.e;
    Ok(fss)
}

/// Compares the nonlinear and linearized DC-voltage response of one
/// turbine under the same sag.
pub fn linearization_check(
    wt: &WtParams,
    source: &TheveninSource,
    bases: &PerUnitBases,
    sag: &Sag,
    horizon: f64,
    dt: f64,
) -> Result<LinearizationCheck> {
    let nl = simulate_wt_nonlinear(wt, source, sag, horizon, dt, bases)?;
    let fss = single_wt_state_space(wt, source, bases)?;
    let lin = simulate_linear(&fss, sag, horizon, dt)?;
    let nonlinear_u_dc: Vec<f64> = nl.u_dc.iter().map(|u| u - wt.u_dc0_pu).collect();
    let e = nrmse(&nonlinear_u_dc, &lin.u_dc[0])?;
    let out_of_regime = sag.fraction > SMALL_SIGNAL_SAG;
    if out_of_regime {
        log::warn!("sag {:.3} exceeds the small-signal regime", sag.fraction);
    }
    Ok(LinearizationCheck {
        sag: sag.fraction,
        nrmse: e.value,
        flat: e.flat,
        out_of_regime,
        t: nl.t,
        nonlinear_u_dc,
        linear_u_dc: lin.u_dc[0].clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub farm_sha256: String,
    pub clusters: usize,
    pub seed: u64,
    pub n_wts: usize,
    pub n_states: usize,
    pub e: ModeErrors,
    pub e_prime: ModeErrors,
    pub sag: f64,
    pub horizon: f64,
    pub dt: f64,
    pub nrmse: Vec<SignalError>,
    pub detailed_unstable: bool,
    pub dem_unstable: bool,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn nrmse_of(&self, signal: &str) -> Option<f64> {
        self.nrmse.iter().find(|s| s.signal == signal).map(|s| s.nrmse)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::build_dem;
    use crate::assembly::linearize_farm;
    use crate::clustering::cluster_modes;
    use crate::powerflow::operating_point_at;
    use crate::testutil::{bases, two_wt_farm, wt};
    use crate::wt::effective_capacitance;

    fn cs(points: &[C64]) -> ConcernSet {
        ConcernSet::from_eigenvalues(points.to_vec())
    }

    fn clusters_from(labels: Vec<usize>, points: &[C64]) -> ModeClusters {
        let c = labels.iter().max().unwrap() + 1;
        let mut members = vec![Vec::new(); c];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let centres = members
            .iter()
            .map(|m| m.iter().map(|&i| points[i]).sum::<C64>() / m.len() as f64)
            .collect();
        ModeClusters {
            c,
            members,
            centres,
            inertia: 0.0,
            labels,
        }
    }

    #[test]
    fn e_examples() {
        let pts = [C64::new(-1.0, 10.0), C64::new(-1.1, 10.2)];
        let cl = clusters_from(vec![0, 0], &pts);
        let e = error_e(&cs(&pts), &cl).unwrap();
        let expected = C64::new(0.05, -0.1).norm() / C64::new(-1.0, 10.0).norm();
        assert!((e.value - expected).abs() < 1e-15);
        assert!((e.value - 0.01112).abs() < 1e-5);
        assert_eq!(e.per_mode[0].reference, C64::new(-1.05, 10.1));

        let same = [C64::new(-2.0, 30.0); 3];
        assert_eq!(error_e(&cs(&same), &clusters_from(vec![0, 0, 0], &same)).unwrap().value, 0.0);
        assert_eq!(error_e(&cs(&pts), &clusters_from(vec![0, 1], &pts)).unwrap().value, 0.0);
    }

    #[test]
    fn e_prime_examples() {
        let detailed = [C64::new(-1.0, 10.0)];
        let dem = [C64::new(-1.0, 9.0), C64::new(-5.0, 10.0)];
        let e = error_e_prime(&cs(&detailed), &dem).unwrap();
        assert_eq!(e.per_mode[0].reference, dem[0]);
        assert!((e.value - 1.0 / 101f64.sqrt()).abs() < 1e-15);
        assert!((e.value - 0.0995).abs() < 1e-4);
        assert_eq!(error_e_prime(&cs(&detailed), &detailed).unwrap().value, 0.0);
        assert!(error_e_prime(&cs(&detailed), &[]).is_err());
    }

    #[test]
    fn zero_mode_is_an_error() {
        let pts = [C64::new(0.0, 0.0)];
        assert!(matches!(error_e(&cs(&pts), &clusters_from(vec![0], &pts)), Err(Error::ZeroMode(0))));
    }

    #[test]
    fn e_shrinks_under_nested_splits() {
        let mut pts = Vec::new();
        for band in 0..4 {
            for j in 0..5 {
                pts.push(C64::new(-5.0 - 4.0 * band as f64 + 0.1 * j as f64, 50.0 + band as f64));
            }
        }
        let concern = cs(&pts);
        // hierarchy: {all} -> {0,1}{2,3} -> {0}{1}{2,3} -> bands
        let hierarchy = [
            vec![0; 20],
            (0..20).map(|i| usize::from(i >= 10)).collect(),
            (0..20).map(|i| [0, 1, 2, 2][i / 5]).collect::<Vec<_>>(),
            (0..20).map(|i| i / 5).collect(),
        ];
        let es: Vec<f64> = hierarchy
            .iter()
            .map(|l| error_e(&concern, &clusters_from(l.clone(), &pts)).unwrap().value)
            .collect();
        for w in es.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{es:?}");
        }
        // k-means on the same points behaves the same way
        let km: Vec<f64> = (1..=4)
            .map(|c| error_e(&concern, &cluster_modes(&concern, c, 42).unwrap()).unwrap().value)
            .collect();
        for w in km.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{km:?}");
        }
    }

    #[test]
    fn nrmse_definition() {
        let y = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(nrmse(&y, &y).unwrap(), Nrmse { value: 0.0, flat: false });
        let shifted: Vec<f64> = y.iter().map(|v| v + 0.3).collect();
        assert!((nrmse(&y, &shifted).unwrap().value - 0.1).abs() < 1e-12);
        let flat = nrmse(&[1.0, 1.0], &[1.0, 3.0]).unwrap();
        assert!(flat.flat);
        assert!((flat.value - 2f64.sqrt()).abs() < 1e-12);
        assert!(nrmse(&y, &y[..2]).is_err());
    }

    fn stiff_wt_fss() -> (WtParams, FarmStateSpace) {
        let w = wt("W", "B");
        let src = TheveninSource {
            z: C64::new(0.0, 0.0),
            e: 1.0,
        };
        let fss = single_wt_state_space(&w, &src, &bases()).unwrap();
        (w, fss)
    }

    #[test]
    fn zero_sag_gives_zero_response() {
        let (_, fss) = stiff_wt_fss();
        let r = simulate_linear(&fss, &Sag { fraction: 0.0, start: 0.1 }, 0.5, 1e-3).unwrap();
        assert_eq!(r.t.len(), 501);
        assert!(r.u_dc[0].iter().chain(&r.p_poi).all(|v| *v == 0.0));
        assert!(!r.unstable);
    }

    #[test]
    fn stiff_wt_step_matches_second_order_response() {
        let (w, fss) = stiff_wt_fss();
        let b = bases();
        let op = operating_point_at(C64::new(1.0, 0.0), &w, &b).unwrap();
        let cp = effective_capacitance(&w, &b);
        let a1 = op.u_d0 * w.kp_dvc_pu / cp;
        let a0 = op.u_d0 * w.ki_dvc_pu / cp;
        let sigma = a1 / 2.0;
        let wd = (a0 - sigma * sigma).sqrt();
        let sag = Sag {
            fraction: 0.05,
            start: 0.1,
        };
        let w0 = op.i_d0 * sag.fraction / cp;
        let r = simulate_linear(&fss, &sag, 1.0, 1e-3).unwrap();
        for (s, t) in r.t.iter().enumerate() {
            let tau = t - sag.start;
            let exact = if tau < -1e-12 {
                0.0
            } else {
                w0 / wd * (-sigma * tau).exp() * (wd * tau).sin()
            };
            assert!((r.u_dc[0][s] - exact).abs() < 1e-6 * w0 / wd, "t={t}");
        }
    }

    #[test]
    fn exact_propagation_agrees_with_rk4() {
        let lin = linearize_farm(&two_wt_farm(2.0)).unwrap();
        let sag = Sag {
            fraction: 0.05,
            start: 0.1,
        };
        let exact = simulate_linear(&lin.fss, &sag, 0.5, 1e-3).unwrap();
        let rk = simulate_linear_rk4(&lin.fss, &sag, 0.5, 1e-3, 10).unwrap();
        for k in 0..2 {
            for (a, b) in exact.u_dc[k].iter().zip(&rk.u_dc[k]) {
                assert!((a - b).abs() < 1e-7);
            }
        }
        for (a, b) in exact.p_poi.iter().zip(&rk.p_poi) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn unstable_system_is_flagged() {
        let (_, mut fss) = stiff_wt_fss();
        fss.a_s[(0, 0)] = 50.0;
        let r = simulate_linear(&fss, &Sag { fraction: 0.01, start: 0.0 }, 0.2, 1e-3).unwrap();
        assert!(r.unstable);
    }

    #[test]
    fn bad_arguments() {
        let (_, fss) = stiff_wt_fss();
        let sag = Sag { fraction: 0.05, start: 0.1 };
        assert!(simulate_linear(&fss, &sag, 1.0, 0.0).is_err());
        assert!(simulate_linear(&fss, &Sag { fraction: 1.5, start: 0.0 }, 1.0, 1e-3).is_err());
    }

    #[test]
    fn identity_dem_responses_coincide() {
        let farm = two_wt_farm(0.0);
        let ids: Vec<String> = farm.wts.iter().map(|w| w.id.clone()).collect();
        let groups = GroupAssignment::singletons(&ids);
        let dem = build_dem(&farm, &groups).unwrap();
        let detailed = linearize_farm(&farm).unwrap();
        let sag = Sag { fraction: 0.05, start: 0.1 };
        let a = simulate_linear(&detailed.fss, &sag, 1.0, 1e-3).unwrap();
        let b = simulate_linear(&dem.lin.fss, &sag, 1.0, 1e-3).unwrap();
        let errs = compare_responses(&a, &b, &groups).unwrap();
        assert_eq!(errs.len(), 5);
        for e in errs {
            assert!(e.nrmse < 1e-6, "{e:?}");
        }
        assert_eq!(compare_responses(&a, &a, &groups).unwrap()[0].nrmse, 0.0);
    }

    #[test]
    fn responses_csv_layout() {
        let farm = two_wt_farm(1.0);
        let ids: Vec<String> = farm.wts.iter().map(|w| w.id.clone()).collect();
        let groups = GroupAssignment::from_members(&ids, &[ids.clone()]).unwrap();
        let dem = build_dem(&farm, &groups).unwrap();
        let detailed = linearize_farm(&farm).unwrap();
        let sag = Sag { fraction: 0.05, start: 0.1 };
        let a = simulate_linear(&detailed.fss, &sag, 0.2, 1e-3).unwrap();
        let b = simulate_linear(&dem.lin.fss, &sag, 0.2, 1e-3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("responses.csv");
        write_responses_csv(&a, &b, &groups, &p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("t,p_poi_detailed,p_poi_dem,i_poi_x_detailed"));
        assert!(text.lines().next().unwrap().ends_with("u_dc_EQ01_detailed,u_dc_EQ01_dem"));
        assert_eq!(text.lines().count(), 202);
    }

    fn grid() -> TheveninSource {
        TheveninSource {
            z: C64::new(0.001, 0.01) / 33.0,
            e: 1.0,
        }
    }

    #[test]
    fn linearization_small_sag() {
        let r = linearization_check(&wt("W", "B"), &grid(), &bases(), &Sag { fraction: 0.001, start: 0.1 }, 1.0, 1e-4)
            .unwrap();
        assert!(!r.out_of_regime);
        assert!(r.nrmse < 0.01, "{}", r.nrmse);
    }

    #[test]
    fn linearization_zero_sag() {
        let r = linearization_check(&wt("W", "B"), &grid(), &bases(), &Sag { fraction: 0.0, start: 0.1 }, 0.5, 1e-3)
            .unwrap();
        assert!(r.nrmse.abs() < 1e-12, "{}", r.nrmse);
    }

    #[test]
    fn linearization_large_sag_is_flagged() {
        let small = linearization_check(&wt("W", "B"), &grid(), &bases(), &Sag { fraction: 0.001, start: 0.1 }, 1.0, 1e-4)
            .unwrap();
        let big = linearization_check(&wt("W", "B"), &grid(), &bases(), &Sag { fraction: 0.1, start: 0.1 }, 1.0, 1e-4)
            .unwrap();
        assert!(big.out_of_regime);
        assert!(big.nrmse > small.nrmse);
    }
}
