//! End-to-end driver: load, linearize, cluster, aggregate, validate and
//! write every artifact under one output directory.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::aggregation::{build_dem, farm_sha256, DemModel};
use crate::assembly::{linearize_farm, LinearizedFarm};
use crate::clustering::{
    cluster_modes_with, group_wts, superimpose_mpf, write_groups_json, FeatureTable, GroupAssignment, KMeansOptions,
    ModeClusters, DEFAULT_MERGE_TAU,
};
use crate::error::{Error, Result};
use crate::farm::{load_farm, FarmDescription, C64};
use crate::modal::{eig_biorthogonal, frequency_hz, select_concern_modes, write_modes_csv, write_mpf_csv, ConcernSet, ModalSolution};
use crate::plot::{self, Mark, Panel, Series};
use crate::validation::{
    compare_responses, error_e, error_e_prime, linearization_check, simulate_linear, write_responses_csv, LinearResponse,
    ModeErrors, ValidationReport, DEFAULT_DT, DEFAULT_HORIZON, DEFAULT_SAG, DEFAULT_SAG_START,
};
use crate::wt::{simulate_wt_nonlinear, Sag, StateKind, TheveninSource};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_E_TARGET: f64 = 0.02;
/// Sag depth of the single-turbine nonlinear-vs-linear check.
pub const LINEARIZATION_SAG: f64 = 0.001;

pub const BUSES_CSV: &str = "buses.csv";
pub const A_CSV: &str = "a_s.csv";
pub const MODES_CSV: &str = "modes.csv";
pub const MPF_CSV: &str = "mpf.csv";
pub const FEATURES_CSV: &str = "features.csv";
pub const GROUPS_JSON: &str = "groups.json";
pub const DEM_JSON: &str = "dem.json";
pub const REPORT_JSON: &str = "report.json";
pub const RESPONSES_CSV: &str = "responses.csv";
pub const WT_TRAJECTORY_CSV: &str = "wt_trajectory.csv";
pub const SCATTER_SVG: &str = "modescatter.svg";
pub const FEATURES_SVG: &str = "features.svg";
pub const RESPONSES_SVG: &str = "responses.svg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Load,
    Flow,
    Linearize,
    Modes,
    Cluster,
    Group,
    Aggregate,
    Validate,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Flow => "flow",
            Stage::Linearize => "linearize",
            Stage::Modes => "modes",
            Stage::Cluster => "cluster",
            Stage::Group => "group",
            Stage::Aggregate => "aggregate",
            Stage::Validate => "validate",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterCount {
    Fixed(usize),
    /// Smallest count whose `E` does not exceed the target.
    Auto { e_target: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub farm: PathBuf,
    pub out: PathBuf,
    pub clusters: ClusterCount,
    pub seed: u64,
    pub filter: Vec<StateKind>,
    pub tau: f64,
    pub normalize: bool,
    pub sag: f64,
    pub sag_start: f64,
    pub horizon: f64,
    pub dt: f64,
}

impl RunConfig {
    pub fn new(farm: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            farm: farm.into(),
            out: out.into(),
            clusters: ClusterCount::Fixed(1),
            seed: DEFAULT_SEED,
            filter: vec![StateKind::DcVoltage],
            tau: DEFAULT_MERGE_TAU,
            normalize: false,
            sag: DEFAULT_SAG,
            sag_start: DEFAULT_SAG_START,
            horizon: DEFAULT_HORIZON,
            dt: DEFAULT_DT,
        }
    }

    fn sag(&self) -> Sag {
        Sag {
            fraction: self.sag,
            start: self.sag_start,
        }
    }
}

/// Everything computed by a run, up to the requested stage.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub farm: FarmDescription,
    pub farm_sha256: String,
    pub detailed: Option<LinearizedFarm>,
    pub modal: Option<ModalSolution>,
    pub concern: Option<ConcernSet>,
    pub clusters: Option<ModeClusters>,
    pub features: Option<FeatureTable>,
    pub groups: Option<GroupAssignment>,
    pub dem: Option<DemModel>,
    pub detailed_response: Option<LinearResponse>,
    pub dem_response: Option<LinearResponse>,
    pub report: Option<ValidationReport>,
    pub wt_check: Option<WtCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WtCheck {
    pub wt_id: String,
    pub sag: f64,
    pub nrmse: f64,
    pub out_of_regime: bool,
}

#[derive(Debug, Clone, Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a ValidationReport,
    auto_e_target: Option<f64>,
    centres: &'a [C64],
    dem_modes: &'a [C64],
    groups: Vec<Vec<String>>,
    linearization: &'a Option<WtCheck>,
}

fn choose_clusters(concern: &ConcernSet, cfg: &RunConfig, opts: &KMeansOptions) -> Result<ModeClusters> {
    match cfg.clusters {
        ClusterCount::Fixed(c) => cluster_modes_with(concern, c, cfg.seed, opts),
        ClusterCount::Auto { e_target } => {
            let mut last = None;
            for c in 1..=concern.len() {
                let cl = match cluster_modes_with(concern, c, cfg.seed, opts) {
                    Ok(cl) => cl,
                    Err(Error::TooManyClusters { .. }) => break,
                    Err(e) => return Err(e),
                };
                if error_e(concern, &cl)?.value <= e_target {
                    return Ok(cl);
                }
                last = Some(cl);
            }
            log::warn!("no cluster count reaches E <= {e_target}; using the largest");
            last.ok_or_else(|| Error::InvalidArgument("empty concern set".into()))
        }
    }
}

/// Thevenin source seen from the first turbine's terminal with every
/// other turbine's current held at its steady value.
fn driving_point_source(farm: &FarmDescription, lin: &LinearizedFarm) -> TheveninSource {
    TheveninSource {
        z: lin.net.z_complex[(0, 0)],
        e: farm.grid.e_pu,
    }
}

/// Runs every stage up to and including `until` on an in-memory farm.
pub fn run_on_farm(farm: &FarmDescription, cfg: &RunConfig, until: Stage) -> std::result::Result<PipelineRun, StageError> {
    farm.validate().at(Stage::Load)?;
    let mut run = PipelineRun {
        farm: farm.clone(),
        farm_sha256: farm_sha256(farm),
        detailed: None,
        modal: None,
        concern: None,
        clusters: None,
        features: None,
        groups: None,
        dem: None,
        detailed_response: None,
        dem_response: None,
        report: None,
        wt_check: None,
    };
    if until < Stage::Flow {
        return Ok(run);
    }
    crate::powerflow::solve_powerflow(farm).at(Stage::Flow)?;
    let lin = linearize_farm(farm).at(Stage::Linearize)?;
    run.detailed = Some(lin);
    if until < Stage::Modes {
        return Ok(run);
    }
    let lin = run.detailed.as_ref().expect("linearized");
    let modal = eig_biorthogonal(&lin.fss.a_s).at(Stage::Modes)?;
    let concern = select_concern_modes(&modal, &lin.fss.labels, farm.wts.len(), &cfg.filter).at(Stage::Modes)?;
    run.modal = Some(modal);
    run.concern = Some(concern);
    if until < Stage::Cluster {
        return Ok(run);
    }

    let concern = run.concern.as_ref().expect("concern");
    let opts = KMeansOptions {
        normalize: cfg.normalize,
        ..Default::default()
    };
    let clusters = choose_clusters(concern, cfg, &opts).at(Stage::Cluster)?;
    let reps: Vec<usize> = (0..lin.fss.n_wts())
        .map(|k| lin.fss.state_index(k, StateKind::DcVoltage))
        .collect();
    let modal = run.modal.as_ref().expect("modal");
    let features = superimpose_mpf(&modal.mpf, concern, &clusters, &reps, &lin.fss.wt_ids).at(Stage::Group)?;
    let groups = group_wts(&features, cfg.tau);
    run.clusters = Some(clusters);
    run.features = Some(features);
    run.groups = Some(groups);
    if until < Stage::Aggregate {
        return Ok(run);
    }

    let dem = build_dem(farm, run.groups.as_ref().expect("groups")).at(Stage::Aggregate)?;
    run.dem = Some(dem);
    if until < Stage::Validate {
        return Ok(run);
    }

    let (lin, dem, groups) = (
        run.detailed.as_ref().expect("linearized"),
        run.dem.as_ref().expect("dem"),
        run.groups.as_ref().expect("groups"),
    );
    let concern = run.concern.as_ref().expect("concern");
    let clusters = run.clusters.as_ref().expect("clusters");
    let e = error_e(concern, clusters).at(Stage::Validate)?;
    let e_prime = error_e_prime(concern, &dem.concern.eigenvalues).at(Stage::Validate)?;
    let sag = cfg.sag();
    let det_resp = simulate_linear(&lin.fss, &sag, cfg.horizon, cfg.dt).at(Stage::Validate)?;
    let dem_resp = simulate_linear(&dem.lin.fss, &sag, cfg.horizon, cfg.dt).at(Stage::Validate)?;
    let nrmse = compare_responses(&det_resp, &dem_resp, groups).at(Stage::Validate)?;

    let src = driving_point_source(farm, lin);
    let check_sag = Sag {
        fraction: LINEARIZATION_SAG,
        start: cfg.sag_start,
    };
    let check = linearization_check(&farm.wts[0], &src, &farm.bases, &check_sag, cfg.horizon, cfg.dt)
        .at(Stage::Validate)?;
    if check.nrmse > 0.01 {
        log::warn!("linearization check NRMSE {:.4} exceeds 1%", check.nrmse);
    }
    let wt_check = WtCheck {
        wt_id: farm.wts[0].id.clone(),
        sag: LINEARIZATION_SAG,
        nrmse: check.nrmse,
        out_of_regime: check.out_of_regime,
    };

    let mut warnings: Vec<String> = concern.warnings.clone();
    warnings.extend(dem.concern.warnings.iter().cloned());
    for id in &groups.low_margin {
        warnings.push(format!("turbine {id} has a low dominance margin"));
    }
    warnings.extend(dem.equivalents.iter().filter_map(|e| e.warning.clone()));
    if det_resp.unstable {
        warnings.push("detailed model is unstable".into());
    }
    if dem_resp.unstable {
        warnings.push("DEM is unstable".into());
    }

    run.report = Some(ValidationReport {
        farm_sha256: run.farm_sha256.clone(),
        clusters: clusters.c,
        seed: cfg.seed,
        n_wts: farm.wts.len(),
        n_states: lin.fss.n_states(),
        e,
        e_prime,
        sag: cfg.sag,
        horizon: cfg.horizon,
        dt: cfg.dt,
        nrmse,
        detailed_unstable: det_resp.unstable,
        dem_unstable: dem_resp.unstable,
        warnings,
    });
    run.detailed_response = Some(det_resp);
    run.dem_response = Some(dem_resp);
    run.wt_check = Some(wt_check);
    Ok(run)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the artifacts of every completed stage into `cfg.out`.
pub fn write_artifacts(run: &PipelineRun, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let out = &cfg.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    let mut add = |name: &str| {
        let p = out.join(name);
        written.push(p.clone());
        p
    };

    if let Some(lin) = &run.detailed {
        lin.flows.write_csv(add(BUSES_CSV))?;
        lin.fss.write_a_csv(add(A_CSV))?;
    } else {
        // flow-only runs still produce the bus table
        if let Ok(sol) = crate::powerflow::solve_powerflow(&run.farm) {
            sol.write_csv(add(BUSES_CSV))?;
        }
    }
    if let (Some(lin), Some(modal), Some(concern)) = (&run.detailed, &run.modal, &run.concern) {
        write_modes_csv(modal, concern, add(MODES_CSV))?;
        write_mpf_csv(modal, &lin.fss.labels, add(MPF_CSV))?;
    }
    if let (Some(concern), Some(clusters), Some(features), Some(groups)) =
        (&run.concern, &run.clusters, &run.features, &run.groups)
    {
        features.write_csv(add(FEATURES_CSV))?;
        write_groups_json(concern, clusters, groups, cfg.seed, add(GROUPS_JSON))?;
    }
    if let Some(dem) = &run.dem {
        dem.write_json(add(DEM_JSON))?;
    }
    if let (Some(report), Some(det), Some(dem_resp), Some(groups), Some(clusters), Some(dem)) = (
        &run.report,
        &run.detailed_response,
        &run.dem_response,
        &run.groups,
        &run.clusters,
        &run.dem,
    ) {
        let file = ReportFile {
            report,
            auto_e_target: match cfg.clusters {
                ClusterCount::Auto { e_target } => Some(e_target),
                ClusterCount::Fixed(_) => None,
            },
            centres: &clusters.centres,
            dem_modes: &dem.concern.eigenvalues,
            groups: (0..groups.n_groups).map(|g| groups.member_ids(g)).collect(),
            linearization: &run.wt_check,
        };
        write_text(&add(REPORT_JSON), &(serde_json::to_string_pretty(&file)? + "\n"))?;
        write_responses_csv(det, dem_resp, groups, add(RESPONSES_CSV))?;
        let lin = run.detailed.as_ref().expect("linearized");
        let traj = simulate_wt_nonlinear(
            &run.farm.wts[0],
            &driving_point_source(&run.farm, lin),
            &cfg.sag(),
            cfg.horizon,
            cfg.dt,
            &run.farm.bases,
        )?;
        traj.write_csv(add(WT_TRAJECTORY_CSV))?;
    }

    for (kind, name, needed) in [
        (PlotKind::Scatter, SCATTER_SVG, run.concern.is_some()),
        (PlotKind::Features, FEATURES_SVG, run.features.is_some()),
        (PlotKind::Responses, RESPONSES_SVG, run.report.is_some()),
    ] {
        if needed {
            emit_plot(out, kind)?;
            written.push(out.join(name));
        }
    }
    Ok(written)
}

/// Load, compute up to `until`, write artifacts.
pub fn run_pipeline(cfg: &RunConfig, until: Stage) -> std::result::Result<PipelineRun, StageError> {
    let farm = load_farm(&cfg.farm).at(Stage::Load)?;
    let run = run_on_farm(&farm, cfg, until)?;
    write_artifacts(&run, cfg).at(Stage::Write)?;
    Ok(run)
}

fn read_artifact(dir: &Path, name: &str) -> Result<String> {
    let p = dir.join(name);
    if !p.is_file() {
        return Err(Error::MissingArtifact(p));
    }
    std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
}

fn complex_of(v: &Value) -> Option<C64> {
    let a = v.as_array()?;
    Some(C64::new(a.first()?.as_f64()?, a.get(1)?.as_f64()?))
}

fn complex_list(v: &Value) -> Vec<C64> {
    v.as_array().map(|a| a.iter().filter_map(complex_of).collect()).unwrap_or_default()
}

struct ModeRow {
    l: C64,
    freq: f64,
    damping: f64,
    selected: bool,
}

fn read_modes(dir: &Path) -> Result<Vec<ModeRow>> {
    let text = read_artifact(dir, MODES_CSV)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok()).unwrap_or(f64::NAN);
        rows.push(ModeRow {
            l: C64::new(f(0), f(1)),
            freq: f(2),
            damping: f(3),
            selected: rec.get(5) == Some("1"),
        });
    }
    Ok(rows)
}

fn read_csv_columns(dir: &Path, name: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = read_artifact(dir, name)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

/// One-page text summary of a finished run directory.
pub fn emit_report(dir: impl AsRef<Path>) -> Result<String> {
    let dir = dir.as_ref();
    let report: Value = serde_json::from_str(&read_artifact(dir, REPORT_JSON)?)?;
    let groups: Value = serde_json::from_str(&read_artifact(dir, GROUPS_JSON)?)?;
    let modes = read_modes(dir)?;

    let mut s = String::new();
    let _ = writeln!(s, "Wind-farm dynamic equivalent report");
    let _ = writeln!(s, "farm sha256: {}", report["farm_sha256"].as_str().unwrap_or("?"));
    let _ = writeln!(
        s,
        "turbines: {}  states: {}  clusters: {}  seed: {}",
        report["n_wts"], report["n_states"], report["clusters"], report["seed"]
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "Concern modes");
    let _ = writeln!(s, "  {:>4} {:>11} {:>11} {:>9} {:>8} {:>7}", "#", "re", "im", "f (Hz)", "zeta", "cluster");
    let clusters = groups["clusters"].as_array().cloned().unwrap_or_default();
    let cluster_of = |l: C64| {
        clusters.iter().position(|c| {
            complex_list(&c["modes"])
                .iter()
                .any(|m| (m - l).norm() <= 1e-9 * l.norm().max(1.0))
        })
    };
    for (i, m) in modes.iter().filter(|m| m.selected).enumerate() {
        let c = cluster_of(m.l).map_or("-".to_string(), |c| c.to_string());
        let _ = writeln!(
            s,
            "  {:>4} {:>11.4} {:>11.4} {:>9.4} {:>8.4} {:>7}",
            i, m.l.re, m.l.im, m.freq, m.damping, c
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Clusters");
    for (c, cl) in clusters.iter().enumerate() {
        let centre = complex_of(&cl["centre"]).unwrap_or_default();
        let n = cl["modes"].as_array().map_or(0, |a| a.len());
        let _ = writeln!(
            s,
            "  {c}: centre {:.4} {:+.4}j ({:.3} Hz), {n} modes",
            centre.re,
            centre.im,
            frequency_hz(centre)
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Groups");
    if let Some(gs) = report["groups"].as_array() {
        for (g, members) in gs.iter().enumerate() {
            let ids: Vec<&str> = members.as_array().map(|a| a.iter().filter_map(Value::as_str).collect()).unwrap_or_default();
            let _ = writeln!(s, "  {}: {} ({} turbines)", crate::aggregation::aggregate_id(g), ids.join(" "), ids.len());
        }
    }
    let pct = |v: &Value| v.as_f64().map_or("?".into(), |x| format!("{:.3}%", 100.0 * x));
    let _ = writeln!(s);
    let _ = writeln!(s, "E  = {}", pct(&report["e"]["value"]));
    let _ = writeln!(s, "E' = {}", pct(&report["e_prime"]["value"]));
    let _ = writeln!(s);
    let _ = writeln!(s, "Sag response NRMSE (sag {})", report["sag"]);
    if let Some(list) = report["nrmse"].as_array() {
        for e in list {
            let flag = if e["flat"].as_bool() == Some(true) { " (flat reference, RMSE)" } else { "" };
            let _ = writeln!(s, "  {:<12} {}{}", e["signal"].as_str().unwrap_or("?"), pct(&e["nrmse"]), flag);
        }
    }
    if let Some(w) = report["warnings"].as_array() {
        if !w.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "Warnings");
            for x in w {
                let _ = writeln!(s, "  {}", x.as_str().unwrap_or("?"));
            }
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Scatter,
    Features,
    Responses,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scatter" => Ok(PlotKind::Scatter),
            "features" => Ok(PlotKind::Features),
            "responses" => Ok(PlotKind::Responses),
            _ => Err(Error::InvalidArgument(format!(
                "unknown plot kind {s:?} (expected scatter, features or responses)"
            ))),
        }
    }
}

fn scatter_svg(dir: &Path) -> Result<String> {
    let modes = read_modes(dir)?;
    let mut series = Vec::new();
    let groups: Option<Value> = read_artifact(dir, GROUPS_JSON)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    match groups.as_ref().and_then(|g| g["clusters"].as_array().cloned()) {
        Some(clusters) => {
            for (c, cl) in clusters.iter().enumerate() {
                series.push(Series {
                    name: format!("cluster {c}"),
                    points: complex_list(&cl["modes"]).iter().map(|l| (l.re, l.im)).collect(),
                    mark: Mark::Dot,
                    color: plot::color(c).into(),
                });
            }
            series.push(Series {
                name: "centres".into(),
                points: clusters
                    .iter()
                    .filter_map(|c| complex_of(&c["centre"]))
                    .map(|l| (l.re, l.im))
                    .collect(),
                mark: Mark::Cross,
                color: "#000000".into(),
            });
        }
        None => series.push(Series {
            name: "concern modes".into(),
            points: modes.iter().filter(|m| m.selected).map(|m| (m.l.re, m.l.im)).collect(),
            mark: Mark::Dot,
            color: plot::color(0).into(),
        }),
    }
    let report: Option<Value> = read_artifact(dir, REPORT_JSON)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    if let Some(r) = report {
        series.push(Series {
            name: "DEM modes".into(),
            points: complex_list(&r["dem_modes"]).iter().map(|l| (l.re, l.im)).collect(),
            mark: Mark::Ring,
            color: "#555555".into(),
        });
    }
    Ok(plot::render(&[Panel {
        title: "Concern modes".into(),
        x_label: "real part (1/s)".into(),
        y_label: "imaginary part (rad/s)".into(),
        series,
    }]))
}

fn features_svg(dir: &Path) -> Result<String> {
    let (header, rows) = read_csv_columns(dir, FEATURES_CSV)?;
    let cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.ends_with("_abs"))
        .map(|(i, h)| (i, h.trim_end_matches("_abs").to_string()))
        .collect();
    let cats: Vec<String> = rows.iter().map(|r| r[0].clone()).collect();
    let bars: Vec<(String, Vec<f64>)> = cols
        .iter()
        .map(|(i, name)| (name.clone(), rows.iter().map(|r| r[*i].parse().unwrap_or(0.0)).collect()))
        .collect();
    Ok(plot::bar_chart("Feature vectors", "|F|", &cats, &bars))
}

fn responses_svg(dir: &Path) -> Result<String> {
    let (header, rows) = read_csv_columns(dir, RESPONSES_CSV)?;
    let t: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap_or(f64::NAN)).collect();
    let col = |i: usize| -> Vec<(f64, f64)> {
        rows.iter()
            .zip(&t)
            .map(|(r, &t)| (t, r[i].parse().unwrap_or(f64::NAN)))
            .collect()
    };
    let mut panels = Vec::new();
    for (i, h) in header.iter().enumerate() {
        let Some(name) = h.strip_suffix("_detailed") else { continue };
        let Some(j) = header.iter().position(|x| *x == format!("{name}_dem")) else { continue };
        panels.push(Panel {
            title: name.to_string(),
            x_label: "t (s)".into(),
            y_label: "deviation (p.u.)".into(),
            series: vec![
                Series {
                    name: "detailed".into(),
                    points: col(i),
                    mark: Mark::Line { dashed: false },
                    color: plot::color(0).into(),
                },
                Series {
                    name: "DEM".into(),
                    points: col(j),
                    mark: Mark::Line { dashed: true },
                    color: plot::color(1).into(),
                },
            ],
        });
    }
    Ok(plot::render(&panels))
}

/// Renders one SVG from the artifacts in `dir` and returns its path.
pub fn emit_plot(dir: impl AsRef<Path>, kind: PlotKind) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let (name, svg) = match kind {
        PlotKind::Scatter => (SCATTER_SVG, scatter_svg(dir)?),
        PlotKind::Features => (FEATURES_SVG, features_svg(dir)?),
        PlotKind::Responses => (RESPONSES_SVG, responses_svg(dir)?),
    };
    let p = dir.join(name);
    write_text(&p, &svg)?;
    Ok(p)
}

/// Modal errors of a finished run, for callers that only need the numbers.
pub fn errors(run: &PipelineRun) -> Option<(&ModeErrors, &ModeErrors)> {
    run.report.as_ref().map(|r| (&r.e, &r.e_prime))
}
