//! Mode clustering on the complex plane, MPF superposition and turbine
//! grouping.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::farm::C64;
use crate::modal::ConcernSet;

pub const DEFAULT_RESTARTS: usize = 32;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_MERGE_TAU: f64 = 0.1;
/// Dominance margin below which an assignment is reported as ambiguous.
pub const LOW_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    /// Rescale both axes to unit spread before clustering.
    pub normalize: bool,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            restarts: DEFAULT_RESTARTS,
            max_iter: DEFAULT_MAX_ITER,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub labels: Vec<usize>,
    pub centres: Vec<[f64; 2]>,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub history: Vec<f64>,
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: [f64; 2], centres: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centres.iter().enumerate() {
        let d = dist2(p, *c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plusplus(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut centres = vec![points[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(*p, centres[0])).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centres.push(points[pick]);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(*p, points[pick]));
        }
    }
    centres
}

fn lloyd(points: &[[f64; 2]], mut centres: Vec<[f64; 2]>, max_iter: usize) -> KMeansRun {
    let k = centres.len();
    let mut labels = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(*p, &centres);
            inertia += d;
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sum = vec![[0.0; 2]; k];
        let mut count = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            sum[labels[i]][0] += p[0];
            sum[labels[i]][1] += p[1];
            count[labels[i]] += 1;
        }
        for j in 0..k {
            if count[j] > 0 {
                centres[j] = [sum[j][0] / count[j] as f64, sum[j][1] / count[j] as f64];
            } else {
                // reseed an empty cluster on the point farthest from its centre
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        dist2(points[a], centres[labels[a]]).total_cmp(&dist2(points[b], centres[labels[b]]))
                    })
                    .unwrap();
                centres[j] = points[far];
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| dist2(*p, centres[l]))
        .sum();
    KMeansRun {
        labels,
        centres,
        inertia,
        history,
    }
}

/// Relabels clusters so centres are in ascending (x, y) order.
fn canonical(mut run: KMeansRun) -> KMeansRun {
    let mut order: Vec<usize> = (0..run.centres.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (run.centres[a], run.centres[b]);
        ca[0].total_cmp(&cb[0]).then(ca[1].total_cmp(&cb[1]))
    });
    let mut rank = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    run.centres = order.iter().map(|&o| run.centres[o]).collect();
    for l in &mut run.labels {
        *l = rank[*l];
    }
    run
}

fn lex_less(a: &[[f64; 2]], b: &[[f64; 2]]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x[0].total_cmp(&y[0]).then(x[1].total_cmp(&y[1])) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// One seeded k-means++ / Lloyd run. Restart `r` draws from stream `r` of
/// the ChaCha8 generator seeded with `seed`.
pub fn kmeans_single(points: &[[f64; 2]], k: usize, seed: u64, restart: u64, max_iter: usize) -> KMeansRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart);
    let init = plusplus(points, k, &mut rng);
    canonical(lloyd(points, init, max_iter))
}

/// Best of `opts.restarts` runs. Runs are independent, so the result does not
/// depend on the order in which they are evaluated.
pub fn kmeans(points: &[[f64; 2]], k: usize, seed: u64, opts: &KMeansOptions) -> Result<KMeansRun> {
    if k == 0 {
        return Err(Error::InvalidArgument("cluster count must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::TooManyClusters {
            requested: k,
            points: points.len(),
        });
    }
    let mut best: Option<KMeansRun> = None;
    for r in 0..opts.restarts.max(1) {
        let run = kmeans_single(points, k, seed, r as u64, opts.max_iter);
        best = match best {
            None => Some(run),
            Some(b) => {
                let tol = 1e-12 * b.inertia.abs().max(1e-300);
                if run.inertia < b.inertia - tol
                    || ((run.inertia - b.inertia).abs() <= tol && lex_less(&run.centres, &b.centres))
                {
                    Some(run)
                } else {
                    Some(b)
                }
            }
        };
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModeClusters {
    pub c: usize,
    /// Per cluster, positions in the concern list.
    pub members: Vec<Vec<usize>>,
    pub centres: Vec<C64>,
    /// Sum of squared distances to the centres in the clustering space.
    pub inertia: f64,
    /// Cluster of each concern mode.
    pub labels: Vec<usize>,
}

pub fn cluster_modes(concern: &ConcernSet, c: usize, seed: u64) -> Result<ModeClusters> {
    cluster_modes_with(concern, c, seed, &KMeansOptions::default())
}

pub fn cluster_modes_with(concern: &ConcernSet, c: usize, seed: u64, opts: &KMeansOptions) -> Result<ModeClusters> {
    let raw: Vec<[f64; 2]> = concern.eigenvalues.iter().map(|l| [l.re, l.im]).collect();
    let points = if opts.normalize {
        let n = raw.len().max(1) as f64;
        let mut scaled = raw.clone();
        for axis in 0..2 {
            let mean = raw.iter().map(|p| p[axis]).sum::<f64>() / n;
            let sd = (raw.iter().map(|p| (p[axis] - mean).powi(2)).sum::<f64>() / n).sqrt();
            if sd > 0.0 {
                for p in &mut scaled {
                    p[axis] /= sd;
                }
            }
        }
        scaled
    } else {
        raw.clone()
    };
    let mut distinct = points.clone();
    distinct.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    distinct.dedup();
    if c > distinct.len() && c <= points.len() {
        return Err(Error::TooManyClusters {
            requested: c,
            points: distinct.len(),
        });
    }
    let run = kmeans(&points, c, seed, opts)?;
    let mut members = vec![Vec::new(); c];
    for (i, &l) in run.labels.iter().enumerate() {
        members[l].push(i);
    }
    let centres = members
        .iter()
        .map(|m| {
            let s: C64 = m.iter().map(|&i| concern.eigenvalues[i]).sum();
            s / m.len() as f64
        })
        .collect();
    Ok(ModeClusters {
        c,
        members,
        centres,
        inertia: run.inertia,
        labels: run.labels,
    })
}

impl ModeClusters {
    pub fn centre_of(&self, mode: usize) -> C64 {
        self.centres[self.labels[mode]]
    }
}

/// Superimposed MPFs, turbines by clusters.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub wt_ids: Vec<String>,
    /// `f[(k, c)]`: sum over cluster `c` of the MPFs of turbine `k`'s
    /// representative state.
    pub f: DMatrix<C64>,
    /// Unclustered sum over the whole concern set, per turbine.
    pub row_totals: Vec<C64>,
}

impl FeatureTable {
    pub fn n_wts(&self) -> usize {
        self.wt_ids.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.f.ncols()
    }

    pub fn feature_vector(&self, k: usize) -> Vec<C64> {
        self.f.row(k).iter().copied().collect()
    }

    pub fn magnitudes(&self, k: usize) -> Vec<f64> {
        self.f.row(k).iter().map(|v| v.norm()).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["wt_id".to_string()];
        for c in 0..self.n_clusters() {
            header.push(format!("c{c}_abs"));
            header.push(format!("c{c}_re"));
            header.push(format!("c{c}_im"));
        }
        w.write_record(&header)?;
        for k in 0..self.n_wts() {
            let mut row = vec![self.wt_ids[k].clone()];
            for c in 0..self.n_clusters() {
                let v = self.f[(k, c)];
                row.push(format!("{:.9e}", v.norm()));
                row.push(format!("{:.9e}", v.re));
                row.push(format!("{:.9e}", v.im));
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// `rep_states[k]` is the state row representing turbine `k`.
pub fn superimpose_mpf(
    mpf: &DMatrix<C64>,
    concern: &ConcernSet,
    clusters: &ModeClusters,
    rep_states: &[usize],
    wt_ids: &[String],
) -> Result<FeatureTable> {
    if rep_states.len() != wt_ids.len() {
        return Err(Error::Dimension(format!(
            "{} representative states for {} turbines",
            rep_states.len(),
            wt_ids.len()
        )));
    }
    if clusters.labels.len() != concern.len() {
        return Err(Error::Dimension(format!(
            "clusters cover {} modes, concern set has {}",
            clusters.labels.len(),
            concern.len()
        )));
    }
    let n = wt_ids.len();
    let mut f = DMatrix::from_element(n, clusters.c, C64::new(0.0, 0.0));
    let mut row_totals = vec![C64::new(0.0, 0.0); n];
    for (k, &state) in rep_states.iter().enumerate() {
        for (j, &mode) in concern.modes.iter().enumerate() {
            let v = mpf[(state, mode)];
            f[(k, clusters.labels[j])] += v;
            row_totals[k] += v;
        }
    }
    Ok(FeatureTable {
        wt_ids: wt_ids.to_vec(),
        f,
        row_totals,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MergeRecord {
    /// Dominant clusters of the two merged groups.
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GroupAssignment {
    pub wt_ids: Vec<String>,
    /// Dense group id per turbine, numbered in order of first appearance.
    pub group: Vec<usize>,
    pub n_groups: usize,
    /// Cluster with the largest |F_kc| per turbine.
    pub dominant: Vec<usize>,
    /// `(top - second) / top` of |F_kc| per turbine; 1 for a single cluster.
    pub margin: Vec<f64>,
    pub low_margin: Vec<String>,
    pub tau: f64,
    pub merges: Vec<MergeRecord>,
}

impl GroupAssignment {
    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.group.len()).filter(|&k| self.group[k] == g).collect()
    }

    pub fn member_ids(&self, g: usize) -> Vec<String> {
        self.members(g).into_iter().map(|k| self.wt_ids[k].clone()).collect()
    }

    /// Every turbine in its own group.
    pub fn singletons(wt_ids: &[String]) -> Self {
        let n = wt_ids.len();
        GroupAssignment {
            wt_ids: wt_ids.to_vec(),
            group: (0..n).collect(),
            n_groups: n,
            dominant: vec![0; n],
            margin: vec![1.0; n],
            low_margin: Vec::new(),
            tau: 0.0,
            merges: Vec::new(),
        }
    }

    /// Groups from explicit member lists given by turbine id.
    pub fn from_members(wt_ids: &[String], groups: &[Vec<String>]) -> Result<Self> {
        let mut group = vec![usize::MAX; wt_ids.len()];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyGroup(g));
            }
            for m in members {
                let k = wt_ids
                    .iter()
                    .position(|id| id == m)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown turbine {m} in group {g}")))?;
                if group[k] != usize::MAX {
                    return Err(Error::InvalidArgument(format!("turbine {m} assigned twice")));
                }
                group[k] = g;
            }
        }
        if let Some(k) = group.iter().position(|g| *g == usize::MAX) {
            return Err(Error::InvalidArgument(format!("turbine {} not assigned", wt_ids[k])));
        }
        let n = wt_ids.len();
        Ok(GroupAssignment {
            wt_ids: wt_ids.to_vec(),
            group,
            n_groups: groups.len(),
            dominant: vec![0; n],
            margin: vec![1.0; n],
            low_margin: Vec::new(),
            tau: 0.0,
            merges: Vec::new(),
        })
    }

    /// Partition as sorted member-id lists, independent of group numbering.
    pub fn partition(&self) -> Vec<Vec<String>> {
        let mut p: Vec<Vec<String>> = (0..self.n_groups)
            .map(|g| {
                let mut m = self.member_ids(g);
                m.sort();
                m
            })
            .collect();
        p.sort();
        p
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalized_distance(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&d) / scale
    }
}

/// Argmax grouping on |F_kc| followed by merging of groups whose centroid
/// feature vectors lie within normalized distance `tau`.
pub fn group_wts(features: &FeatureTable, tau: f64) -> GroupAssignment {
    let n = features.n_wts();
    let nc = features.n_clusters();
    let mags: Vec<Vec<f64>> = (0..n).map(|k| features.magnitudes(k)).collect();
    let mut dominant = Vec::with_capacity(n);
    let mut margin = Vec::with_capacity(n);
    for m in &mags {
        let mut idx: Vec<usize> = (0..nc).collect();
        idx.sort_by(|&a, &b| m[b].total_cmp(&m[a]).then(a.cmp(&b)));
        let top = m[idx[0]];
        let second = idx.get(1).map_or(0.0, |&i| m[i]);
        dominant.push(idx[0]);
        margin.push(if top > 0.0 { (top - second) / top } else { 0.0 });
    }

    // groups are sets of dominant clusters
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for c in 0..nc {
        if dominant.contains(&c) {
            groups.push(vec![c]);
        }
    }
    let centroid = |g: &[usize]| -> Vec<f64> {
        let ks: Vec<usize> = (0..n).filter(|k| g.contains(&dominant[*k])).collect();
        (0..nc)
            .map(|c| ks.iter().map(|&k| mags[k][c]).sum::<f64>() / ks.len() as f64)
            .collect()
    };
    let mut merges = Vec::new();
    loop {
        let cents: Vec<Vec<f64>> = groups.iter().map(|g| centroid(g)).collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let d = normalized_distance(&cents[a], &cents[b]);
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((a, b, d));
                }
            }
        }
        match best {
            Some((a, b, d)) if d < tau => {
                log::info!("merging groups {:?} and {:?} (distance {:.4})", groups[a], groups[b], d);
                merges.push(MergeRecord {
                    a: groups[a].clone(),
                    b: groups[b].clone(),
                    distance: d,
                });
                let moved = groups.remove(b);
                groups[a].extend(moved);
                groups[a].sort_unstable();
            }
            _ => break,
        }
    }

    let raw: Vec<usize> = dominant
        .iter()
        .map(|c| groups.iter().position(|g| g.contains(c)).expect("every cluster grouped"))
        .collect();
    let mut dense = vec![usize::MAX; groups.len()];
    let mut next = 0;
    let group = raw
        .iter()
        .map(|&g| {
            if dense[g] == usize::MAX {
                dense[g] = next;
                next += 1;
            }
            dense[g]
        })
        .collect();
    let low_margin = (0..n)
        .filter(|&k| nc > 1 && margin[k] < LOW_MARGIN)
        .map(|k| features.wt_ids[k].clone())
        .collect();
    GroupAssignment {
        wt_ids: features.wt_ids.clone(),
        group,
        n_groups: next,
        dominant,
        margin,
        low_margin,
        tau,
        merges,
    }
}

#[derive(Debug, Clone, Serialize)]
struct ClusterRecord {
    centre: C64,
    modes: Vec<C64>,
}

#[derive(Debug, Clone, Serialize)]
struct GroupsFile<'a> {
    seed: u64,
    concern_modes: &'a [C64],
    clusters: Vec<ClusterRecord>,
    inertia: f64,
    assignment: &'a GroupAssignment,
}

/// `groups.json`: cluster centres with their modes and the turbine grouping.
pub fn write_groups_json(
    concern: &ConcernSet,
    clusters: &ModeClusters,
    groups: &GroupAssignment,
    seed: u64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = GroupsFile {
        seed,
        concern_modes: &concern.eigenvalues,
        clusters: clusters
            .members
            .iter()
            .zip(&clusters.centres)
            .map(|(m, c)| ClusterRecord {
                centre: *c,
                modes: m.iter().map(|&i| concern.eigenvalues[i]).collect(),
            })
            .collect(),
        inertia: clusters.inertia,
        assignment: groups,
    };
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn concern(points: &[C64]) -> ConcernSet {
        ConcernSet::from_eigenvalues(points.to_vec())
    }

    fn table(rows: &[&[f64]]) -> FeatureTable {
        let n = rows.len();
        let c = rows[0].len();
        FeatureTable {
            wt_ids: (0..n).map(|k| format!("W{k:02}")).collect(),
            f: DMatrix::from_fn(n, c, |i, j| C64::new(rows[i][j], 0.0)),
            row_totals: rows.iter().map(|r| C64::new(r.iter().sum(), 0.0)).collect(),
        }
    }

    #[test]
    fn separated_pairs_on_real_axis() {
        let pts: Vec<C64> = [0.0, 1.0, 10.0, 11.0].iter().map(|x| C64::new(*x, 0.0)).collect();
        let cl = cluster_modes(&concern(&pts), 2, 42).unwrap();
        assert_eq!(cl.members, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(cl.centres, vec![C64::new(0.5, 0.0), C64::new(10.5, 0.0)]);
        assert!((cl.inertia - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_cluster_per_point() {
        let pts = vec![C64::new(-1.0, 10.0), C64::new(-2.0, 9.0), C64::new(-3.0, 12.0)];
        let cl = cluster_modes(&concern(&pts), 3, 7).unwrap();
        assert_eq!(cl.inertia, 0.0);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(cl.centre_of(i), *p);
        }
    }

    #[test]
    fn too_many_clusters() {
        let pts = vec![C64::new(-1.0, 10.0)];
        assert!(matches!(
            cluster_modes(&concern(&pts), 2, 0),
            Err(Error::TooManyClusters { requested: 2, points: 1 })
        ));
        assert!(cluster_modes(&concern(&pts), 0, 0).is_err());
    }

    #[test]
    fn three_bands_are_recovered() {
        let mut pts = Vec::new();
        for (band, re) in [-5.8, -11.6, -17.4].iter().enumerate() {
            for j in 0..11 {
                pts.push(C64::new(re + 0.05 * j as f64, 58.0 + 0.1 * band as f64 - 0.03 * j as f64));
            }
        }
        let cl = cluster_modes(&concern(&pts), 3, 42).unwrap();
        for m in &cl.members {
            assert_eq!(m.len(), 11);
            let band = m[0] / 11;
            assert!(m.iter().all(|i| i / 11 == band));
        }
    }

    #[test]
    fn normalized_clustering_respects_axis_spread() {
        // raw distances are dominated by the imaginary axis
        let pts: Vec<C64> = [(-3.0, 0.0), (-3.0, 5.0), (-3.0, 10.0), (-1.0, 0.0), (-1.0, 5.0), (-1.0, 10.0)]
            .iter()
            .map(|(a, b)| C64::new(*a, *b))
            .collect();
        let raw = cluster_modes(&concern(&pts), 2, 1).unwrap();
        assert_eq!(raw.members, vec![vec![0, 3], vec![1, 2, 4, 5]]);
        let opts = KMeansOptions {
            normalize: true,
            ..Default::default()
        };
        let norm = cluster_modes_with(&concern(&pts), 2, 1, &opts).unwrap();
        assert_eq!(norm.members, vec![vec![0, 1, 2], vec![3, 4, 5]]);
    }

    #[test]
    fn duplicate_points_limit_cluster_count() {
        let pts = vec![C64::new(-1.0, 10.0); 4];
        assert!(matches!(
            cluster_modes(&concern(&pts), 2, 0),
            Err(Error::TooManyClusters { requested: 2, points: 1 })
        ));
        assert_eq!(cluster_modes(&concern(&pts), 1, 0).unwrap().members, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn superposition_conserves_row_totals() {
        let mpf = DMatrix::from_fn(4, 4, |i, j| C64::new((i + 1) as f64 * 0.1, j as f64 * 0.01));
        let cs = ConcernSet::from_eigenvalues(vec![
            C64::new(-1.0, 10.0),
            C64::new(-1.1, 10.0),
            C64::new(-9.0, 10.0),
            C64::new(-9.1, 10.0),
        ]);
        let ids: Vec<String> = vec!["A".into(), "B".into()];
        let one = cluster_modes(&cs, 1, 0).unwrap();
        let f1 = superimpose_mpf(&mpf, &cs, &one, &[0, 2], &ids).unwrap();
        assert_eq!(f1.n_clusters(), 1);
        let two = cluster_modes(&cs, 2, 0).unwrap();
        let f2 = superimpose_mpf(&mpf, &cs, &two, &[0, 2], &ids).unwrap();
        for k in 0..2 {
            let s: C64 = f2.feature_vector(k).iter().sum();
            assert!((s - f1.f[(k, 0)]).norm() < 1e-10);
            assert!((s - f2.row_totals[k]).norm() < 1e-10);
        }
        assert!(superimpose_mpf(&mpf, &cs, &two, &[0], &ids).is_err());
    }

    #[test]
    fn equal_features_form_one_group() {
        let t = table(&[&[0.3, 0.2, 0.1], &[0.3, 0.2, 0.1], &[0.3, 0.2, 0.1]]);
        let g = group_wts(&t, DEFAULT_MERGE_TAU);
        assert_eq!(g.n_groups, 1);
        assert_eq!(g.group, vec![0, 0, 0]);
    }

    #[test]
    fn near_equal_groups_are_merged() {
        // two argmax groups with almost the same centroid
        let t = table(&[&[0.50, 0.49], &[0.49, 0.50], &[0.9, 0.0]]);
        let g = group_wts(&t, DEFAULT_MERGE_TAU);
        assert_eq!(g.dominant, vec![0, 1, 0]);
        assert_eq!(g.n_groups, 2);
        assert_eq!(g.group[0], g.group[2]);
        let strict = group_wts(&t, 0.0);
        assert!(strict.merges.is_empty());
        assert_eq!(strict.n_groups, 2);
    }

    #[test]
    fn distinct_groups_and_dense_ids() {
        let t = table(&[&[0.0, 0.9, 0.0], &[0.9, 0.0, 0.0], &[0.0, 0.0, 0.9], &[0.0, 0.8, 0.1]]);
        let g = group_wts(&t, DEFAULT_MERGE_TAU);
        assert_eq!(g.group, vec![0, 1, 2, 0]);
        assert_eq!(g.member_ids(0), vec!["W00".to_string(), "W03".to_string()]);
    }

    #[test]
    fn split_dominance_is_flagged() {
        let t = table(&[&[0.5, 0.5], &[0.9, 0.0], &[0.0, 0.9]]);
        let g = group_wts(&t, DEFAULT_MERGE_TAU);
        assert_eq!(g.dominant[0], 0);
        assert_eq!(g.margin[0], 0.0);
        assert_eq!(g.low_margin, vec!["W00".to_string()]);
    }

    #[test]
    fn explicit_groups() {
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let g = GroupAssignment::from_members(&ids, &[vec!["c".into()], vec!["a".into(), "b".into()]]).unwrap();
        assert_eq!(g.group, vec![1, 1, 0]);
        assert!(GroupAssignment::from_members(&ids, &[vec!["a".into()]]).is_err());
        assert!(GroupAssignment::from_members(&ids, &[vec![], vec!["a".into(), "b".into(), "c".into()]]).is_err());
        assert_eq!(GroupAssignment::singletons(&ids).n_groups, 3);
    }

    #[test]
    fn groups_json_roundtrips_assignment() {
        let pts = vec![C64::new(-1.0, 10.0), C64::new(-5.0, 10.0)];
        let cs = concern(&pts);
        let cl = cluster_modes(&cs, 2, 42).unwrap();
        let t = table(&[&[0.9, 0.1], &[0.1, 0.9]]);
        let g = group_wts(&t, DEFAULT_MERGE_TAU);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("groups.json");
        write_groups_json(&cs, &cl, &g, 42, &p).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        let back: GroupAssignment = serde_json::from_value(v["assignment"].clone()).unwrap();
        assert_eq!(back, g);
        assert_eq!(v["clusters"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn features_csv_layout() {
        let t = table(&[&[0.9, 0.1], &[0.1, 0.9]]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("features.csv");
        t.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("wt_id,c0_abs,c0_re,c0_im,c1_abs"));
        assert_eq!(text.lines().count(), 3);
    }

    fn points_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-30.0..0.0f64, 0.0..80.0f64), 3..24)
    }

    proptest! {
        #[test]
        fn lloyd_inertia_never_increases(pts in points_strategy(), k in 1usize..4, seed in 0u64..1000) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a, b]).collect();
            let k = k.min(pts.len());
            let run = kmeans_single(&pts, k, seed, 0, DEFAULT_MAX_ITER);
            for w in run.history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
        }

        #[test]
        fn restarts_beat_every_single_run(pts in points_strategy(), k in 1usize..4, seed in 0u64..1000) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a, b]).collect();
            let k = k.min(pts.len());
            let opts = KMeansOptions { restarts: 8, ..Default::default() };
            let best = kmeans(&pts, k, seed, &opts).unwrap();
            for r in 0..8 {
                let single = kmeans_single(&pts, k, seed, r, DEFAULT_MAX_ITER);
                prop_assert!(best.inertia <= single.inertia * (1.0 + 1e-12) + 1e-12);
            }
            // evaluating the same restarts again reproduces the result
            prop_assert_eq!(kmeans(&pts, k, seed, &opts).unwrap(), best);
        }

        #[test]
        fn grouping_is_scale_invariant(rows in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 3), 2..10), s in 0.01..100.0f64) {
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let t = table(&refs);
            let mut scaled = t.clone();
            scaled.f *= C64::new(s, 0.0);
            let a = group_wts(&t, DEFAULT_MERGE_TAU);
            let b = group_wts(&scaled, DEFAULT_MERGE_TAU);
            prop_assert_eq!(a.group, b.group);
        }

        #[test]
        fn centres_are_member_means(pts in points_strategy(), k in 1usize..4) {
            let pts: Vec<C64> = pts.into_iter().map(|(a, b)| C64::new(a, b)).collect();
            let k = k.min(pts.len());
            let cl = cluster_modes(&concern(&pts), k, 3).unwrap();
            let mut seen = vec![false; pts.len()];
            for (c, m) in cl.members.iter().enumerate() {
                let mean: C64 = m.iter().map(|&i| pts[i]).sum::<C64>() / m.len() as f64;
                prop_assert!((mean - cl.centres[c]).norm() < 1e-9);
                for &i in m { prop_assert!(!seen[i]); seen[i] = true; }
            }
            prop_assert!(seen.iter().all(|s| *s));
        }
    }
}
