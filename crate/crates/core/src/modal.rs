//! Dense modal analysis: eigenvalues, biorthonormal eigenvectors and
//! modal participation factors (MPFs).

use std::path::Path;

use faer::Mat;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::assembly::StateLabel;
use crate::error::{Error, Result};
use crate::farm::C64;
use crate::wt::StateKind;

/// Condition estimate of the eigenvector matrix above which the matrix is
/// treated as defective.
pub const DEFECTIVE_CONDITION: f64 = 1e10;

#[derive(Debug, Clone)]
pub struct ModalSolution {
    pub eigenvalues: Vec<C64>,
    /// Right eigenvectors as unit-norm columns, largest entry real positive.
    pub right: DMatrix<C64>,
    /// Left eigenvectors as rows, scaled so that `left.row(i) * right.column(i) = 1`.
    pub left: DMatrix<C64>,
    /// `mpf[(k, i)]` is the participation of state `k` in mode `i`.
    pub mpf: DMatrix<C64>,
    /// Index of each mode's complex conjugate (itself for real modes).
    pub conjugate: Vec<usize>,
    pub condition: f64,
}

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Eigenvalues only.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    to_faer(a)
        .eigenvalues()
        .map_err(|e| Error::Eigen(format!("{e:?}")))
}

pub fn eig_biorthogonal(a: &DMatrix<f64>) -> Result<ModalSolution> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension(format!("state matrix is {}x{}", n, a.ncols())));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::Eigen("state matrix has non-finite entries".into()));
    }
    let evd = to_faer(a).eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let eigenvalues: Vec<C64> = (0..n).map(|i| s[i]).collect();

    let mut right = DMatrix::<C64>::from_fn(n, n, |i, j| u[(i, j)]);
    for mut col in right.column_iter_mut() {
        let norm = col.norm();
        if norm == 0.0 {
            return Err(Error::Defective { condition: f64::INFINITY });
        }
        col /= C64::new(norm, 0.0);
        let max = col.iter().map(|c| c.norm()).fold(0.0, f64::max);
        // first entry within rounding of the maximum, so ties resolve the
        // same way on every platform
        let pivot = col
            .iter()
            .find(|c| c.norm() >= max * (1.0 - 1e-9))
            .copied()
            .expect("non-empty column");
        col *= pivot.conj() / pivot.norm();
    }

    let mut left = right
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::Defective { condition: f64::INFINITY })?;
    let condition = right.norm() * left.norm() / n.max(1) as f64;
    if !(condition < DEFECTIVE_CONDITION) {
        return Err(Error::Defective { condition });
    }
    for i in 0..n {
        let s = (left.row(i) * right.column(i))[(0, 0)];
        let mut row = left.row_mut(i);
        row /= s;
    }

    let mpf = participation(&left, &right);
    let conjugate = conjugate_index(&eigenvalues);
    Ok(ModalSolution {
        eigenvalues,
        right,
        left,
        mpf,
        conjugate,
        condition,
    })
}

fn participation(left: &DMatrix<C64>, right: &DMatrix<C64>) -> DMatrix<C64> {
    let n = right.nrows();
    DMatrix::from_fn(n, n, |k, i| left[(i, k)] * right[(k, i)])
}

/// `f_ki = V_ik U_ki` for every state `k` and mode `i`.
pub fn participation_matrix(sol: &ModalSolution) -> DMatrix<C64> {
    participation(&sol.left, &sol.right)
}

fn conjugate_index(eig: &[C64]) -> Vec<usize> {
    let n = eig.len();
    let mut conj = vec![usize::MAX; n];
    for i in 0..n {
        if conj[i] != usize::MAX {
            continue;
        }
        let scale = eig[i].norm().max(1.0);
        if eig[i].im.abs() <= 1e-9 * scale {
            conj[i] = i;
            continue;
        }
        let target = eig[i].conj();
        let j = (0..n)
            .filter(|&j| j != i && conj[j] == usize::MAX)
            .min_by(|&a, &b| (eig[a] - target).norm().total_cmp(&(eig[b] - target).norm()))
            .unwrap_or(i);
        conj[i] = j;
        conj[j] = i;
    }
    conj
}

impl ModalSolution {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `|A U_i - lambda_i U_i|` per mode.
    pub fn residuals(&self, a: &DMatrix<f64>) -> Vec<f64> {
        let ac = a.map(|v| C64::new(v, 0.0));
        let au = &ac * &self.right;
        (0..self.n())
            .map(|i| (au.column(i) - self.right.column(i) * self.eigenvalues[i]).norm())
            .collect()
    }

    /// `|V_i U_j - delta_ij|` maximum.
    pub fn biorthogonality_error(&self) -> f64 {
        let p = &self.left * &self.right;
        let n = self.n();
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((p[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        err
    }

    /// Zero-input response `x(t) = sum_i U_i (V_i x0) e^{lambda_i t}`.
    pub fn free_response(&self, x0: &[f64], t: f64) -> Vec<f64> {
        let n = self.n();
        let mut x = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut c = C64::new(0.0, 0.0);
            for (k, v) in x0.iter().enumerate() {
                c += self.left[(i, k)] * *v;
            }
            let w = c * (self.eigenvalues[i] * t).exp();
            for k in 0..n {
                x[k] += self.right[(k, i)] * w;
            }
        }
        x.iter().map(|c| c.re).collect()
    }

    /// Sequential id per conjugate pair, in order of first appearance.
    pub fn pair_ids(&self) -> Vec<usize> {
        let mut ids = vec![usize::MAX; self.n()];
        let mut next = 0;
        for i in 0..self.n() {
            if ids[i] == usize::MAX {
                ids[i] = next;
                ids[self.conjugate[i]] = next;
                next += 1;
            }
        }
        ids
    }
}

pub fn frequency_hz(l: C64) -> f64 {
    l.im.abs() / (2.0 * std::f64::consts::PI)
}

pub fn damping_ratio(l: C64) -> f64 {
    let n = l.norm();
    if n == 0.0 {
        0.0
    } else {
        -l.re / n
    }
}

/// Representative (upper half-plane) modes chosen as the modes of concern.
#[derive(Debug, Clone, Serialize)]
pub struct ConcernSet {
    /// Indices into `ModalSolution::eigenvalues`.
    pub modes: Vec<usize>,
    #[serde(skip)]
    pub eigenvalues: Vec<C64>,
    pub filter: Vec<StateKind>,
    /// Summed |MPF| over the filtered states, per selected mode.
    pub scores: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ConcernSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// A concern set made of plain eigenvalues, without a backing solution.
    pub fn from_eigenvalues(eigenvalues: Vec<C64>) -> Self {
        ConcernSet {
            modes: (0..eigenvalues.len()).collect(),
            scores: vec![0.0; eigenvalues.len()],
            eigenvalues,
            filter: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

/// Picks the `n_expected` oscillatory pairs with the largest summed |MPF|
/// over the states of the given kinds. The result is ordered by
/// (real part, imaginary part).
pub fn select_concern_modes(
    sol: &ModalSolution,
    labels: &[StateLabel],
    n_expected: usize,
    filter: &[StateKind],
) -> Result<ConcernSet> {
    let states: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| filter.contains(&l.kind))
        .map(|(k, _)| k)
        .collect();
    let mut candidates: Vec<(usize, f64)> = (0..sol.n())
        .filter(|&i| {
            let l = sol.eigenvalues[i];
            l.im > 1e-9 * l.norm().max(1.0)
        })
        .map(|i| (i, states.iter().map(|&k| sol.mpf[(k, i)].norm()).sum()))
        .collect();
    if candidates.len() < n_expected {
        return Err(Error::NotEnoughModes {
            found: candidates.len(),
            requested: n_expected,
        });
    }
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    candidates.truncate(n_expected);
    candidates.sort_by(|a, b| {
        let (la, lb) = (sol.eigenvalues[a.0], sol.eigenvalues[b.0]);
        la.re.total_cmp(&lb.re).then(la.im.total_cmp(&lb.im)).then(a.0.cmp(&b.0))
    });

    let mut warnings = Vec::new();
    let mut freqs: Vec<f64> = candidates.iter().map(|c| frequency_hz(sol.eigenvalues[c.0])).collect();
    freqs.sort_by(f64::total_cmp);
    if let Some(&median) = freqs.get(freqs.len() / 2) {
        for &(i, _) in &candidates {
            let f = frequency_hz(sol.eigenvalues[i]);
            if f < 0.2 * median || f > 5.0 * median {
                let msg = format!(
                    "selected mode {} at {:.3} Hz is far from the median selected frequency {:.3} Hz",
                    i, f, median
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    Ok(ConcernSet {
        modes: candidates.iter().map(|c| c.0).collect(),
        eigenvalues: candidates.iter().map(|c| sol.eigenvalues[c.0]).collect(),
        filter: filter.to_vec(),
        scores: candidates.iter().map(|c| c.1).collect(),
        warnings,
    })
}

/// `modes.csv`: one row per eigenvalue.
pub fn write_modes_csv(sol: &ModalSolution, concern: &ConcernSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["re", "im", "freq_hz", "damping_ratio", "pair_id", "selected"])?;
    let pairs = sol.pair_ids();
    for (i, l) in sol.eigenvalues.iter().enumerate() {
        w.write_record([
            format!("{:.12e}", l.re),
            format!("{:.12e}", l.im),
            format!("{:.9}", frequency_hz(*l)),
            format!("{:.9}", damping_ratio(*l)),
            pairs[i].to_string(),
            u8::from(concern.modes.contains(&i)).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `mpf.csv`: state rows, and per mode `abs`, `re`, `im` columns.
pub fn write_mpf_csv(sol: &ModalSolution, labels: &[StateLabel], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["state".to_string()];
    for i in 0..sol.n() {
        header.push(format!("m{i}_abs"));
        header.push(format!("m{i}_re"));
        header.push(format!("m{i}_im"));
    }
    w.write_record(&header)?;
    for (k, label) in labels.iter().enumerate() {
        let mut row = vec![label.to_string()];
        for i in 0..sol.n() {
            let f = sol.mpf[(k, i)];
            row.push(format!("{:.9e}", f.norm()));
            row.push(format!("{:.9e}", f.re));
            row.push(format!("{:.9e}", f.im));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
