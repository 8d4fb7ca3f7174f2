//! Whole-farm linearized model: per-turbine blocks closed through the
//! collector network.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::farm::FarmDescription;
use crate::network::{build_network_matrices, NetworkMatrices};
use crate::powerflow::{operating_points, solve_powerflow, BusSolution};
use crate::wt::{linearize_wt, StateKind, WtStateSpace, N_STATES};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct StateLabel {
    pub wt_id: String,
    pub kind: StateKind,
}

impl std::fmt::Display for StateLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.wt_id, self.kind.short())
    }
}

/// Closed-loop farm model `dx = a_s x + b_s de` where `de` is the
/// infinite-bus voltage deviation (XY frame), plus linear output maps.
#[derive(Debug, Clone)]
pub struct FarmStateSpace {
    pub a_s: DMatrix<f64>,
    pub b_s: DMatrix<f64>,
    pub labels: Vec<StateLabel>,
    pub wt_ids: Vec<String>,
    /// Turbine ratings (MVA), used for capacity weighting.
    pub ratings_mva: Vec<f64>,
    /// `di = i_x x + i_e de` (2N rows).
    pub i_x: DMatrix<f64>,
    pub i_e: DMatrix<f64>,
    /// `du = u_x x + u_e de` (2N rows).
    pub u_x: DMatrix<f64>,
    pub u_e: DMatrix<f64>,
    /// POI voltage and total injected current deviations (2 rows each).
    pub poi_u_x: DMatrix<f64>,
    pub poi_u_e: DMatrix<f64>,
    pub poi_i_x: DMatrix<f64>,
    pub poi_i_e: DMatrix<f64>,
    /// Steady POI voltage and current (XY, system p.u.).
    pub poi_u0: [f64; 2],
    pub poi_i0: [f64; 2],
    /// Steady infinite-bus voltage magnitude.
    pub source_e: f64,
}

impl FarmStateSpace {
    pub fn n_states(&self) -> usize {
        self.a_s.nrows()
    }

    pub fn n_wts(&self) -> usize {
        self.wt_ids.len()
    }

    pub fn state_index(&self, wt: usize, kind: StateKind) -> usize {
        N_STATES * wt + kind.index()
    }

    /// Row-major CSV dump of `a_s` with labeled rows and columns.
    pub fn write_a_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("state");
        for l in &self.labels {
            out.push(',');
            out.push_str(&l.to_string());
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&l.to_string());
            for j in 0..self.n_states() {
                out.push_str(&format!(",{:.12e}", self.a_s[(i, j)]));
            }
            out.push('\n');
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Block-diagonal `(A, B, C, D)` of the stacked turbines.
pub fn stack_blocks(blocks: &[WtStateSpace]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = blocks.len();
    let mut a = DMatrix::zeros(4 * n, 4 * n);
    let mut b = DMatrix::zeros(4 * n, 2 * n);
    let mut c = DMatrix::zeros(2 * n, 4 * n);
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    for (k, blk) in blocks.iter().enumerate() {
        a.view_mut((4 * k, 4 * k), (4, 4)).copy_from(&blk.a);
        b.view_mut((4 * k, 2 * k), (4, 2)).copy_from(&blk.b);
        c.view_mut((2 * k, 4 * k), (2, 4)).copy_from(&blk.c);
        d.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&blk.d);
    }
    (a, b, c, d)
}

/// Closes the turbines through `du = Z di + K de` using
/// `A_s = A + B (I - Z D)^-1 Z C`.
pub fn assemble_farm(
    wt_ids: &[String],
    ratings_mva: &[f64],
    blocks: &[WtStateSpace],
    net: &NetworkMatrices,
) -> Result<FarmStateSpace> {
    let n = blocks.len();
    if net.n_wts() != n || wt_ids.len() != n || ratings_mva.len() != n {
        return Err(Error::Dimension(format!(
            "{} blocks, {} ids, {} ratings for a network with {} terminals",
            n,
            wt_ids.len(),
            ratings_mva.len(),
            net.n_wts()
        )));
    }
    let (a, b, c, d) = stack_blocks(blocks);
    let eye = DMatrix::<f64>::identity(2 * n, 2 * n);
    let m = (&eye - &net.z * &d)
        .lu()
        .try_inverse()
        .ok_or(Error::SingularClosure)?;
    let u_x = &m * &net.z * &c;
    let u_e = &m * &net.k_src;
    let a_s = &a + &b * &u_x;
    let b_s = &b * &u_e;
    let i_x = &c + &d * &u_x;
    let i_e = &d * &u_e;

    // total current leaving through the POI is the sum of injections
    let mut sum = DMatrix::<f64>::zeros(2, 2 * n);
    for k in 0..n {
        sum[(0, 2 * k)] = 1.0;
        sum[(1, 2 * k + 1)] = 1.0;
    }
    let poi_i_x = &sum * &i_x;
    let poi_i_e = &sum * &i_e;
    let poi_u_x = &net.z_poi * &i_x;
    let poi_u_e = &net.z_poi * &i_e + &net.k_poi;

    let labels = wt_ids
        .iter()
        .flat_map(|id| {
            StateKind::ALL.into_iter().map(move |kind| StateLabel {
                wt_id: id.clone(),
                kind,
            })
        })
        .collect();

    Ok(FarmStateSpace {
        a_s,
        b_s,
        labels,
        wt_ids: wt_ids.to_vec(),
        ratings_mva: ratings_mva.to_vec(),
        i_x,
        i_e,
        u_x,
        u_e,
        poi_u_x,
        poi_u_e,
        poi_i_x,
        poi_i_e,
        poi_u0: [1.0, 0.0],
        poi_i0: [0.0, 0.0],
        source_e: 1.0,
    })
}

/// `A + B (Y - D)^-1 C` with `Y = Z^-1`; only defined when `Z` is
/// invertible. Kept as an independent route to the closed-loop matrix.
pub fn closure_admittance_form(blocks: &[WtStateSpace], net: &NetworkMatrices) -> Result<DMatrix<f64>> {
    let (a, b, c, d) = stack_blocks(blocks);
    let y = net
        .z
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularNetwork("Z is not invertible".into()))?;
    let inner = (y - d).lu().try_inverse().ok_or(Error::SingularClosure)?;
    Ok(a + b * inner * c)
}

/// Power flow, per-turbine linearization and closure for a whole farm.
#[derive(Debug, Clone)]
pub struct LinearizedFarm {
    pub flows: BusSolution,
    pub blocks: Vec<WtStateSpace>,
    pub net: NetworkMatrices,
    pub fss: FarmStateSpace,
}

pub fn linearize_farm(farm: &FarmDescription) -> Result<LinearizedFarm> {
    let flows = solve_powerflow(farm)?;
    let ops = operating_points(farm, &flows)?;
    let blocks: Vec<WtStateSpace> = farm
        .wts
        .iter()
        .zip(&ops)
        .map(|(wt, op)| linearize_wt(wt, op, &farm.bases))
        .collect();
    let net = build_network_matrices(farm)?;
    let ids: Vec<String> = farm.wts.iter().map(|w| w.id.clone()).collect();
    let ratings: Vec<f64> = farm.wts.iter().map(|w| w.rating(&farm.bases)).collect();
    let mut fss = assemble_farm(&ids, &ratings, &blocks, &net)?;
    let u_poi = flows.voltage[farm.poi_index()];
    fss.poi_u0 = [u_poi.re, u_poi.im];
    fss.poi_i0 = [flows.grid_current.re, flows.grid_current.im];
    fss.source_e = farm.grid.e_pu;
    Ok(LinearizedFarm {
        flows,
        blocks,
        net,
        fss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::farm::C64;
    use crate::modal::eigenvalues;
    use crate::powerflow::operating_point_at;
    use crate::testutil::{bases, max_spectrum_distance, two_wt_farm, wt};
    use crate::wt::{stiff_grid_mode, DvcMode};

    fn net_from_complex(z: DMatrix<C64>) -> NetworkMatrices {
        let n = z.nrows();
        NetworkMatrices {
            z: crate::network::real_blocks(&z),
            k_src: crate::network::real_blocks(&DMatrix::from_element(n, 1, C64::new(1.0, 0.0))),
            z_poi: DMatrix::zeros(2, 2 * n),
            k_poi: DMatrix::identity(2, 2),
            z_complex: z,
        }
    }

    /// Descriptor-form oracle: with w = [du; di], the algebraic rows
    /// `du - Z di = 0` and `di - C x - D du = 0` are solved for every
    /// state column and substituted into `dx = A x + B du`.
    fn descriptor_elimination(blocks: &[WtStateSpace], z: &DMatrix<f64>) -> DMatrix<f64> {
        let (a, b, c, d) = stack_blocks(blocks);
        let n2 = z.nrows();
        let ns = a.nrows();
        let mut g = DMatrix::<f64>::zeros(2 * n2, 2 * n2);
        g.view_mut((0, 0), (n2, n2)).fill_with_identity();
        g.view_mut((0, n2), (n2, n2)).copy_from(&(-z));
        g.view_mut((n2, 0), (n2, n2)).copy_from(&(-&d));
        g.view_mut((n2, n2), (n2, n2)).fill_with_identity();
        let lu = g.lu();
        let mut out = DMatrix::<f64>::zeros(ns, ns);
        for j in 0..ns {
            let mut rhs = nalgebra::DVector::<f64>::zeros(2 * n2);
            rhs.rows_mut(n2, n2).copy_from(&c.column(j));
            let w = lu.solve(&rhs).unwrap();
            let du = w.rows(0, n2).into_owned();
            let col = a.column(j) + &b * du;
            out.set_column(j, &col);
        }
        out
    }

    #[test]
    fn single_wt_on_thevenin_matches_direct_model() {
        let farm = two_wt_farm(0.0);
        let mut one = farm.clone();
        one.wts.truncate(1);
        let lin = linearize_farm(&one).unwrap();
        assert_eq!(lin.fss.n_states(), 4);
        let direct = descriptor_elimination(&lin.blocks, &lin.net.z);
        let d = max_spectrum_distance(&eigenvalues(&lin.fss.a_s).unwrap(), &eigenvalues(&direct).unwrap());
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn ideal_network_gives_identical_stiff_copies() {
        let bases = bases();
        let w = wt("W", "B");
        let op = operating_point_at(C64::new(1.0, 0.0), &w, &bases).unwrap();
        let blk = linearize_wt(&w, &op, &bases);
        let blocks = vec![blk.clone(), blk.clone(), blk];
        let net = net_from_complex(DMatrix::from_element(3, 3, C64::new(0.0, 0.0)));
        let ids: Vec<String> = (0..3).map(|i| format!("W{i}")).collect();
        let fss = assemble_farm(&ids, &[1.5; 3], &blocks, &net).unwrap();
        let (a, ..) = stack_blocks(&blocks);
        assert_eq!(fss.a_s, a);
        let DvcMode::Oscillatory(l) = stiff_grid_mode(&w, &op, &bases) else { panic!() };
        let eig = eigenvalues(&fss.a_s).unwrap();
        assert_eq!(eig.iter().filter(|e| (*e - l).norm() < 1e-9).count(), 3);
    }

    #[test]
    fn two_wt_closure_matches_descriptor_elimination() {
        let lin = linearize_farm(&two_wt_farm(2.0)).unwrap();
        let direct = descriptor_elimination(&lin.blocks, &lin.net.z);
        let ea = eigenvalues(&lin.fss.a_s).unwrap();
        let eb = eigenvalues(&direct).unwrap();
        assert!(max_spectrum_distance(&ea, &eb) < 1e-10);
        // admittance form agrees as well
        let ay = closure_admittance_form(&lin.blocks, &lin.net).unwrap();
        let ec = eigenvalues(&ay).unwrap();
        assert!(max_spectrum_distance(&ea, &ec) < 1e-10);
    }

    #[test]
    fn spectrum_is_conjugate_closed_and_permutation_invariant() {
        let farm = two_wt_farm(2.0);
        let lin = linearize_farm(&farm).unwrap();
        let eig = eigenvalues(&lin.fss.a_s).unwrap();
        let conj: Vec<C64> = eig.iter().map(|e| e.conj()).collect();
        assert!(max_spectrum_distance(&eig, &conj) < 1e-9);

        let mut swapped = farm.clone();
        swapped.wts.swap(0, 1);
        let lin2 = linearize_farm(&swapped).unwrap();
        assert_eq!(lin2.fss.labels[0].wt_id, farm.wts[1].id);
        let eig2 = eigenvalues(&lin2.fss.a_s).unwrap();
        assert!(max_spectrum_distance(&eig, &eig2) < 1e-9);
    }

    #[test]
    fn labels_are_unique() {
        let lin = linearize_farm(&two_wt_farm(1.0)).unwrap();
        let set: std::collections::HashSet<_> = lin.fss.labels.iter().collect();
        assert_eq!(set.len(), lin.fss.n_states());
        assert_eq!(lin.fss.labels[4].to_string(), "WT02:u_dc");
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let lin = linearize_farm(&two_wt_farm(1.0)).unwrap();
        let r = assemble_farm(&lin.fss.wt_ids[..1], &[1.5], &lin.blocks[..1], &lin.net);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn a_matrix_dump_is_labeled() {
        let lin = linearize_farm(&two_wt_farm(1.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        lin.fss.write_a_csv(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("state,WT01:u_dc,WT01:x_dvc"));
        assert_eq!(text.lines().count(), 9);
    }
}
