//! Per-unit aggregation of turbine groups and collector-network
//! equivalencing.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::assembly::{linearize_farm, LinearizedFarm};
use crate::clustering::GroupAssignment;
use crate::error::{Error, Result};
use crate::farm::{Branch, Bus, FarmDescription, Provenance, ProvenanceGroup, WtParams, C64};
use crate::modal::{eig_biorthogonal, select_concern_modes, ConcernSet, ModalSolution};
use crate::network::Topology;
use crate::wt::StateKind;

/// Length given to every equivalent branch; the per-km data carry the
/// impedance.
const EQ_BRANCH_KM: f64 = 1.0;

pub fn aggregate_id(g: usize) -> String {
    format!("EQ{:02}", g + 1)
}

fn aggregate_bus(g: usize) -> String {
    format!("{}_BUS", aggregate_id(g))
}

/// SHA-256 of the canonical JSON form of a farm.
pub fn farm_sha256(farm: &FarmDescription) -> String {
    let digest = Sha256::digest(farm.to_json_pretty().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn check_groups(farm: &FarmDescription, groups: &GroupAssignment) -> Result<()> {
    let ids: Vec<&str> = farm.wts.iter().map(|w| w.id.as_str()).collect();
    let assigned: Vec<&str> = groups.wt_ids.iter().map(String::as_str).collect();
    if ids != assigned {
        return Err(Error::InvalidArgument(
            "group assignment does not list the farm's turbines in farm order".into(),
        ));
    }
    if let Some(&g) = groups.group.iter().find(|&&g| g >= groups.n_groups) {
        return Err(Error::InvalidArgument(format!("group id {g} out of range")));
    }
    Ok(())
}

/// One machine per group: ratings add up, per-unit parameters are
/// capacity-weighted means and the power is conserved in MW.
pub fn aggregate_wts(farm: &FarmDescription, groups: &GroupAssignment) -> Result<Vec<WtParams>> {
    check_groups(farm, groups)?;
    let bases = &farm.bases;
    (0..groups.n_groups)
        .map(|g| {
            let members: Vec<&WtParams> = groups.members(g).into_iter().map(|k| &farm.wts[k]).collect();
            if members.is_empty() {
                return Err(Error::EmptyGroup(g));
            }
            let rating: f64 = members.iter().map(|w| w.rating(bases)).sum();
            let mean = |f: &dyn Fn(&WtParams) -> f64| {
                members.iter().map(|w| w.rating(bases) * f(w)).sum::<f64>() / rating
            };
            Ok(WtParams {
                id: aggregate_id(g),
                bus: aggregate_bus(g),
                p_m0_pu: mean(&|w| w.p_m0_pu),
                // physical capacitances add, so c_pu is the weighted mean
                c_dc_f: members.iter().map(|w| w.c_dc_f).sum(),
                u_dc0_pu: mean(&|w| w.u_dc0_pu),
                kp_dvc_pu: mean(&|w| w.kp_dvc_pu),
                ki_dvc_pu: mean(&|w| w.ki_dvc_pu),
                kp_pll_pu: mean(&|w| w.kp_pll_pu),
                ki_pll_pu: mean(&|w| w.ki_pll_pu),
                rating_mva: Some(rating),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalentBranch {
    pub aggregate_id: String,
    /// System per unit.
    pub z_pu: C64,
    /// Active power of the group (system per unit).
    pub p_pu: f64,
    pub warning: Option<String>,
}

/// Branch currents (farm branches only) for the given bus injections with
/// the infinite bus shorted.
fn branch_currents(topo: &Topology, bus_current: &[C64]) -> Result<Vec<C64>> {
    let m = topo.n_nodes - 1;
    let mut node_current = nalgebra::DVector::from_element(m, C64::new(0.0, 0.0));
    for (b, i) in bus_current.iter().enumerate() {
        let n = topo.node_of_bus(b);
        if n != 0 {
            node_current[n - 1] += i;
        }
    }
    let v = if m == 0 {
        node_current
    } else {
        topo.y
            .clone()
            .lu()
            .solve(&node_current)
            .ok_or_else(|| Error::SingularNetwork("nodal admittance is not invertible".into()))?
    };
    let mut node_voltage = vec![C64::new(0.0, 0.0)];
    node_voltage.extend(v.iter().copied());
    Ok(topo.edge_currents(&node_voltage, bus_current)[1..].to_vec())
}

/// Equal-loss equivalent impedance of every group:
/// `Z_g = sum_b Z_b |I_b,g|^2 / P_g^2`, where `I_b,g` is the branch current
/// when only group `g` injects, each member injecting a current equal to
/// its active power (uniform voltage).
pub fn equivalent_network(farm: &FarmDescription, groups: &GroupAssignment) -> Result<Vec<EquivalentBranch>> {
    check_groups(farm, groups)?;
    let topo = Topology::new(farm);
    let wt_bus = farm.wt_bus_indices();
    let z_branch: Vec<C64> = farm.branches.iter().map(|b| farm.branch_impedance_pu(b)).collect();
    (0..groups.n_groups)
        .map(|g| {
            let members = groups.members(g);
            if members.is_empty() {
                return Err(Error::EmptyGroup(g));
            }
            let mut inj = vec![C64::new(0.0, 0.0); farm.buses.len()];
            let mut p = 0.0;
            for &k in &members {
                let w = &farm.wts[k];
                let pk = w.p_m0_pu * w.scale(&farm.bases);
                inj[wt_bus[k]] += C64::new(pk, 0.0);
                p += pk;
            }
            if !(p.abs() > 1e-12) {
                let msg = format!("group {} carries no power, tied to the POI directly", aggregate_id(g));
                log::warn!("{msg}");
                return Ok(EquivalentBranch {
                    aggregate_id: aggregate_id(g),
                    z_pu: C64::new(0.0, 0.0),
                    p_pu: p,
                    warning: Some(msg),
                });
            }
            let currents = branch_currents(&topo, &inj)?;
            let loss: C64 = z_branch.iter().zip(&currents).map(|(z, i)| z * i.norm_sqr()).sum();
            Ok(EquivalentBranch {
                aggregate_id: aggregate_id(g),
                z_pu: loss / (p * p),
                p_pu: p,
                warning: None,
            })
        })
        .collect()
}

/// The aggregated farm: a star of equivalent branches at the POI behind
/// the original grid.
pub fn aggregate_farm(farm: &FarmDescription, groups: &GroupAssignment) -> Result<FarmDescription> {
    let wts = aggregate_wts(farm, groups)?;
    let eq = equivalent_network(farm, groups)?;
    let poi = farm.buses[farm.poi_index()].id.clone();
    let zb = farm.bases.z_base_ohm();
    let w = farm.bases.omega_grid();
    let mut buses = vec![Bus {
        id: poi.clone(),
        poi: true,
    }];
    let mut branches = Vec::new();
    for (g, e) in eq.iter().enumerate() {
        buses.push(Bus {
            id: aggregate_bus(g),
            poi: false,
        });
        branches.push(Branch {
            from_bus: poi.clone(),
            to_bus: aggregate_bus(g),
            length_km: EQ_BRANCH_KM,
            r_ohm_per_km: e.z_pu.re * zb / EQ_BRANCH_KM,
            l_h_per_km: e.z_pu.im * zb / (w * EQ_BRANCH_KM),
        });
    }
    let provenance = Provenance {
        source_sha256: farm_sha256(farm),
        groups: (0..groups.n_groups)
            .map(|g| ProvenanceGroup {
                aggregate_id: aggregate_id(g),
                members: groups.member_ids(g),
            })
            .collect(),
    };
    let dem = FarmDescription {
        bases: farm.bases.clone(),
        buses,
        branches,
        wts,
        grid: farm.grid.clone(),
        provenance: Some(provenance),
    };
    dem.validate()?;
    Ok(dem)
}

#[derive(Debug, Clone)]
pub struct DemModel {
    pub farm: FarmDescription,
    pub groups: GroupAssignment,
    pub equivalents: Vec<EquivalentBranch>,
    pub lin: LinearizedFarm,
    pub modal: ModalSolution,
    /// One DC-voltage mode per aggregate machine.
    pub concern: ConcernSet,
}

impl DemModel {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.farm.to_json_pretty() + "\n").map_err(|e| Error::io(path, e))
    }

    /// Maps detailed turbine index to aggregate index.
    pub fn aggregate_of(&self) -> Vec<usize> {
        self.groups.group.clone()
    }
}

/// Aggregates, then runs power flow, linearization and modal analysis on
/// the aggregated farm.
pub fn build_dem(farm: &FarmDescription, groups: &GroupAssignment) -> Result<DemModel> {
    let dem = aggregate_farm(farm, groups)?;
    let equivalents = equivalent_network(farm, groups)?;
    let lin = linearize_farm(&dem)?;
    let modal = eig_biorthogonal(&lin.fss.a_s)?;
    let concern = select_concern_modes(&modal, &lin.fss.labels, groups.n_groups, &[StateKind::DcVoltage])?;
    Ok(DemModel {
        farm: dem,
        groups: groups.clone(),
        equivalents,
        lin,
        modal,
        concern,
    })
}

/// Capacity weights of each group's members, normalized per group.
pub fn group_weights(farm: &FarmDescription, groups: &GroupAssignment) -> DMatrix<f64> {
    let n = farm.wts.len();
    let mut w = DMatrix::zeros(groups.n_groups, n);
    for k in 0..n {
        w[(groups.group[k], k)] = farm.wts[k].rating(&farm.bases);
    }
    for g in 0..groups.n_groups {
        let s: f64 = w.row(g).sum();
        if s > 0.0 {
            w.row_mut(g).unscale_mut(s);
        }
    }
    w
}
