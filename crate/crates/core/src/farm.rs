//! Farm description: the input world model.
//!
//! A farm is a set of buses joined by series branches, one point of
//! interconnection (POI) tied to an infinite bus through a Thevenin
//! impedance, and a set of full-converter turbines sitting on buses.
//!
//! Per-unit conventions used throughout the crate:
//!
//! * the *system* base is `bases.s_wt_mva` at `bases.v_coll_kv`; every
//!   network quantity (voltages, injected currents, impedances) is on it,
//! * a turbine's internal quantities (DC voltage, `i_d`, gains, `p_m0`) are
//!   on its own rating, which defaults to `s_wt_mva` and is larger for an
//!   aggregated machine,
//! * per-unit inductances are taken at rated frequency, so `l_pu` is also
//!   the per-unit reactance.

use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

fn default_f_grid_hz() -> f64 {
    50.0
}

fn default_kp_pll() -> f64 {
    60.0
}

fn default_ki_pll() -> f64 {
    1400.0
}

fn default_e_pu() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerUnitBases {
    /// Per-turbine capacity, also the system power base (MVA).
    pub s_wt_mva: f64,
    /// Collector voltage base, line-line (kV).
    pub v_coll_kv: f64,
    #[serde(default = "default_f_grid_hz")]
    pub f_grid_hz: f64,
    /// DC-link voltage base (kV).
    pub u_dc_base_kv: f64,
}

impl PerUnitBases {
    pub fn z_base_ohm(&self) -> f64 {
        self.v_coll_kv * self.v_coll_kv / self.s_wt_mva
    }

    pub fn omega_grid(&self) -> f64 {
        2.0 * PI * self.f_grid_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub poi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from_bus: String,
    pub to_bus: String,
    pub length_km: f64,
    pub r_ohm_per_km: f64,
    pub l_h_per_km: f64,
}

/// One turbine and the bus it is connected to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WtParams {
    pub id: String,
    pub bus: String,
    /// Steady mechanical power on the turbine's own rating.
    pub p_m0_pu: f64,
    /// DC-link capacitance (F).
    pub c_dc_f: f64,
    pub u_dc0_pu: f64,
    pub kp_dvc_pu: f64,
    pub ki_dvc_pu: f64,
    #[serde(default = "default_kp_pll")]
    pub kp_pll_pu: f64,
    #[serde(default = "default_ki_pll")]
    pub ki_pll_pu: f64,
    /// Machine rating (MVA); `None` means `bases.s_wt_mva`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating_mva: Option<f64>,
}

impl WtParams {
    pub fn rating(&self, bases: &PerUnitBases) -> f64 {
        self.rating_mva.unwrap_or(bases.s_wt_mva)
    }

    /// Ratio of the turbine rating to the system base.
    pub fn scale(&self, bases: &PerUnitBases) -> f64 {
        self.rating(bases) / bases.s_wt_mva
    }

    /// DC capacitance in per-unit seconds on the turbine's own rating.
    pub fn c_pu(&self, bases: &PerUnitBases) -> f64 {
        let u = bases.u_dc_base_kv * 1e3;
        self.c_dc_f * u * u / (self.rating(bases) * 1e6)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridThevenin {
    pub r_g_pu: f64,
    pub l_g_pu: f64,
    /// Power base of `r_g_pu`/`l_g_pu` (MVA); `None` means `bases.s_wt_mva`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_base_mva: Option<f64>,
    /// Infinite-bus voltage magnitude.
    #[serde(default = "default_e_pu")]
    pub e_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceGroup {
    pub aggregate_id: String,
    pub members: Vec<String>,
}

/// Written into aggregated farms so each equivalent machine can be traced
/// back to the turbines it replaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub source_sha256: String,
    pub groups: Vec<ProvenanceGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarmDescription {
    pub bases: PerUnitBases,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub wts: Vec<WtParams>,
    pub grid: GridThevenin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Reads and validates a farm description file.
pub fn load_farm(path: impl AsRef<Path>) -> Result<FarmDescription> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FarmDescription::from_json(&text)
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_nonnegative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be non-negative and finite, got {v}")))
    }
}

impl FarmDescription {
    pub fn from_json(text: &str) -> Result<Self> {
        let farm: FarmDescription = serde_json::from_str(text)?;
        farm.validate()?;
        Ok(farm)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("farm serialization is infallible")
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bases;
        check_positive("bases.s_wt_mva", b.s_wt_mva)?;
        check_positive("bases.v_coll_kv", b.v_coll_kv)?;
        check_positive("bases.f_grid_hz", b.f_grid_hz)?;
        check_positive("bases.u_dc_base_kv", b.u_dc_base_kv)?;

        let mut bus_ids = HashSet::new();
        for bus in &self.buses {
            if !bus_ids.insert(bus.id.as_str()) {
                return Err(invalid(format!("duplicate bus id {}", bus.id)));
            }
        }
        match self.buses.iter().filter(|b| b.poi).count() {
            1 => {}
            n => return Err(invalid(format!("exactly one POI bus required, found {n}"))),
        }

        for br in &self.branches {
            let tag = format!("branch {}-{}", br.from_bus, br.to_bus);
            for end in [&br.from_bus, &br.to_bus] {
                if !bus_ids.contains(end.as_str()) {
                    return Err(invalid(format!("{tag} references unknown bus {end}")));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(invalid(format!("{tag} is a self-loop")));
            }
            check_nonnegative(&format!("{tag} length_km"), br.length_km)?;
            check_nonnegative(&format!("{tag} r_ohm_per_km"), br.r_ohm_per_km)?;
            check_nonnegative(&format!("{tag} l_h_per_km"), br.l_h_per_km)?;
        }

        if self.wts.is_empty() {
            return Err(invalid("farm has no turbines"));
        }
        let mut wt_ids = HashSet::new();
        for wt in &self.wts {
            if !wt_ids.insert(wt.id.as_str()) {
                return Err(invalid(format!("duplicate turbine id {}", wt.id)));
            }
            if !bus_ids.contains(wt.bus.as_str()) {
                return Err(invalid(format!("turbine {} on unknown bus {}", wt.id, wt.bus)));
            }
            if !(wt.p_m0_pu > 0.0 && wt.p_m0_pu <= 1.0) {
                return Err(invalid(format!(
                    "turbine {} p_m0_pu must lie in (0, 1], got {}",
                    wt.id, wt.p_m0_pu
                )));
            }
            check_positive(&format!("turbine {} c_dc_f", wt.id), wt.c_dc_f)?;
            check_positive(&format!("turbine {} u_dc0_pu", wt.id), wt.u_dc0_pu)?;
            check_positive(&format!("turbine {} kp_dvc_pu", wt.id), wt.kp_dvc_pu)?;
            check_positive(&format!("turbine {} ki_dvc_pu", wt.id), wt.ki_dvc_pu)?;
            check_positive(&format!("turbine {} kp_pll_pu", wt.id), wt.kp_pll_pu)?;
            check_positive(&format!("turbine {} ki_pll_pu", wt.id), wt.ki_pll_pu)?;
            if let Some(r) = wt.rating_mva {
                check_positive(&format!("turbine {} rating_mva", wt.id), r)?;
            }
        }

        check_nonnegative("grid.r_g_pu", self.grid.r_g_pu)?;
        check_nonnegative("grid.l_g_pu", self.grid.l_g_pu)?;
        check_positive("grid.e_pu", self.grid.e_pu)?;
        if let Some(s) = self.grid.s_base_mva {
            check_positive("grid.s_base_mva", s)?;
        }

        self.check_connected()
    }

    fn check_connected(&self) -> Result<()> {
        let index = self.bus_index();
        let mut adj = vec![Vec::new(); self.buses.len()];
        for br in &self.branches {
            let (a, b) = (index[br.from_bus.as_str()], index[br.to_bus.as_str()]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let poi = self.poi_index();
        let mut seen = vec![false; self.buses.len()];
        seen[poi] = true;
        let mut queue = VecDeque::from([poi]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if let Some(wt) = self.wts.iter().find(|wt| !seen[index[wt.bus.as_str()]]) {
            return Err(invalid(format!(
                "turbine {} sits on bus {} which is not reachable from the POI",
                wt.id, wt.bus
            )));
        }
        if let Some((i, _)) = seen.iter().enumerate().find(|(_, s)| !**s) {
            return Err(invalid(format!(
                "bus {} is not connected to the POI",
                self.buses[i].id
            )));
        }
        Ok(())
    }

    pub fn bus_index(&self) -> HashMap<&str, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect()
    }

    pub fn poi_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.poi)
            .expect("validated farm has a POI")
    }

    /// Bus index hosting each turbine, in turbine order.
    pub fn wt_bus_indices(&self) -> Vec<usize> {
        let index = self.bus_index();
        self.wts.iter().map(|wt| index[wt.bus.as_str()]).collect()
    }

    pub fn branch_impedance_pu(&self, br: &Branch) -> C64 {
        let zb = self.bases.z_base_ohm();
        C64::new(
            br.r_ohm_per_km * br.length_km / zb,
            self.bases.omega_grid() * br.l_h_per_km * br.length_km / zb,
        )
    }

    /// Thevenin impedance of the grid on the system base.
    pub fn grid_impedance_pu(&self) -> C64 {
        let ratio = self.bases.s_wt_mva / self.grid.s_base_mva.unwrap_or(self.bases.s_wt_mva);
        C64::new(self.grid.r_g_pu, self.grid.l_g_pu) * ratio
    }

    pub fn total_capacity_mva(&self) -> f64 {
        self.wts.iter().map(|wt| wt.rating(&self.bases)).sum()
    }

    pub fn total_power_mw(&self) -> f64 {
        self.wts
            .iter()
            .map(|wt| wt.p_m0_pu * wt.rating(&self.bases))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
          "bases": {"s_wt_mva": 1.5, "v_coll_kv": 35.0, "u_dc_base_kv": 1.2},
          "buses": [{"id": "POI", "poi": true}, {"id": "B1"}],
          "branches": [{"from_bus": "POI", "to_bus": "B1", "length_km": 0.0,
                        "r_ohm_per_km": 0.1153, "l_h_per_km": 1.05e-3}],
          "wts": [{"id": "WT01", "bus": "B1", "p_m0_pu": 0.9, "c_dc_f": 0.09,
                   "u_dc0_pu": 1.0, "kp_dvc_pu": 1.0, "ki_dvc_pu": 300.0}],
          "grid": {"r_g_pu": 0.001, "l_g_pu": 0.01}
        }"#
    }

    #[test]
    fn minimal_farm_loads_with_defaults() {
        let farm = FarmDescription::from_json(minimal()).unwrap();
        assert_eq!(farm.wts.len(), 1);
        assert_eq!(farm.bases.f_grid_hz, 50.0);
        assert_eq!(farm.wts[0].kp_pll_pu, 60.0);
        assert_eq!(farm.wts[0].ki_pll_pu, 1400.0);
        assert_eq!(farm.grid.e_pu, 1.0);
        assert_eq!(farm.branch_impedance_pu(&farm.branches[0]), C64::new(0.0, 0.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = minimal().replace("\"u_dc_base_kv\": 1.2", "\"u_dc_base_kv\": 1.2, \"extra\": 1");
        assert!(matches!(FarmDescription::from_json(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn unreachable_turbine_is_rejected() {
        let text = minimal().replace(
            r#"{"id": "B1"}"#,
            r#"{"id": "B1"}, {"id": "ISLAND"}"#,
        );
        let text = text.replace(r#""bus": "B1""#, r#""bus": "ISLAND""#);
        let err = FarmDescription::from_json(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("not reachable")), "{err}");
    }

    #[test]
    fn validation_errors() {
        let cases = [
            (r#""s_wt_mva": 1.5"#, r#""s_wt_mva": 0.0"#),
            (r#""p_m0_pu": 0.9"#, r#""p_m0_pu": 1.2"#),
            (r#""to_bus": "B1""#, r#""to_bus": "POI""#),
            (r#"{"id": "B1"}"#, r#"{"id": "B1", "poi": true}"#),
            (r#""length_km": 0.0"#, r#""length_km": -1.0"#),
        ];
        for (from, to) in cases {
            let text = minimal().replace(from, to);
            assert!(
                matches!(FarmDescription::from_json(&text), Err(Error::Validation(_))),
                "{to} should fail validation"
            );
        }
    }

    #[test]
    fn duplicate_turbine_ids_rejected() {
        let mut farm = FarmDescription::from_json(minimal()).unwrap();
        farm.wts.push(farm.wts[0].clone());
        assert!(matches!(farm.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn per_unit_conversions() {
        let farm = FarmDescription::from_json(minimal()).unwrap();
        let wt = &farm.wts[0];
        assert!((wt.c_pu(&farm.bases) - 0.0864).abs() < 1e-12);
        let mut big = wt.clone();
        big.rating_mva = Some(3.0);
        big.c_dc_f = 0.18;
        assert!((big.c_pu(&farm.bases) - 0.0864).abs() < 1e-12);
        assert_eq!(big.scale(&farm.bases), 2.0);

        let mut farm = farm;
        farm.grid.s_base_mva = Some(15.0);
        let z = farm.grid_impedance_pu();
        assert!((z - C64::new(0.0001, 0.001)).norm() < 1e-15);
    }

    #[test]
    fn json_roundtrip_preserves_farm() {
        let farm = FarmDescription::from_json(minimal()).unwrap();
        let again = FarmDescription::from_json(&farm.to_json_pretty()).unwrap();
        assert_eq!(farm, again);
    }
}
