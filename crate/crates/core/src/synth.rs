//! Synthesized 33-turbine, three-feeder farms used by the test suite and
//! shipped under `farms/`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::farm::{Branch, Bus, FarmDescription, GridThevenin, PerUnitBases, WtParams};

pub const N_FEEDERS: usize = 3;
pub const WTS_PER_FEEDER: usize = 11;
pub const R_OHM_PER_KM: f64 = 0.1153;
pub const L_H_PER_KM: f64 = 1.05e-3;

/// Operating points per feeder, turbine order along the feeder.
pub const P_M0: [[f64; WTS_PER_FEEDER]; N_FEEDERS] = [
    [1.00, 1.00, 0.95, 0.95, 0.95, 0.90, 0.90, 0.85, 0.85, 0.80, 0.80],
    [1.00, 0.95, 0.90, 0.90, 0.85, 0.80, 0.80, 0.75, 0.75, 0.70, 0.65],
    [1.00, 0.90, 0.85, 0.85, 0.80, 0.70, 0.65, 0.65, 0.60, 0.50, 0.45],
];

/// Parameter groups by turbine number.
pub const GROUPS: [&[usize]; 3] = [
    &[3, 8, 9, 12, 13, 15, 28, 29, 30, 31],
    &[5, 6, 7, 10, 14, 16, 17, 18, 19, 22, 23, 26, 27, 32],
    &[1, 2, 4, 11, 20, 21, 24, 25, 33],
];

const FIRST_SEGMENT_KM: [f64; N_FEEDERS] = [2.0, 3.0, 4.0];
const DISPERSION: f64 = 0.10;
const DISPERSION_SEED: u64 = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Identical gains, spread operating points.
    A,
    /// Three proportional-gain groups.
    B,
    /// Three integral-gain groups.
    C,
    /// Case C with dispersed gains inside every group.
    D,
    /// Identical turbines on a lossless network and an ideal grid.
    ZeroImpedance,
}

impl Case {
    pub const ALL: [Case; 5] = [Case::A, Case::B, Case::C, Case::D, Case::ZeroImpedance];

    pub fn name(self) -> &'static str {
        match self {
            Case::A => "case_a",
            Case::B => "case_b",
            Case::C => "case_c",
            Case::D => "case_d",
            Case::ZeroImpedance => "zero_impedance",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Case::ALL
            .into_iter()
            .find(|c| c.name() == s || c.name().trim_start_matches("case_") == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown case {s:?}"))
    }
}

pub fn wt_id(n: usize) -> String {
    format!("WT{n:02}")
}

/// Ground-truth group (0, 1, 2) of turbine number `n` (1-based).
pub fn group_of(n: usize) -> usize {
    GROUPS.iter().position(|g| g.contains(&n)).expect("turbine number in 1..=33")
}

pub fn ground_truth_partition() -> Vec<Vec<String>> {
    let mut p: Vec<Vec<String>> = GROUPS
        .iter()
        .map(|g| {
            let mut ids: Vec<String> = g.iter().map(|&n| wt_id(n)).collect();
            ids.sort();
            ids
        })
        .collect();
    p.sort();
    p
}

fn span_km(feeder: usize, j: usize) -> f64 {
    // uneven spacing between 0.5 and 0.7 km
    0.5 + 0.05 * ((3 * j + 2 * feeder) % 5) as f64
}

fn bases() -> PerUnitBases {
    PerUnitBases {
        s_wt_mva: 1.5,
        v_coll_kv: 35.0,
        f_grid_hz: 50.0,
        u_dc_base_kv: 1.2,
    }
}

fn base_wt(n: usize, bus: String, p: f64) -> WtParams {
    WtParams {
        id: wt_id(n),
        bus,
        p_m0_pu: p,
        c_dc_f: 0.09,
        u_dc0_pu: 1.0,
        kp_dvc_pu: 1.0,
        ki_dvc_pu: 300.0,
        kp_pll_pu: 60.0,
        ki_pll_pu: 1400.0,
        rating_mva: None,
    }
}

/// The three-feeder layout with the given per-turbine gains `(kp, ki)`.
pub fn layout(gains: impl Fn(usize) -> (f64, f64), lossless: bool) -> FarmDescription {
    let mut buses = vec![Bus {
        id: "POI".into(),
        poi: true,
    }];
    let mut branches = Vec::new();
    let mut wts = Vec::new();
    for f in 0..N_FEEDERS {
        let mut prev = "POI".to_string();
        for j in 0..WTS_PER_FEEDER {
            let n = f * WTS_PER_FEEDER + j + 1;
            let bus = format!("F{}B{:02}", f + 1, j + 1);
            buses.push(Bus {
                id: bus.clone(),
                poi: false,
            });
            let len = if lossless {
                0.0
            } else if j == 0 {
                FIRST_SEGMENT_KM[f]
            } else {
                span_km(f, j)
            };
            branches.push(Branch {
                from_bus: prev,
                to_bus: bus.clone(),
                length_km: len,
                r_ohm_per_km: R_OHM_PER_KM,
                l_h_per_km: L_H_PER_KM,
            });
            let p = if lossless { 0.9 } else { P_M0[f][j] };
            let mut wt = base_wt(n, bus.clone(), p);
            let (kp, ki) = gains(n);
            wt.kp_dvc_pu = kp;
            wt.ki_dvc_pu = ki;
            wts.push(wt);
            prev = bus;
        }
    }
    let n_wts = wts.len() as f64;
    let grid = if lossless {
        GridThevenin {
            r_g_pu: 0.0,
            l_g_pu: 0.0,
            s_base_mva: None,
            e_pu: 1.0,
        }
    } else {
        GridThevenin {
            r_g_pu: 0.001,
            l_g_pu: 0.01,
            s_base_mva: Some(1.5 * n_wts),
            e_pu: 1.0,
        }
    };
    FarmDescription {
        bases: bases(),
        buses,
        branches,
        wts,
        grid,
        provenance: None,
    }
}

pub fn case_farm(case: Case) -> FarmDescription {
    match case {
        Case::A => layout(|_| (1.0, 300.0), false),
        Case::B => layout(|n| ([1.0, 2.0, 3.0][group_of(n)], 300.0), false),
        Case::C => layout(|n| (1.0, [100.0, 300.0, 500.0][group_of(n)]), false),
        Case::D => {
            let mut rng = ChaCha8Rng::seed_from_u64(DISPERSION_SEED);
            let draws: Vec<(f64, f64)> = (0..N_FEEDERS * WTS_PER_FEEDER)
                .map(|_| {
                    let a: f64 = rng.random_range(-DISPERSION..=DISPERSION);
                    let b: f64 = rng.random_range(-DISPERSION..=DISPERSION);
                    (1.0 + a, 1.0 + b)
                })
                .collect();
            layout(
                |n| {
                    let (a, b) = draws[n - 1];
                    (round6(a), round6([100.0, 300.0, 500.0][group_of(n)] * b))
                },
                false,
            )
        }
        Case::ZeroImpedance => layout(|_| (1.0, 300.0), true),
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_partition_all_turbines() {
        let mut all: Vec<usize> = GROUPS.iter().flat_map(|g| g.iter().copied()).collect();
        all.sort();
        assert_eq!(all, (1..=33).collect::<Vec<_>>());
    }

    #[test]
    fn layouts_validate() {
        for case in Case::ALL {
            let farm = case_farm(case);
            farm.validate().unwrap();
            assert_eq!(farm.wts.len(), 33);
            assert_eq!(farm.branches.len(), 33);
        }
    }

    #[test]
    fn case_d_stays_near_case_c() {
        let c = case_farm(Case::C);
        let d = case_farm(Case::D);
        for (a, b) in c.wts.iter().zip(&d.wts) {
            assert!((b.kp_dvc_pu / a.kp_dvc_pu - 1.0).abs() <= DISPERSION + 1e-9);
            assert!((b.ki_dvc_pu / a.ki_dvc_pu - 1.0).abs() <= DISPERSION + 1e-6);
        }
        assert_ne!(c, d);
        assert_eq!(case_farm(Case::D), d);
    }

    #[test]
    fn case_names_parse() {
        for case in Case::ALL {
            assert_eq!(case.name().parse::<Case>().unwrap(), case);
        }
        assert_eq!("B".parse::<Case>().unwrap(), Case::B);
        assert!("e".parse::<Case>().is_err());
    }
}
