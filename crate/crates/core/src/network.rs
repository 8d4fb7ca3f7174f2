//! Quasi-static collector network: nodal admittance, Kron reduction onto
//! turbine terminals and branch-current recovery.
//!
//! Vertex 0 is the infinite bus; bus `i` of the farm is vertex `i + 1`.
//! Edge 0 is the grid Thevenin branch (POI to infinite bus), edge `k + 1`
//! is branch `k` of the farm. Zero-impedance edges fuse their endpoints
//! into a single electrical node; node 0 is the infinite bus.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::farm::{FarmDescription, C64};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Edge {
    pub a: usize,
    pub b: usize,
    pub z: C64,
}

impl Edge {
    fn is_tie(&self) -> bool {
        self.z.norm() == 0.0
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Topology {
    pub edges: Vec<Edge>,
    /// Electrical node of every vertex.
    pub node_of_vertex: Vec<usize>,
    pub n_nodes: usize,
    /// Admittance among non-source nodes (`n_nodes - 1` square).
    pub y: DMatrix<C64>,
    /// Coupling of each non-source node to the infinite bus:
    /// `I = y * V + y_src * e`.
    pub y_src: Vec<C64>,
}

fn find(parent: &mut [usize], mut v: usize) -> usize {
    while parent[v] != v {
        parent[v] = parent[parent[v]];
        v = parent[v];
    }
    v
}

impl Topology {
    pub fn new(farm: &FarmDescription) -> Self {
        let index = farm.bus_index();
        let mut edges = vec![Edge {
            a: farm.poi_index() + 1,
            b: 0,
            z: farm.grid_impedance_pu(),
        }];
        edges.extend(farm.branches.iter().map(|br| Edge {
            a: index[br.from_bus.as_str()] + 1,
            b: index[br.to_bus.as_str()] + 1,
            z: farm.branch_impedance_pu(br),
        }));

        let n_vertices = farm.buses.len() + 1;
        let mut parent: Vec<usize> = (0..n_vertices).collect();
        for e in edges.iter().filter(|e| e.is_tie()) {
            let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if ra != rb {
                // keep the smaller root so the infinite bus stays root 0
                let (lo, hi) = (ra.min(rb), ra.max(rb));
                parent[hi] = lo;
            }
        }
        let mut node_of_root = vec![usize::MAX; n_vertices];
        let mut node_of_vertex = vec![0; n_vertices];
        let mut n_nodes = 0;
        for v in 0..n_vertices {
            let r = find(&mut parent, v);
            if node_of_root[r] == usize::MAX {
                node_of_root[r] = n_nodes;
                n_nodes += 1;
            }
            node_of_vertex[v] = node_of_root[r];
        }

        let m = n_nodes - 1;
        let mut y = DMatrix::<C64>::zeros(m, m);
        let mut y_src = vec![C64::new(0.0, 0.0); m];
        for e in &edges {
            let (na, nb) = (node_of_vertex[e.a], node_of_vertex[e.b]);
            if na == nb {
                continue;
            }
            let adm = e.z.inv();
            for (p, q) in [(na, nb), (nb, na)] {
                if p == 0 {
                    continue;
                }
                y[(p - 1, p - 1)] += adm;
                if q == 0 {
                    y_src[p - 1] -= adm;
                } else {
                    y[(p - 1, q - 1)] -= adm;
                }
            }
        }

        Topology {
            edges,
            node_of_vertex,
            n_nodes,
            y,
            y_src,
        }
    }

    pub fn node_of_bus(&self, bus: usize) -> usize {
        self.node_of_vertex[bus + 1]
    }

    /// Node impedance matrix over all non-source nodes.
    #[cfg(test)]
    pub fn impedance(&self) -> Result<DMatrix<C64>> {
        if self.y.nrows() == 0 {
            return Ok(DMatrix::zeros(0, 0));
        }
        self.y
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::SingularNetwork("nodal admittance is not invertible".into()))
    }

    /// Current through every edge (a to b) given node voltages (index 0 is
    /// the infinite bus) and per-bus injected currents.
    ///
    /// Edges with impedance take their current from the voltage difference;
    /// zero-impedance ties are resolved by Kirchhoff's current law over a
    /// spanning tree of each fused node. Ties closing a loop of ties carry
    /// no current.
    pub fn edge_currents(&self, node_voltage: &[C64], bus_injection: &[C64]) -> Vec<C64> {
        let n_vertices = self.node_of_vertex.len();
        let mut current = vec![C64::new(0.0, 0.0); self.edges.len()];
        let mut residual = vec![C64::new(0.0, 0.0); n_vertices];
        for (i, inj) in bus_injection.iter().enumerate() {
            residual[i + 1] = *inj;
        }
        let mut tie_adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_vertices];
        for (k, e) in self.edges.iter().enumerate() {
            if e.is_tie() {
                tie_adj[e.a].push((e.b, k));
                tie_adj[e.b].push((e.a, k));
                continue;
            }
            let (na, nb) = (self.node_of_vertex[e.a], self.node_of_vertex[e.b]);
            let i = if na == nb {
                C64::new(0.0, 0.0)
            } else {
                (node_voltage[na] - node_voltage[nb]) / e.z
            };
            current[k] = i;
            residual[e.a] -= i;
            residual[e.b] += i;
        }

        // BFS each tie component from its smallest vertex (the infinite bus
        // for the source component), then peel leaves towards the root.
        let mut visited = vec![false; n_vertices];
        for root in 0..n_vertices {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            let mut order = vec![root];
            let mut up: Vec<(usize, usize, usize)> = Vec::new();
            let mut queue = VecDeque::from([root]);
            while let Some(v) = queue.pop_front() {
                for &(w, k) in &tie_adj[v] {
                    if !visited[w] {
                        visited[w] = true;
                        up.push((w, v, k));
                        order.push(w);
                        queue.push_back(w);
                    }
                }
            }
            for &(child, parent, k) in up.iter().rev() {
                let flow = residual[child];
                residual[parent] += flow;
                residual[child] = C64::new(0.0, 0.0);
                current[k] = if self.edges[k].a == child { flow } else { -flow };
            }
        }
        current
    }
}

/// Linear network relations seen from the turbine terminals, as real
/// 2x2 blocks in the grid-synchronous XY frame.
#[derive(Debug, Clone, Serialize)]
pub struct NetworkMatrices {
    /// 2N x 2N: terminal voltage deviation per injected current deviation.
    pub z: DMatrix<f64>,
    /// 2N x 2: terminal voltage deviation per infinite-bus voltage deviation.
    pub k_src: DMatrix<f64>,
    /// 2 x 2N: POI voltage deviation per injected current deviation.
    pub z_poi: DMatrix<f64>,
    /// 2 x 2: POI voltage deviation per infinite-bus voltage deviation.
    pub k_poi: DMatrix<f64>,
    /// Complex node impedance between turbine terminals (N x N).
    pub z_complex: DMatrix<C64>,
}

impl NetworkMatrices {
    pub fn n_wts(&self) -> usize {
        self.z_complex.nrows()
    }
}

/// `[[re, -im], [im, re]]` per complex entry.
pub fn real_blocks(m: &DMatrix<C64>) -> DMatrix<f64> {
    DMatrix::from_fn(2 * m.nrows(), 2 * m.ncols(), |i, j| {
        let c = m[(i / 2, j / 2)];
        match (i % 2, j % 2) {
            (0, 0) | (1, 1) => c.re,
            (0, 1) => -c.im,
            _ => c.im,
        }
    })
}

/// Builds the network matrices by Kron-reducing the nodal admittance onto
/// the turbine terminals with the infinite bus held fixed.
pub fn build_network_matrices(farm: &FarmDescription) -> Result<NetworkMatrices> {
    let topo = Topology::new(farm);
    let wt_nodes: Vec<usize> = farm
        .wt_bus_indices()
        .into_iter()
        .map(|b| topo.node_of_bus(b))
        .collect();
    let poi_node = topo.node_of_bus(farm.poi_index());

    // Terminal nodes (not fused with the infinite bus), in ascending order.
    let mut terminals: Vec<usize> = wt_nodes.iter().copied().filter(|&n| n != 0).collect();
    terminals.sort_unstable();
    terminals.dedup();
    let internal: Vec<usize> = (1..topo.n_nodes).filter(|n| !terminals.contains(n)).collect();
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| topo.y[(rows[i] - 1, cols[j] - 1)])
    };
    let pick_src = |rows: &[usize]| DMatrix::from_fn(rows.len(), 1, |i, _| topo.y_src[rows[i] - 1]);

    let y_ww = pick(&terminals, &terminals);
    let y_wi = pick(&terminals, &internal);
    let y_iw = pick(&internal, &terminals);
    let y_ii = pick(&internal, &internal);
    let ysrc_w = pick_src(&terminals);
    let ysrc_i = pick_src(&internal);

    // Internal voltages: v_i = -Y_ii^-1 (Y_iw v_w + y_i e)
    let (elim_w, elim_src) = if internal.is_empty() {
        (DMatrix::zeros(0, terminals.len()), DMatrix::zeros(0, 1))
    } else {
        let lu = y_ii.lu();
        let a = lu
            .solve(&y_iw)
            .ok_or_else(|| Error::SingularNetwork("internal buses have no path to the grid".into()))?;
        let b = lu
            .solve(&ysrc_i)
            .ok_or_else(|| Error::SingularNetwork("internal buses have no path to the grid".into()))?;
        (a, b)
    };
    let y_kron = &y_ww - &y_wi * &elim_w;
    let ysrc_kron = &ysrc_w - &y_wi * &elim_src;
    let z_w = if terminals.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        y_kron
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::SingularNetwork("reduced admittance is not invertible".into()))?
    };
    let k_w = -&z_w * &ysrc_kron;

    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let n = wt_nodes.len();
    let pos = |node: usize| terminals.iter().position(|&t| t == node);
    let mut z_complex = DMatrix::from_element(n, n, zero);
    let mut k_complex = DMatrix::from_element(n, 1, one);
    for (i, &ni) in wt_nodes.iter().enumerate() {
        let Some(pi) = pos(ni) else { continue };
        k_complex[(i, 0)] = k_w[(pi, 0)];
        for (j, &nj) in wt_nodes.iter().enumerate() {
            if let Some(pj) = pos(nj) {
                z_complex[(i, j)] = z_w[(pi, pj)];
            }
        }
    }

    // POI row: a terminal, the infinite bus, or an internal bus.
    let mut zpoi_complex = DMatrix::from_element(1, n, zero);
    let mut kpoi = one;
    if poi_node != 0 {
        let (row, k_row): (Vec<C64>, C64) = if let Some(pp) = pos(poi_node) {
            ((0..terminals.len()).map(|j| z_w[(pp, j)]).collect(), k_w[(pp, 0)])
        } else {
            let r = internal.iter().position(|&t| t == poi_node).expect("POI node exists");
            let zr = -(elim_w.row(r) * &z_w);
            let kr = -(elim_w.row(r) * &k_w)[(0, 0)] - elim_src[(r, 0)];
            (zr.iter().copied().collect(), kr)
        };
        kpoi = k_row;
        for (j, &nj) in wt_nodes.iter().enumerate() {
            if let Some(pj) = pos(nj) {
                zpoi_complex[(0, j)] = row[pj];
            }
        }
    }

    Ok(NetworkMatrices {
        z: real_blocks(&z_complex),
        k_src: real_blocks(&k_complex),
        z_poi: real_blocks(&zpoi_complex),
        k_poi: real_blocks(&DMatrix::from_element(1, 1, kpoi)),
        z_complex,
    })
}
