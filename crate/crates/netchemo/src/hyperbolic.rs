//! Explicit upwind transport of `(u, v)` with node traces from the
//! transmission-condition linear solve.
//!
//! The scheme advects the Riemann invariants `w± = (u ± v)/2` at speeds
//! `±lambda`. At each arc end exactly one characteristic reaches the boundary
//! from the interior; the node closure solves `(Lambda + L) u_N = Lambda c`
//! where `L` is the weighted graph Laplacian of the node's `K` matrix and
//! `c` carries the known characteristic combinations. The complementary
//! trace `v` then satisfies the transmission conditions exactly, so the
//! node flux balance holds to linear-solve roundoff.

use crate::fields::{from_invariants, NetworkGrids, NetworkState};
use crate::network::{Direction, Endpoint, NetworkSpec, NodeId};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HyperbolicError {
    #[error("node '{node}' trace system is not positive definite")]
    Factorization { node: String },
    #[error("CFL violation on arc '{arc}': lambda*dt/h = {nu}")]
    Cfl { arc: String, nu: f64 },
}

/// Cached node linear system `(Lambda + L)` with its Cholesky factorization.
pub struct NodeSystem {
    pub node: NodeId,
    /// Arc order matching the node's transmission matrix.
    directions: Vec<Direction>,
    lambdas: Vec<f64>,
    k: DMatrix<f64>,
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

/// Endpoint trace values produced by one node solve, indexed like
/// `spec.arcs_at(node)`.
#[derive(Debug, Clone)]
pub struct NodeTraceSolution {
    pub node: NodeId,
    pub u_trace: Vec<f64>,
    pub v_trace: Vec<f64>,
    /// Signed hyperbolic flux balance `sum_in lambda v - sum_out lambda v`.
    pub residual_flux: f64,
}

impl NodeSystem {
    /// Build and factor `(Lambda + L)` for one node from raw coefficients.
    /// `k` must be the node's symmetric nonnegative weight matrix and every
    /// `lambda` strictly positive.
    pub fn from_coefficients(
        node: NodeId,
        node_name: &str,
        directions: Vec<Direction>,
        lambdas: Vec<f64>,
        k: DMatrix<f64>,
    ) -> Result<Self, HyperbolicError> {
        let m = lambdas.len();
        assert_eq!(directions.len(), m);
        assert_eq!((k.nrows(), k.ncols()), (m, m));
        let mut matrix = DMatrix::zeros(m, m);
        for i in 0..m {
            matrix[(i, i)] = lambdas[i];
            for j in 0..m {
                if i != j {
                    matrix[(i, i)] += k[(i, j)];
                    matrix[(i, j)] -= k[(i, j)];
                }
            }
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| HyperbolicError::Factorization { node: node_name.to_string() })?;
        Ok(NodeSystem { node, directions, lambdas, k, matrix, chol })
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Solve for the endpoint traces given the known characteristic
    /// combinations `c_i` (`u + v` for incoming arcs, `u - v` for outgoing).
    ///
    /// Solved in jump form: `(Lambda + L) delta = rhs` with
    /// `rhs_i = sum_j K_ij (c_j - c_i)`, then `u = c + delta` and
    /// `v = -theta delta`. Equal characteristic data gives exactly zero
    /// jumps, so constant states are bitwise fixed points.
    pub fn solve(&self, incoming_data: &[f64]) -> NodeTraceSolution {
        let m = self.lambdas.len();
        debug_assert_eq!(incoming_data.len(), m);
        let rhs = DVector::from_fn(m, |i, _| {
            (0..m)
                .map(|j| self.k[(i, j)] * (incoming_data[j] - incoming_data[i]))
                .sum()
        });
        let delta = self.chol.solve(&rhs);
        let mut u_trace = vec![0.0; m];
        let mut v_trace = vec![0.0; m];
        let mut residual_flux = 0.0;
        for i in 0..m {
            u_trace[i] = incoming_data[i] + delta[i];
            let v = match self.directions[i] {
                Direction::Incoming => -delta[i],
                Direction::Outgoing => delta[i],
            };
            v_trace[i] = v;
            residual_flux += self.directions[i].theta() * self.lambdas[i] * v;
        }
        NodeTraceSolution { node: self.node, u_trace, v_trace, residual_flux }
    }
}

/// Build and factor the trace system of every node.
pub fn build_node_systems(spec: &NetworkSpec) -> Result<Vec<NodeSystem>, HyperbolicError> {
    spec.node_ids()
        .map(|node| {
            let arcs = spec.arcs_at(node);
            NodeSystem::from_coefficients(
                node,
                spec.node_name(node),
                arcs.iter().map(|&(_, d)| d).collect(),
                arcs.iter().map(|&(a, _)| spec.arc(a).lambda).collect(),
                spec.k(node).entries.clone(),
            )
        })
        .collect()
}

/// Zero-flux closure at an external point: the incoming characteristic is
/// reflected, `v = 0` and `u = 2 w`.
#[inline]
pub fn external_boundary_traces(w_incoming: f64) -> (f64, f64) {
    (2.0 * w_incoming, 0.0)
}

/// `(u, v)` trace values at both ends of one arc (`left` = tail side).
#[derive(Debug, Clone, Copy, Default)]
pub struct ArcEndTraces {
    pub left: (f64, f64),
    pub right: (f64, f64),
}

/// Traces for every arc end of the network at one time level.
#[derive(Debug, Clone)]
pub struct NetworkTraces {
    pub arcs: Vec<ArcEndTraces>,
    pub nodes: Vec<NodeTraceSolution>,
}

/// Gather characteristic data to every node and external point and produce
/// the endpoint traces for the current state.
pub fn compute_traces(
    spec: &NetworkSpec,
    systems: &[NodeSystem],
    state: &NetworkState,
) -> NetworkTraces {
    let mut arcs = vec![ArcEndTraces::default(); spec.n_arcs()];

    for (i, arc) in spec.arcs().iter().enumerate() {
        let s = &state.states[i];
        let n = s.n_cells();
        if let Endpoint::External(_) = arc.tail {
            // Left end: the leftward characteristic w- reaches the boundary.
            let w = 0.5 * (s.u[0] - s.v[0]);
            arcs[i].left = external_boundary_traces(w);
        }
        if let Endpoint::External(_) = arc.head {
            let w = 0.5 * (s.u[n - 1] + s.v[n - 1]);
            arcs[i].right = external_boundary_traces(w);
        }
    }

    let nodes: Vec<NodeTraceSolution> = systems
        .par_iter()
        .map(|sys| {
            let incident = spec.arcs_at(sys.node);
            let c: Vec<f64> = incident
                .iter()
                .map(|&(arc, dir)| {
                    let s = &state.states[arc.0];
                    match dir {
                        Direction::Incoming => {
                            let n = s.n_cells();
                            s.u[n - 1] + s.v[n - 1]
                        }
                        Direction::Outgoing => s.u[0] - s.v[0],
                    }
                })
                .collect();
            sys.solve(&c)
        })
        .collect();

    for sol in &nodes {
        for (slot, &(arc, dir)) in spec.arcs_at(sol.node).iter().enumerate() {
            let trace = (sol.u_trace[slot], sol.v_trace[slot]);
            match dir {
                Direction::Incoming => arcs[arc.0].right = trace,
                Direction::Outgoing => arcs[arc.0].left = trace,
            }
        }
    }

    NetworkTraces { arcs, nodes }
}

/// First-order upwind update of the Riemann invariants on every arc, using
/// the endpoint traces as ghost values. Total mass changes only through the
/// endpoint fluxes `lambda * v_trace`, which cancel across the network.
pub fn transport_step(
    spec: &NetworkSpec,
    grids: &NetworkGrids,
    state: &mut NetworkState,
    traces: &NetworkTraces,
    dt: f64,
) -> Result<(), HyperbolicError> {
    state
        .states
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(i, s)| {
            let arc = &spec.arcs()[i];
            let h = grids.arc(i).h;
            let nu = arc.lambda * dt / h;
            if nu > 1.0 + 1e-12 {
                return Err(HyperbolicError::Cfl { arc: arc.id.clone(), nu });
            }
            let n = s.n_cells();
            let t = &traces.arcs[i];
            let mut wp = vec![0.0; n];
            let mut wm = vec![0.0; n];
            for j in 0..n {
                wp[j] = 0.5 * (s.u[j] + s.v[j]);
                wm[j] = 0.5 * (s.u[j] - s.v[j]);
            }
            let wp_ghost = 0.5 * (t.left.0 + t.left.1);
            let wm_ghost = 0.5 * (t.right.0 - t.right.1);
            for j in (1..n).rev() {
                wp[j] -= nu * (wp[j] - wp[j - 1]);
            }
            wp[0] -= nu * (wp[0] - wp_ghost);
            for j in 0..n - 1 {
                wm[j] -= nu * (wm[j] - wm[j + 1]);
            }
            wm[n - 1] -= nu * (wm[n - 1] - wm_ghost);
            for j in 0..n {
                let (u, v) = from_invariants(wp[j], wm[j]);
                s.u[j] = u;
                s.v[j] = v;
            }
            Ok(())
        })
}

/// Chemoattractant gradient on cell centers: centered differences in the
/// interior, second-order one-sided at the arc ends.
pub fn phi_gradient(h: f64, phi: &[f64], out: &mut Vec<f64>) {
    let n = phi.len();
    debug_assert!(n >= 3);
    out.clear();
    out.resize(n, 0.0);
    out[0] = (-3.0 * phi[0] + 4.0 * phi[1] - phi[2]) / (2.0 * h);
    for j in 1..n - 1 {
        out[j] = (phi[j + 1] - phi[j - 1]) / (2.0 * h);
    }
    out[n - 1] = (3.0 * phi[n - 1] - 4.0 * phi[n - 2] + phi[n - 3]) / (2.0 * h);
}

/// Exact integration of `v' = phi_x u - beta v` over `dt` with `u` and
/// `phi_x` frozen: `v <- v e^{-beta dt} + phi_x u (1 - e^{-beta dt}) / beta`.
/// `u` is unchanged. `betas` are effective per-arc values (zero when damping
/// is toggled off; the formula degenerates to explicit Euler exactly).
pub fn source_step(
    grids: &NetworkGrids,
    state: &mut NetworkState,
    phi_x: &[Vec<f64>],
    dt: f64,
    betas: &[f64],
    chemotaxis: bool,
) {
    let _ = grids;
    state.states.par_iter_mut().enumerate().for_each(|(i, s)| {
        let beta = betas[i];
        let decay = (-beta * dt).exp();
        // (1 - e^{-beta dt}) / beta via expm1 to avoid cancellation.
        let gain = if beta > 0.0 { -(-beta * dt).exp_m1() / beta } else { dt };
        let gx = &phi_x[i];
        for j in 0..s.u.len() {
            let source = if chemotaxis { gx[j] * s.u[j] } else { 0.0 };
            s.v[j] = s.v[j] * decay + source * gain;
        }
    });
}
