//! Implicit diffusion-reaction step for the chemoattractant on the whole
//! network.
//!
//! Backward Euler on `phi_t = D phi_xx + a u - b phi` with zero-flux
//! external closures and Kedem-Katchalsky node fluxes evaluated on the
//! node-adjacent cell values: arc `i` receives the interface flux
//! `F_i = sum_j alpha_ij (Phi_j - Phi_i)`. The resulting matrix is strictly
//! diagonally dominant for any `dt > 0`, and the pure-diffusion rows sum to
//! zero so network totals change only through the reaction terms.
//!
//! The linear system is tridiagonal within each arc and couples arcs only
//! through their node-adjacent cells, so it is solved directly with Thomas
//! factorizations per arc and a dense Schur complement over the
//! node-adjacent cells. Factorizations are cached for a fixed `dt`.

use crate::fields::{NetworkGrids, NetworkState};
use crate::network::{Direction, NetworkSpec, NodeId};
use nalgebra::{DMatrix, DVector, LU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParabolicError {
    #[error("diffusion Schur complement is singular")]
    Singular,
}

/// Effective per-arc reaction coefficients fed to the assembly. Network
/// validation requires `b > 0`, but the assembled operator is well posed
/// for any `a, b >= 0`, which the conservation diagnostics rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionCoeffs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ReactionCoeffs {
    pub fn from_spec(spec: &NetworkSpec) -> Self {
        Self {
            a: spec.arcs().iter().map(|a| a.a).collect(),
            b: spec.arcs().iter().map(|a| a.b).collect(),
        }
    }

    /// Production toggle off: no `a u` source feeding the chemoattractant.
    pub fn production_off(spec: &NetworkSpec) -> Self {
        Self { a: vec![0.0; spec.n_arcs()], b: spec.arcs().iter().map(|a| a.b).collect() }
    }

    /// Pure flux form, used by conservation audits.
    pub fn zero(n_arcs: usize) -> Self {
        Self { a: vec![0.0; n_arcs], b: vec![0.0; n_arcs] }
    }
}

/// Flat cell index of the node-adjacent cell of `arc` at a node it meets.
fn end_cell(grids: &NetworkGrids, arc: usize, dir: Direction) -> usize {
    match dir {
        Direction::Incoming => grids.offset(arc) + grids.arc(arc).n_cells - 1,
        Direction::Outgoing => grids.offset(arc),
    }
}

/// Enumerate every flux coupling of the discrete diffusion operator as
/// `(p, q, w_p, w_q)` with `(L phi)_p += w_p (phi_q - phi_p)` and
/// `(L phi)_q += w_q (phi_p - phi_q)`. Shared by the implicit assembly and
/// the explicit application so both use identical formulas.
fn visit_flux_pairs(
    spec: &NetworkSpec,
    grids: &NetworkGrids,
    mut f: impl FnMut(usize, usize, f64, f64),
) {
    for (i, arc) in spec.arcs().iter().enumerate() {
        let g = grids.arc(i);
        let w = arc.d / (g.h * g.h);
        let off = grids.offset(i);
        for j in 0..g.n_cells - 1 {
            f(off + j, off + j + 1, w, w);
        }
    }
    for node in spec.node_ids() {
        let incident = spec.arcs_at(node);
        let alpha = spec.alpha(node);
        for si in 0..incident.len() {
            for sj in si + 1..incident.len() {
                let a = alpha.get(si, sj);
                if a == 0.0 {
                    continue;
                }
                let (ai, di) = incident[si];
                let (aj, dj) = incident[sj];
                let p = end_cell(grids, ai.0, di);
                let q = end_cell(grids, aj.0, dj);
                f(p, q, a / grids.arc(ai.0).h, a / grids.arc(aj.0).h);
            }
        }
    }
}

/// Apply the discrete diffusion operator (no reaction) to a flat `phi`
/// vector. Used by the explicit method-of-lines oracle.
pub fn apply_network_laplacian(spec: &NetworkSpec, grids: &NetworkGrids, phi: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; phi.len()];
    visit_flux_pairs(spec, grids, |p, q, wp, wq| {
        let jump = phi[q] - phi[p];
        out[p] += wp * jump;
        out[q] -= wq * jump;
    });
    out
}

struct Chain {
    /// Flat index of the first chain cell.
    start: usize,
    len: usize,
    /// In-arc coupling `-D/h^2`.
    offdiag: f64,
    /// Thomas factors of the chain's tridiagonal block.
    sub_mult: Vec<f64>,
    diag_mod: Vec<f64>,
}

impl Chain {
    fn factor(diag: &[f64], start: usize, len: usize, offdiag: f64) -> Self {
        let mut sub_mult = vec![0.0; len];
        let mut diag_mod = vec![0.0; len];
        diag_mod[0] = diag[start];
        for i in 1..len {
            sub_mult[i] = offdiag / diag_mod[i - 1];
            diag_mod[i] = diag[start + i] - sub_mult[i] * offdiag;
        }
        Chain { start, len, offdiag, sub_mult, diag_mod }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        for i in 1..self.len {
            x[i] -= self.sub_mult[i] * x[i - 1];
        }
        x[self.len - 1] /= self.diag_mod[self.len - 1];
        for i in (0..self.len - 1).rev() {
            x[i] = (x[i] - self.offdiag * x[i + 1]) / self.diag_mod[i];
        }
        x
    }
}

struct NodeSlot {
    /// Flat index of the node-adjacent cell this slot eliminates.
    cell: usize,
    chain: usize,
    /// Local index (within the chain) of the cell's in-arc neighbour.
    nb_local: usize,
    /// Coupling to that neighbour, `-D/h^2`.
    coupling: f64,
    /// Cached `A^{-1} B[:, slot]` column over the chain.
    elim: Vec<f64>,
}

/// Assembled and factored implicit system for one timestep size.
pub struct DiffusionSystem {
    dt: f64,
    reaction: ReactionCoeffs,
    chains: Vec<Chain>,
    slots: Vec<NodeSlot>,
    schur: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    total_cells: usize,
}

impl DiffusionSystem {
    /// Assemble with the network's own reaction coefficients.
    pub fn assemble(spec: &NetworkSpec, grids: &NetworkGrids, dt: f64) -> Result<Self, ParabolicError> {
        Self::assemble_with(spec, grids, dt, ReactionCoeffs::from_spec(spec))
    }

    pub fn assemble_with(
        spec: &NetworkSpec,
        grids: &NetworkGrids,
        dt: f64,
        reaction: ReactionCoeffs,
    ) -> Result<Self, ParabolicError> {
        assert!(dt > 0.0, "dt must be positive");
        let total = grids.total_cells();

        // Full diagonal of M = (1/dt + b) I - L.
        let mut diag = vec![0.0; total];
        for i in 0..spec.n_arcs() {
            let off = grids.offset(i);
            for j in 0..grids.arc(i).n_cells {
                diag[off + j] = 1.0 / dt + reaction.b[i];
            }
        }
        visit_flux_pairs(spec, grids, |p, q, wp, wq| {
            diag[p] += wp;
            diag[q] += wq;
        });

        // Node-adjacent cells, node-major, aligned with arcs_at order.
        let mut slot_of_cell = vec![None; total];
        let mut slots = Vec::new();
        let mut node_slot_offset = Vec::with_capacity(spec.n_nodes());
        for node in spec.node_ids() {
            node_slot_offset.push(slots.len());
            for &(arc, dir) in spec.arcs_at(node) {
                let cell = end_cell(grids, arc.0, dir);
                let g = grids.arc(arc.0);
                let nb_local_cell = match dir {
                    Direction::Incoming => g.n_cells - 2,
                    Direction::Outgoing => 1,
                };
                slot_of_cell[cell] = Some(slots.len());
                slots.push(NodeSlot {
                    cell,
                    chain: arc.0,
                    nb_local: nb_local_cell, // fixed up after chains exist
                    coupling: -spec.arc(arc).d / (g.h * g.h),
                    elim: Vec::new(),
                });
            }
        }

        // Interior chains: per arc, cells minus any node-adjacent ends.
        let mut chains = Vec::with_capacity(spec.n_arcs());
        for i in 0..spec.n_arcs() {
            let g = grids.arc(i);
            let off = grids.offset(i);
            let skip_first = slot_of_cell[off].is_some();
            let skip_last = slot_of_cell[off + g.n_cells - 1].is_some();
            let start = off + usize::from(skip_first);
            let len = g.n_cells - usize::from(skip_first) - usize::from(skip_last);
            let offdiag = -spec.arcs()[i].d / (g.h * g.h);
            chains.push(Chain::factor(&diag, start, len, offdiag));
        }
        for slot in &mut slots {
            let chain = &chains[slot.chain];
            let nb_cell = grids.offset(slot.chain) + slot.nb_local;
            slot.nb_local = nb_cell - chain.start;
            let mut rhs = vec![0.0; chain.len];
            rhs[slot.nb_local] = slot.coupling;
            slot.elim = chain.solve(&rhs);
        }

        // Dense Schur complement over the node-adjacent cells.
        let schur = if slots.is_empty() {
            None
        } else {
            let m = slots.len();
            let mut s = DMatrix::zeros(m, m);
            for (e, slot) in slots.iter().enumerate() {
                s[(e, e)] = diag[slot.cell];
            }
            for (n_idx, node) in spec.node_ids().enumerate() {
                let incident = spec.arcs_at(node);
                let alpha = spec.alpha(node);
                let base = node_slot_offset[n_idx];
                for si in 0..incident.len() {
                    for sj in 0..incident.len() {
                        if si != sj {
                            let h_i = grids.arc(incident[si].0 .0).h;
                            s[(base + si, base + sj)] -= alpha.get(si, sj) / h_i;
                        }
                    }
                }
            }
            for (e, slot) in slots.iter().enumerate() {
                for (e2, slot2) in slots.iter().enumerate() {
                    if slot2.chain == slot.chain {
                        s[(e2, e)] -= slot2.coupling * slot.elim[slot2.nb_local];
                    }
                }
            }
            let lu = s.lu();
            if !lu.is_invertible() {
                return Err(ParabolicError::Singular);
            }
            Some(lu)
        };

        Ok(Self { dt, reaction, chains, slots, schur, total_cells: total })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Solve `M x = rhs` for a flat right-hand side.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(rhs.len(), self.total_cells);
        let mut x = vec![0.0; self.total_cells];

        let interior: Vec<Vec<f64>> = self
            .chains
            .iter()
            .map(|c| c.solve(&rhs[c.start..c.start + c.len]))
            .collect();

        if let Some(lu) = &self.schur {
            let mut g = DVector::zeros(self.slots.len());
            for (e, slot) in self.slots.iter().enumerate() {
                g[e] = rhs[slot.cell] - slot.coupling * interior[slot.chain][slot.nb_local];
            }
            let y = lu.solve(&g).expect("factored Schur complement solves");
            for (e, slot) in self.slots.iter().enumerate() {
                x[slot.cell] = y[e];
            }
            let mut interior = interior;
            for (e, slot) in self.slots.iter().enumerate() {
                let t = &mut interior[slot.chain];
                for (ti, zi) in t.iter_mut().zip(&slot.elim) {
                    *ti -= y[e] * zi;
                }
            }
            for (chain, t) in self.chains.iter().zip(interior) {
                x[chain.start..chain.start + chain.len].copy_from_slice(&t);
            }
        } else {
            for (chain, t) in self.chains.iter().zip(interior) {
                x[chain.start..chain.start + chain.len].copy_from_slice(&t);
            }
        }
        x
    }

    /// One implicit Euler step: solves
    /// `(1/dt + b) phi' - L phi' = phi/dt + a u` and writes `phi'` back.
    /// `state.u` is the freshly transported density.
    pub fn step(&self, grids: &NetworkGrids, state: &mut NetworkState) {
        let mut rhs = vec![0.0; self.total_cells];
        for (i, s) in state.states.iter().enumerate() {
            let off = grids.offset(i);
            let a = self.reaction.a[i];
            for j in 0..s.phi.len() {
                rhs[off + j] = s.phi[j] / self.dt + a * s.u[j];
            }
        }
        let x = self.solve(&rhs);
        for (i, s) in state.states.iter_mut().enumerate() {
            let off = grids.offset(i);
            let n = s.phi.len();
            s.phi.copy_from_slice(&x[off..off + n]);
        }
    }
}

/// Node dissipation rate of the parabolic field,
/// `Gamma_2 = 1/2 sum_ij alpha_ij (Phi_j - Phi_i)^2` on the node-adjacent
/// cell values. Nonnegative by construction.
pub fn node_phi_dissipation(spec: &NetworkSpec, state: &NetworkState, node: NodeId) -> f64 {
    let incident = spec.arcs_at(node);
    let alpha = spec.alpha(node);
    let trace = |slot: usize| {
        let (arc, dir) = incident[slot];
        let s = &state.states[arc.0];
        match dir {
            Direction::Incoming => s.phi[s.phi.len() - 1],
            Direction::Outgoing => s.phi[0],
        }
    };
    let mut sum = 0.0;
    for i in 0..incident.len() {
        for j in 0..incident.len() {
            let d = trace(j) - trace(i);
            sum += 0.5 * alpha.get(i, j) * d * d;
        }
    }
    sum
}

/// Kedem-Katchalsky flux received by arc slot `i` at `node`,
/// `F_i = sum_j alpha_ij (Phi_j - Phi_i)`, on node-adjacent cell values.
pub fn node_kk_flux(spec: &NetworkSpec, state: &NetworkState, node: NodeId) -> Vec<f64> {
    let incident = spec.arcs_at(node);
    let alpha = spec.alpha(node);
    let trace = |slot: usize| {
        let (arc, dir) = incident[slot];
        let s = &state.states[arc.0];
        match dir {
            Direction::Incoming => s.phi[s.phi.len() - 1],
            Direction::Outgoing => s.phi[0],
        }
    };
    (0..incident.len())
        .map(|i| {
            (0..incident.len())
                .map(|j| alpha.get(i, j) * (trace(j) - trace(i)))
                .sum()
        })
        .collect()
}
