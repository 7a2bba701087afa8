//! Conserved-quantity and dissipation monitors, trajectory oracle, and
//! convergence harness.
//!
//! Discrete norms are fixed once here so recorded values are reproducible:
//! midpoint quadrature for L2, forward differences for first derivatives,
//! centered second differences for `phi_xx`. Time derivatives are backward
//! differences at the diagnostics cadence, zero by convention at `t = 0`;
//! time integrals accumulate by the trapezoid rule.

use crate::fields::{build_initial_state, InitialCondition, NetworkGrids, NetworkState};
use crate::hyperbolic::{build_node_systems, compute_traces, phi_gradient, NodeSystem};
use crate::network::{Direction, Endpoint, NetworkSpec};
use crate::parabolic::{apply_network_laplacian, node_kk_flux, node_phi_dissipation, ReactionCoeffs};
use crate::simulator::{compute_dt, SimError, Simulator, Toggles};
use std::io::{self, Write};

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

fn l2_sq(h: f64, f: &[f64]) -> f64 {
    h * neumaier_sum(f.iter().map(|x| x * x))
}

fn grad_l2_sq(h: f64, f: &[f64]) -> f64 {
    h * neumaier_sum(f.windows(2).map(|w| {
        let g = (w[1] - w[0]) / h;
        g * g
    }))
}

fn second_diff_l2_sq(h: f64, f: &[f64]) -> f64 {
    h * neumaier_sum(f.windows(3).map(|w| {
        let g = (w[2] - 2.0 * w[1] + w[0]) / (h * h);
        g * g
    }))
}

/// Per-sample scalar diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    /// Total density integral.
    pub mass: f64,
    /// Hyperbolic energy `sum_i int (u^2 + v^2)`.
    pub e1: f64,
    /// Parabolic energy `sum_i int phi^2`.
    pub e2: f64,
    /// Node dissipation rates of the hyperbolic traces, per node.
    pub gamma1: Vec<f64>,
    /// Node dissipation rates of the parabolic traces, per node.
    pub gamma2: Vec<f64>,
    /// Running `sum_i sup_t ||.||^2` terms of the boundedness functional.
    pub ft_sup_u: f64,
    pub ft_sup_v: f64,
    pub ft_sup_phi: f64,
    /// Running time integrals of the functional's integrands.
    pub ft_int_ux: f64,
    pub ft_int_v: f64,
    pub ft_int_vt: f64,
    pub ft_int_phix: f64,
    pub ft_int_phixt: f64,
    /// Max residual of the boundary/transmission relations on this state.
    pub compat_residual: f64,
}

impl DiagnosticsRecord {
    /// Value of the boundedness functional `F_T` at this sample.
    pub fn ft(&self) -> f64 {
        (self.ft_sup_u
            + self.ft_sup_v
            + self.ft_sup_phi
            + self.ft_int_ux
            + self.ft_int_v
            + self.ft_int_vt
            + self.ft_int_phix
            + self.ft_int_phixt)
            .sqrt()
    }
}

/// Stateful monitor accumulating the running sup/integral terms across
/// samples of one run.
pub struct Monitor<'a> {
    spec: &'a NetworkSpec,
    grids: &'a NetworkGrids,
    systems: Vec<NodeSystem>,
    prev: Option<NetworkState>,
    sup_u: Vec<f64>,
    sup_v: Vec<f64>,
    sup_phi: Vec<f64>,
    int_ux: f64,
    int_v: f64,
    int_vt: f64,
    int_phix: f64,
    int_phixt: f64,
    prev_integrand: [f64; 5],
}

impl<'a> Monitor<'a> {
    pub fn new(spec: &'a NetworkSpec, grids: &'a NetworkGrids) -> Result<Self, SimError> {
        let systems = build_node_systems(spec)?;
        let n = spec.n_arcs();
        Ok(Self {
            spec,
            grids,
            systems,
            prev: None,
            sup_u: vec![0.0; n],
            sup_v: vec![0.0; n],
            sup_phi: vec![0.0; n],
            int_ux: 0.0,
            int_v: 0.0,
            int_vt: 0.0,
            int_phix: 0.0,
            int_phixt: 0.0,
            prev_integrand: [0.0; 5],
        })
    }

    /// Measure one sampled state. States must be fed in time order.
    pub fn measure(&mut self, state: &NetworkState) -> DiagnosticsRecord {
        let spec = self.spec;
        let grids = self.grids;

        let mass = neumaier_sum(
            state
                .states
                .iter()
                .enumerate()
                .map(|(i, s)| grids.arc(i).h * neumaier_sum(s.u.iter().copied())),
        );
        let e1 = neumaier_sum(state.states.iter().enumerate().map(|(i, s)| {
            grids.arc(i).h * neumaier_sum(s.u.iter().zip(&s.v).map(|(&u, &v)| u * u + v * v))
        }));
        let e2 = neumaier_sum(
            state
                .states
                .iter()
                .enumerate()
                .map(|(i, s)| l2_sq(grids.arc(i).h, &s.phi)),
        );

        // Node dissipation rates. Gamma_1 is the trace bilinear form
        // sum_in lambda v u - sum_out lambda v u; the quadratic identity
        // against 1/2 sum K_ij (u_j - u_i)^2 is checked by the test suites.
        let traces = compute_traces(spec, &self.systems, state);
        let gamma1: Vec<f64> = traces
            .nodes
            .iter()
            .enumerate()
            .map(|(n, sol)| {
                let sys = &self.systems[n];
                neumaier_sum((0..sol.u_trace.len()).map(|i| {
                    sys.directions()[i].theta() * sys.lambdas()[i] * sol.v_trace[i] * sol.u_trace[i]
                }))
            })
            .collect();
        let gamma2: Vec<f64> = spec
            .node_ids()
            .map(|node| node_phi_dissipation(spec, state, node))
            .collect();

        // Running sups of the squared Sobolev norms, per arc.
        let mut sum_sup_u = 0.0;
        let mut sum_sup_v = 0.0;
        let mut sum_sup_phi = 0.0;
        for (i, s) in state.states.iter().enumerate() {
            let h = grids.arc(i).h;
            let u_h1 = l2_sq(h, &s.u) + grad_l2_sq(h, &s.u);
            let v_h1 = l2_sq(h, &s.v) + grad_l2_sq(h, &s.v);
            let phi_h2 =
                l2_sq(h, &s.phi) + grad_l2_sq(h, &s.phi) + second_diff_l2_sq(h, &s.phi);
            self.sup_u[i] = self.sup_u[i].max(u_h1);
            self.sup_v[i] = self.sup_v[i].max(v_h1);
            self.sup_phi[i] = self.sup_phi[i].max(phi_h2);
            sum_sup_u += self.sup_u[i];
            sum_sup_v += self.sup_v[i];
            sum_sup_phi += self.sup_phi[i];
        }

        // Instantaneous integrands of the time-integral terms.
        let mut g_ux = 0.0;
        let mut g_v = 0.0;
        let mut g_phix = 0.0;
        for (i, s) in state.states.iter().enumerate() {
            let h = grids.arc(i).h;
            g_ux += grad_l2_sq(h, &s.u);
            g_v += l2_sq(h, &s.v) + grad_l2_sq(h, &s.v);
            g_phix += grad_l2_sq(h, &s.phi) + second_diff_l2_sq(h, &s.phi);
        }
        let (mut g_vt, mut g_phixt) = (0.0, 0.0);
        let dt_sample = self.prev.as_ref().map(|p| state.time - p.time).unwrap_or(0.0);
        if let Some(prev) = &self.prev {
            if dt_sample > 0.0 {
                for (i, (s, p)) in state.states.iter().zip(&prev.states).enumerate() {
                    let h = grids.arc(i).h;
                    let vt: Vec<f64> =
                        s.v.iter().zip(&p.v).map(|(a, b)| (a - b) / dt_sample).collect();
                    g_vt += l2_sq(h, &vt);
                    let dphi: Vec<f64> =
                        s.phi.iter().zip(&p.phi).map(|(a, b)| (a - b) / dt_sample).collect();
                    g_phixt += grad_l2_sq(h, &dphi);
                }
            }
        }

        let cur = [g_ux, g_v, g_vt, g_phix, g_phixt];
        if self.prev.is_some() && dt_sample > 0.0 {
            let w = 0.5 * dt_sample;
            self.int_ux += w * (self.prev_integrand[0] + cur[0]);
            self.int_v += w * (self.prev_integrand[1] + cur[1]);
            self.int_vt += w * (self.prev_integrand[2] + cur[2]);
            self.int_phix += w * (self.prev_integrand[3] + cur[3]);
            self.int_phixt += w * (self.prev_integrand[4] + cur[4]);
        }
        self.prev_integrand = cur;
        self.prev = Some(state.clone());

        DiagnosticsRecord {
            time: state.time,
            mass,
            e1,
            e2,
            gamma1,
            gamma2,
            ft_sup_u: sum_sup_u,
            ft_sup_v: sum_sup_v,
            ft_sup_phi: sum_sup_phi,
            ft_int_ux: self.int_ux,
            ft_int_v: self.int_v,
            ft_int_vt: self.int_vt,
            ft_int_phix: self.int_phix,
            ft_int_phixt: self.int_phixt,
            compat_residual: compatibility_residual(spec, grids, state),
        }
    }
}

/// Maximum residual of the boundary and transmission relations evaluated on
/// a state with the solvers' trace approximations: adjacent cell values for
/// field traces, end-cell one-sided gradients for `phi_x`.
pub fn compatibility_residual(spec: &NetworkSpec, grids: &NetworkGrids, state: &NetworkState) -> f64 {
    let mut worst = 0.0f64;

    let end_phi_x = |arc: usize, dir: Direction| -> f64 {
        let s = &state.states[arc];
        let h = grids.arc(arc).h;
        let n = s.phi.len();
        match dir {
            // Node/external at the right end of the arc.
            Direction::Incoming => (3.0 * s.phi[n - 1] - 4.0 * s.phi[n - 2] + s.phi[n - 3]) / (2.0 * h),
            // Left end.
            Direction::Outgoing => (-3.0 * s.phi[0] + 4.0 * s.phi[1] - s.phi[2]) / (2.0 * h),
        }
    };

    for (i, arc) in spec.arcs().iter().enumerate() {
        let s = &state.states[i];
        let n = s.u.len();
        if let Endpoint::External(_) = arc.tail {
            worst = worst.max(s.v[0].abs());
            worst = worst.max(end_phi_x(i, Direction::Outgoing).abs());
        }
        if let Endpoint::External(_) = arc.head {
            worst = worst.max(s.v[n - 1].abs());
            worst = worst.max(end_phi_x(i, Direction::Incoming).abs());
        }
    }

    for node in spec.node_ids() {
        let incident = spec.arcs_at(node);
        let k = spec.k(node);
        let trace_uv = |slot: usize| -> (f64, f64) {
            let (arc, dir) = incident[slot];
            let s = &state.states[arc.0];
            match dir {
                Direction::Incoming => (s.u[s.u.len() - 1], s.v[s.v.len() - 1]),
                Direction::Outgoing => (s.u[0], s.v[0]),
            }
        };
        let kk = node_kk_flux(spec, state, node);
        for (si, &(arc, dir)) in incident.iter().enumerate() {
            let (_, v_i) = trace_uv(si);
            let jumps: f64 = (0..incident.len())
                .map(|sj| k.get(si, sj) * (trace_uv(sj).0 - trace_uv(si).0))
                .sum();
            worst = worst.max((dir.theta() * spec.arc(arc).lambda * v_i + jumps).abs());
            let d_phi_x = spec.arc(arc).d * end_phi_x(arc.0, dir);
            worst = worst.max((dir.theta() * d_phi_x - kk[si]).abs());
        }
    }
    worst
}

/// Reference trajectory: classical four-stage explicit integration of the
/// same semi-discrete system (identical trace solves, upwind differences
/// and diffusion stencil), with diffusion treated explicitly. Isolates the
/// main solver's splitting error.
pub fn oracle_run(
    spec: &NetworkSpec,
    grids: &NetworkGrids,
    ics: &[InitialCondition],
    t_final: f64,
    dt_oracle: f64,
    toggles: Toggles,
) -> Result<NetworkState, SimError> {
    let bound = spec
        .arcs()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let h = grids.arc(i).h;
            h * h / (2.0 * a.d)
        })
        .fold(f64::INFINITY, f64::min);
    if dt_oracle > bound {
        return Err(SimError::OracleStability { dt: dt_oracle, bound });
    }

    let systems = build_node_systems(spec)?;
    let reaction = if toggles.production {
        ReactionCoeffs::from_spec(spec)
    } else {
        ReactionCoeffs::production_off(spec)
    };
    let betas: Vec<f64> = spec
        .arcs()
        .iter()
        .map(|a| if toggles.damping { a.beta } else { 0.0 })
        .collect();

    let mut state = build_initial_state(spec, grids, ics)?;

    let rhs = |s: &NetworkState| -> Vec<crate::fields::ArcState> {
        let traces = compute_traces(spec, &systems, s);
        let phi_flat: Vec<f64> = s.states.iter().flat_map(|a| a.phi.iter().copied()).collect();
        let lap = apply_network_laplacian(spec, grids, &phi_flat);
        let mut out = Vec::with_capacity(s.states.len());
        let mut gx = Vec::new();
        for (i, a) in s.states.iter().enumerate() {
            let arc = &spec.arcs()[i];
            let h = grids.arc(i).h;
            let n = a.u.len();
            let t = &traces.arcs[i];
            phi_gradient(h, &a.phi, &mut gx);
            let mut d = crate::fields::ArcState::zeros(n);
            let wp = |j: usize| 0.5 * (a.u[j] + a.v[j]);
            let wm = |j: usize| 0.5 * (a.u[j] - a.v[j]);
            let wp_ghost = 0.5 * (t.left.0 + t.left.1);
            let wm_ghost = 0.5 * (t.right.0 - t.right.1);
            for j in 0..n {
                let source = if toggles.chemotaxis_source { gx[j] * a.u[j] } else { 0.0 }
                    - betas[i] * a.v[j];
                let upwind_p = if j == 0 { wp(0) - wp_ghost } else { wp(j) - wp(j - 1) };
                let upwind_m = if j + 1 == n { wm_ghost - wm(j) } else { wm(j + 1) - wm(j) };
                let dwp = -arc.lambda * upwind_p / h + 0.5 * source;
                let dwm = arc.lambda * upwind_m / h - 0.5 * source;
                d.u[j] = dwp + dwm;
                d.v[j] = dwp - dwm;
                d.phi[j] =
                    lap[grids.offset(i) + j] + reaction.a[i] * a.u[j] - reaction.b[i] * a.phi[j];
            }
            out.push(d);
        }
        out
    };

    let axpy = |s: &NetworkState, k: &[crate::fields::ArcState], c: f64| -> NetworkState {
        let mut out = s.clone();
        for (o, ki) in out.states.iter_mut().zip(k) {
            for j in 0..o.u.len() {
                o.u[j] += c * ki.u[j];
                o.v[j] += c * ki.v[j];
                o.phi[j] += c * ki.phi[j];
            }
        }
        out
    };

    let n_steps = ((t_final / dt_oracle) - 1e-9).ceil().max(1.0) as usize;
    let mut t = 0.0;
    for step in 0..n_steps {
        let last = step + 1 == n_steps;
        let dt = if last { t_final - t } else { dt_oracle };
        let k1 = rhs(&state);
        let k2 = rhs(&axpy(&state, &k1, 0.5 * dt));
        let k3 = rhs(&axpy(&state, &k2, 0.5 * dt));
        let k4 = rhs(&axpy(&state, &k3, dt));
        for (i, s) in state.states.iter_mut().enumerate() {
            for j in 0..s.u.len() {
                s.u[j] += dt / 6.0 * (k1[i].u[j] + 2.0 * k2[i].u[j] + 2.0 * k3[i].u[j] + k4[i].u[j]);
                s.v[j] += dt / 6.0 * (k1[i].v[j] + 2.0 * k2[i].v[j] + 2.0 * k3[i].v[j] + k4[i].v[j]);
                s.phi[j] +=
                    dt / 6.0 * (k1[i].phi[j] + 2.0 * k2[i].phi[j] + 2.0 * k3[i].phi[j] + k4[i].phi[j]);
            }
        }
        t += dt;
    }
    state.time = t_final;
    Ok(state)
}

/// L-infinity gap between two states over all fields.
pub fn linf_gap(a: &NetworkState, b: &NetworkState) -> f64 {
    let mut worst = 0.0f64;
    for (x, y) in a.states.iter().zip(&b.states) {
        for (p, q) in x.u.iter().zip(&y.u) {
            worst = worst.max((p - q).abs());
        }
        for (p, q) in x.v.iter().zip(&y.v) {
            worst = worst.max((p - q).abs());
        }
        for (p, q) in x.phi.iter().zip(&y.phi) {
            worst = worst.max((p - q).abs());
        }
    }
    worst
}

/// Refinement mode of [`convergence_study`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceMode {
    /// Full system, `dt` from the CFL rule; errors are Richardson
    /// differences between consecutive levels.
    Coupled,
    /// Chemoattractant-only decay on a sealed single arc (`u = v = 0`,
    /// cosine mode) against the exact solution, with `dt` proportional to
    /// `h^2` to expose the spatial order.
    PhiOnly,
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n_cells: usize,
    pub h: f64,
    pub dt: f64,
    pub err_u: Option<f64>,
    pub err_v: Option<f64>,
    pub err_phi: Option<f64>,
    pub order_u: Option<f64>,
    pub order_v: Option<f64>,
    pub order_phi: Option<f64>,
}

/// Errors below this are reported as exact (no meaningful order).
pub const CONVERGENCE_EXACT_FLOOR: f64 = 1e-12;

fn restrict_half(fine: &[f64]) -> Vec<f64> {
    fine.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect()
}

fn field_l2(grids: &NetworkGrids, per_arc: &[Vec<f64>]) -> f64 {
    neumaier_sum(per_arc.iter().enumerate().map(|(i, f)| l2_sq(grids.arc(i).h, f))).sqrt()
}

/// Grid refinement study. Initial conditions must be resampleable
/// (`custom-table` data is tied to one grid and is rejected).
pub fn convergence_study(
    spec: &NetworkSpec,
    ics: &[InitialCondition],
    base_cells: usize,
    t_final: f64,
    cfl: f64,
    levels: usize,
    mode: ConvergenceMode,
) -> Result<Vec<ConvergenceRow>, SimError> {
    if levels < 3 {
        return Err(SimError::Config(format!("convergence study needs >= 3 levels, got {levels}")));
    }
    if ics
        .iter()
        .any(|ic| matches!(ic, InitialCondition::CustomTable { .. }))
    {
        return Err(SimError::NonResampleableIc);
    }
    if mode == ConvergenceMode::PhiOnly && spec.n_nodes() > 0 {
        return Err(SimError::Config(
            "phi-only convergence runs on a single sealed arc".to_string(),
        ));
    }

    let mut solutions: Vec<(usize, f64, f64, NetworkState, NetworkGrids)> = Vec::new();
    for level in 0..levels {
        let n = base_cells << level;
        let grids = NetworkGrids::new(spec, &vec![n; spec.n_arcs()])?;
        let (dt_nominal, state0) = match mode {
            ConvergenceMode::Coupled => {
                (compute_dt(spec, &grids, cfl), build_initial_state(spec, &grids, ics)?)
            }
            ConvergenceMode::PhiOnly => {
                let h = grids.arc(0).h;
                let len = spec.arcs()[0].length;
                let n_cells = grids.arc(0).n_cells;
                let phi = (0..n_cells)
                    .map(|j| (std::f64::consts::PI * grids.arc(0).center(j) / len).cos())
                    .collect();
                let ic = InitialCondition::CustomTable {
                    u: vec![0.0; n_cells],
                    v: vec![0.0; n_cells],
                    phi,
                };
                (h * h, build_initial_state(spec, &grids, &[ic])?)
            }
        };
        let mut sim = Simulator::new(spec, &grids, Toggles::default())?;
        let mut state = state0;
        sim.advance(&mut state, t_final, dt_nominal, |_, _, _| {})?;
        let h = grids.arc(0).h;
        solutions.push((n, h, dt_nominal, state, grids));
    }

    let mut rows = Vec::with_capacity(levels);
    match mode {
        ConvergenceMode::Coupled => {
            // Richardson differences between consecutive levels.
            let mut diffs: Vec<[f64; 3]> = Vec::new();
            for k in 0..levels - 1 {
                let (_, _, _, coarse, coarse_grids) = &solutions[k];
                let (_, _, _, fine, _) = &solutions[k + 1];
                let mut per_field = [0.0; 3];
                for (fi, pick) in [
                    |s: &crate::fields::ArcState| s.u.clone(),
                    |s: &crate::fields::ArcState| s.v.clone(),
                    |s: &crate::fields::ArcState| s.phi.clone(),
                ]
                .iter()
                .enumerate()
                {
                    let deltas: Vec<Vec<f64>> = coarse
                        .states
                        .iter()
                        .zip(&fine.states)
                        .map(|(c, f)| {
                            let fr = restrict_half(&pick(f));
                            pick(c).iter().zip(fr).map(|(a, b)| a - b).collect()
                        })
                        .collect();
                    per_field[fi] = field_l2(coarse_grids, &deltas);
                }
                diffs.push(per_field);
            }
            for k in 0..levels {
                let (n, h, dt, _, _) = &solutions[k];
                let err = diffs.get(k);
                let order = |fi: usize| -> Option<f64> {
                    if k == 0 || k >= levels - 1 {
                        return None;
                    }
                    let (e0, e1) = (diffs[k - 1][fi], diffs[k][fi]);
                    (e0 > CONVERGENCE_EXACT_FLOOR && e1 > CONVERGENCE_EXACT_FLOOR)
                        .then(|| (e0 / e1).log2())
                };
                rows.push(ConvergenceRow {
                    n_cells: *n,
                    h: *h,
                    dt: *dt,
                    err_u: err.map(|e| e[0]),
                    err_v: err.map(|e| e[1]),
                    err_phi: err.map(|e| e[2]),
                    order_u: order(0),
                    order_v: order(1),
                    order_phi: order(2),
                });
            }
        }
        ConvergenceMode::PhiOnly => {
            let len = spec.arcs()[0].length;
            let arc = &spec.arcs()[0];
            let sigma = arc.d * (std::f64::consts::PI / len).powi(2) + arc.b;
            let decay = (-sigma * t_final).exp();
            let mut errs: Vec<f64> = Vec::new();
            for (_, _, _, state, grids) in &solutions {
                let g = grids.arc(0);
                let exact_err: Vec<Vec<f64>> = vec![state.states[0]
                    .phi
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        p - decay * (std::f64::consts::PI * g.center(j) / len).cos()
                    })
                    .collect()];
                errs.push(field_l2(grids, &exact_err));
            }
            for k in 0..levels {
                let (n, h, dt, _, _) = &solutions[k];
                let order = (k > 0
                    && errs[k - 1] > CONVERGENCE_EXACT_FLOOR
                    && errs[k] > CONVERGENCE_EXACT_FLOOR)
                    .then(|| (errs[k - 1] / errs[k]).log2());
                rows.push(ConvergenceRow {
                    n_cells: *n,
                    h: *h,
                    dt: *dt,
                    err_u: Some(0.0),
                    err_v: Some(0.0),
                    err_phi: Some(errs[k]),
                    order_u: None,
                    order_v: None,
                    order_phi: order,
                });
            }
        }
    }
    Ok(rows)
}

// -------------------------------------------------------------------------
// CSV output
// -------------------------------------------------------------------------

/// Write the time-series CSV (one row per sample).
pub fn write_records_csv<W: Write>(
    w: &mut W,
    spec: &NetworkSpec,
    records: &[DiagnosticsRecord],
) -> io::Result<()> {
    write!(w, "time,mass,E1,E2")?;
    for node in spec.node_ids() {
        write!(w, ",gamma1_{}", spec.node_name(node))?;
    }
    for node in spec.node_ids() {
        write!(w, ",gamma2_{}", spec.node_name(node))?;
    }
    writeln!(
        w,
        ",FT_sup_u,FT_sup_v,FT_sup_phi,FT_int_ux,FT_int_v,FT_int_vt,FT_int_phix,FT_int_phixt,compat_residual"
    )?;
    for r in records {
        write!(w, "{:e},{:e},{:e},{:e}", r.time, r.mass, r.e1, r.e2)?;
        for g in &r.gamma1 {
            write!(w, ",{g:e}")?;
        }
        for g in &r.gamma2 {
            write!(w, ",{g:e}")?;
        }
        writeln!(
            w,
            ",{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.ft_sup_u,
            r.ft_sup_v,
            r.ft_sup_phi,
            r.ft_int_ux,
            r.ft_int_v,
            r.ft_int_vt,
            r.ft_int_phix,
            r.ft_int_phixt,
            r.compat_residual
        )?;
    }
    Ok(())
}

/// Write one field snapshot CSV (`arc, x, u, v, phi` per cell).
pub fn write_snapshot_csv<W: Write>(
    w: &mut W,
    spec: &NetworkSpec,
    grids: &NetworkGrids,
    state: &NetworkState,
) -> io::Result<()> {
    writeln!(w, "arc,x,u,v,phi")?;
    for (i, s) in state.states.iter().enumerate() {
        let id = &spec.arcs()[i].id;
        let g = grids.arc(i);
        for j in 0..s.u.len() {
            writeln!(w, "{id},{:e},{:e},{:e},{:e}", g.center(j), s.u[j], s.v[j], s.phi[j])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_network;
    use crate::simulator::{run, SimConfig};
    use crate::testnets;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_state_measures_zero() {
        let spec = parse_network(&testnets::star3_json()).unwrap();
        let grids = NetworkGrids::new(&spec, &[8, 8, 8]).unwrap();
        let state = NetworkState::zeros(&grids);
        let mut monitor = Monitor::new(&spec, &grids).unwrap();
        let r = monitor.measure(&state);
        assert_eq!(r.mass, 0.0);
        assert_eq!(r.e1, 0.0);
        assert_eq!(r.e2, 0.0);
        assert!(r.gamma1.iter().all(|&g| g == 0.0));
        assert!(r.gamma2.iter().all(|&g| g == 0.0));
        assert_eq!(r.ft(), 0.0);
        assert_eq!(r.compat_residual, 0.0);
    }

    #[test]
    fn constant_field_quadrature() {
        // u = 1, v = 0, phi = 0 on a unit arc with 8 cells.
        let spec = parse_network(&testnets::single_arc_json(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let grids = NetworkGrids::new(&spec, &[8]).unwrap();
        let state = build_initial_state(
            &spec,
            &grids,
            &[InitialCondition::Constant { u: 1.0, v: 0.0, phi: 0.0 }],
        )
        .unwrap();
        let mut monitor = Monitor::new(&spec, &grids).unwrap();
        let r = monitor.measure(&state);
        assert_abs_diff_eq!(r.mass, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.e1, 1.0, epsilon = 1e-15);
        assert_eq!(r.e2, 0.0);
    }

    #[test]
    fn compat_residual_examples() {
        let spec = parse_network(&testnets::star3_json()).unwrap();
        let grids = NetworkGrids::new(&spec, &[16, 16, 16]).unwrap();

        // Steady data: residual exactly zero.
        let steady = build_initial_state(
            &spec,
            &grids,
            &vec![InitialCondition::Steady { u: 1.0 }; 3],
        )
        .unwrap();
        assert_eq!(compatibility_residual(&spec, &grids, &steady), 0.0);

        // v = 1 on an external arc violates the boundary condition.
        let biased = build_initial_state(
            &spec,
            &grids,
            &[
                InitialCondition::Constant { u: 0.0, v: 1.0, phi: 0.0 },
                InitialCondition::Constant { u: 0.0, v: 0.0, phi: 0.0 },
                InitialCondition::Constant { u: 0.0, v: 0.0, phi: 0.0 },
            ],
        )
        .unwrap();
        assert!(compatibility_residual(&spec, &grids, &biased) >= 1.0);

        // Mid-arc gaussian bump: tails are negligible at the boundary.
        let gauss = build_initial_state(
            &spec,
            &grids,
            &[
                InitialCondition::Gaussian { amplitude: 1.0, center: 0.5, width: 0.05 },
                InitialCondition::Constant { u: 0.0, v: 0.0, phi: 0.0 },
                InitialCondition::Constant { u: 0.0, v: 0.0, phi: 0.0 },
            ],
        )
        .unwrap();
        assert!(compatibility_residual(&spec, &grids, &gauss) <= 1e-8);
    }

    #[test]
    fn oracle_preserves_steady_state() {
        let spec = parse_network(&testnets::star3_json()).unwrap();
        let grids = NetworkGrids::new(&spec, &[8, 8, 8]).unwrap();
        let ics = vec![InitialCondition::Steady { u: 1.5 }; 3];
        let reference = build_initial_state(&spec, &grids, &ics).unwrap();
        let state =
            oracle_run(&spec, &grids, &ics, 0.1, 1e-3, Toggles::default()).unwrap();
        assert!(linf_gap(&state, &reference) <= 1e-12);
    }

    #[test]
    fn oracle_rejects_unstable_dt() {
        let spec = parse_network(&testnets::single_arc_json(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let grids = NetworkGrids::new(&spec, &[32]).unwrap();
        let ics = vec![InitialCondition::Steady { u: 1.0 }];
        let err = oracle_run(&spec, &grids, &ics, 0.1, 1.0, Toggles::default());
        assert!(matches!(err, Err(SimError::OracleStability { .. })));
    }

    #[test]
    fn oracle_matches_fourier_decay_at_h_squared() {
        // Pure diffusion: u = v = 0, phi cosine mode; the oracle's time
        // error is negligible so the gap to the continuous solution is the
        // O(h^2) spatial error.
        let (d, b, len) = (0.25, 0.5, 1.0);
        let pi = std::f64::consts::PI;
        let mut errs = Vec::new();
        for n in [8usize, 16] {
            let spec =
                parse_network(&testnets::single_arc_json(len, 1.0, d, 1.0, 0.0, b)).unwrap();
            let grids = NetworkGrids::new(&spec, &[n]).unwrap();
            let phi: Vec<f64> =
                (0..n).map(|j| (pi * grids.arc(0).center(j) / len).cos()).collect();
            let ics = vec![InitialCondition::CustomTable {
                u: vec![0.0; n],
                v: vec![0.0; n],
                phi,
            }];
            let t_final = 0.2;
            let dt = 0.2 * grids.arc(0).h * grids.arc(0).h / (2.0 * d);
            let state = oracle_run(&spec, &grids, &ics, t_final, dt, Toggles::default()).unwrap();
            let sigma = d * (pi / len).powi(2) + b;
            let err: f64 = state.states[0]
                .phi
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    let exact = (-sigma * t_final).exp() * (pi * grids.arc(0).center(j) / len).cos();
                    (p - exact).powi(2) * grids.arc(0).h
                })
                .sum::<f64>()
                .sqrt();
            errs.push(err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!((1.7..2.3).contains(&order), "spatial order {order}");
    }

    #[test]
    fn ft_components_are_monotone() {
        let spec = parse_network(&testnets::star3_json()).unwrap();
        let config = SimConfig {
            t_final: 1.0,
            cfl: 0.9,
            n_cells: vec![12; 3],
            output_every: 5,
            toggles: Toggles::default(),
            compat_check: false,
        };
        let ics = vec![
            InitialCondition::Gaussian { amplitude: 0.3, center: 0.5, width: 0.08 },
            InitialCondition::Steady { u: 0.1 },
            InitialCondition::Steady { u: 0.1 },
        ];
        let result = run(&spec, &config, &ics).unwrap();
        for pair in result.records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert!(b.ft_sup_u >= a.ft_sup_u);
            assert!(b.ft_sup_v >= a.ft_sup_v);
            assert!(b.ft_sup_phi >= a.ft_sup_phi);
            assert!(b.ft_int_ux >= a.ft_int_ux);
            assert!(b.ft_int_v >= a.ft_int_v);
            assert!(b.ft_int_vt >= a.ft_int_vt);
            assert!(b.ft_int_phix >= a.ft_int_phix);
            assert!(b.ft_int_phixt >= a.ft_int_phixt);
            assert!(b.gamma1.iter().all(|&g| g >= -1e-12));
            assert!(b.gamma2.iter().all(|&g| g >= -1e-12));
        }
    }

    #[test]
    fn steady_convergence_reports_exact() {
        let spec = parse_network(&testnets::single_arc_json(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let rows = convergence_study(
            &spec,
            &[InitialCondition::Steady { u: 1.0 }],
            8,
            0.2,
            0.9,
            3,
            ConvergenceMode::Coupled,
        )
        .unwrap();
        for row in &rows[..rows.len() - 1] {
            assert!(row.err_u.unwrap() <= CONVERGENCE_EXACT_FLOOR);
            assert!(row.err_v.unwrap() <= CONVERGENCE_EXACT_FLOOR);
            assert!(row.err_phi.unwrap() <= CONVERGENCE_EXACT_FLOOR);
            assert!(row.order_u.is_none());
        }
    }

    #[test]
    fn custom_table_ics_are_rejected_by_study() {
        let spec = parse_network(&testnets::single_arc_json(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let err = convergence_study(
            &spec,
            &[InitialCondition::CustomTable {
                u: vec![0.0; 8],
                v: vec![0.0; 8],
                phi: vec![0.0; 8],
            }],
            8,
            0.2,
            0.9,
            3,
            ConvergenceMode::Coupled,
        );
        assert!(matches!(err, Err(SimError::NonResampleableIc)));
    }
}
