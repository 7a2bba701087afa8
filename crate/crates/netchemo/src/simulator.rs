//! Time-loop orchestration: CFL control, Lie splitting
//! (transport -> v-source -> diffusion), output cadence.

use crate::diagnostics::{DiagnosticsRecord, Monitor};
use crate::fields::{build_initial_state, FieldsError, InitialCondition, NetworkGrids, NetworkState};
use crate::hyperbolic::{
    build_node_systems, compute_traces, phi_gradient, source_step, transport_step, HyperbolicError,
    NodeSystem,
};
use crate::network::NetworkSpec;
use crate::parabolic::{DiffusionSystem, ParabolicError, ReactionCoeffs};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Hyperbolic(#[from] HyperbolicError),
    #[error(transparent)]
    Parabolic(#[from] ParabolicError),
    #[error(transparent)]
    Fields(#[from] FieldsError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("oracle dt {dt} exceeds the explicit diffusion stability bound {bound}")]
    OracleStability { dt: f64, bound: f64 },
    #[error("convergence study requires resampleable initial conditions (no custom tables)")]
    NonResampleableIc,
}

/// Term toggles for diagnostic ablations. All on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Toggles {
    /// `phi_x u` source in the flux equation.
    pub chemotaxis_source: bool,
    /// `-beta v` damping in the flux equation.
    pub damping: bool,
    /// `a u` production in the chemoattractant equation.
    pub production: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self { chemotaxis_source: true, damping: true, production: true }
    }
}

/// Run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_final: f64,
    /// CFL number in (0, 1].
    pub cfl: f64,
    /// Cells per arc, indexed by arc.
    pub n_cells: Vec<usize>,
    /// Diagnostics cadence in steps.
    pub output_every: usize,
    pub toggles: Toggles,
    pub compat_check: bool,
}

impl SimConfig {
    pub fn validate(&self, spec: &NetworkSpec) -> Result<(), SimError> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(SimError::Config(format!("t_final must be positive, got {}", self.t_final)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(SimError::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if self.output_every == 0 {
            return Err(SimError::Config("output_every must be >= 1".to_string()));
        }
        if self.n_cells.len() != spec.n_arcs() {
            return Err(SimError::Config(format!(
                "n_cells covers {} arcs, network has {}",
                self.n_cells.len(),
                spec.n_arcs()
            )));
        }
        Ok(())
    }
}

/// Largest stable transport step: `cfl * min_i(h_i / lambda_i)`.
pub fn compute_dt(spec: &NetworkSpec, grids: &NetworkGrids, cfl: f64) -> f64 {
    let min_ratio = spec
        .arcs()
        .iter()
        .enumerate()
        .map(|(i, a)| grids.arc(i).h / a.lambda)
        .fold(f64::INFINITY, f64::min);
    cfl * min_ratio
}

/// One network simulation with cached node and diffusion factorizations.
pub struct Simulator<'a> {
    spec: &'a NetworkSpec,
    grids: &'a NetworkGrids,
    toggles: Toggles,
    node_systems: Vec<NodeSystem>,
    betas_eff: Vec<f64>,
    diffusion: Option<DiffusionSystem>,
    phi_x: Vec<Vec<f64>>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        spec: &'a NetworkSpec,
        grids: &'a NetworkGrids,
        toggles: Toggles,
    ) -> Result<Self, SimError> {
        let node_systems = build_node_systems(spec)?;
        let betas_eff = spec
            .arcs()
            .iter()
            .map(|a| if toggles.damping { a.beta } else { 0.0 })
            .collect();
        Ok(Self {
            spec,
            grids,
            toggles,
            node_systems,
            betas_eff,
            diffusion: None,
            phi_x: vec![Vec::new(); spec.n_arcs()],
        })
    }

    pub fn node_systems(&self) -> &[NodeSystem] {
        &self.node_systems
    }

    fn ensure_diffusion(&mut self, dt: f64) -> Result<&DiffusionSystem, SimError> {
        let stale = match &self.diffusion {
            Some(sys) => (sys.dt() - dt).abs() > 1e-12 * sys.dt(),
            None => true,
        };
        if stale {
            let reaction = if self.toggles.production {
                ReactionCoeffs::from_spec(self.spec)
            } else {
                ReactionCoeffs::production_off(self.spec)
            };
            self.diffusion =
                Some(DiffusionSystem::assemble_with(self.spec, self.grids, dt, reaction)?);
        }
        Ok(self.diffusion.as_ref().unwrap())
    }

    /// Advance a state by `dt`: node/boundary trace solves, upwind
    /// transport, exponential v-source with frozen `phi_x`, then implicit
    /// diffusion fed by the transported density.
    pub fn step(&mut self, state: &NetworkState, dt: f64) -> Result<NetworkState, SimError> {
        let mut next = state.clone();
        self.step_in_place(&mut next, dt)?;
        Ok(next)
    }

    fn step_in_place(&mut self, state: &mut NetworkState, dt: f64) -> Result<(), SimError> {
        let traces = compute_traces(self.spec, &self.node_systems, state);
        transport_step(self.spec, self.grids, state, &traces, dt)?;
        for (i, s) in state.states.iter().enumerate() {
            phi_gradient(self.grids.arc(i).h, &s.phi, &mut self.phi_x[i]);
        }
        source_step(
            self.grids,
            state,
            &self.phi_x,
            dt,
            &self.betas_eff,
            self.toggles.chemotaxis_source,
        );
        let grids = self.grids;
        self.ensure_diffusion(dt)?.step(grids, state);
        state.time += dt;
        Ok(())
    }

    /// Step repeatedly until `t_final`, shortening the final step to land on
    /// it exactly. Elapsed time is accumulated with Neumaier compensation.
    /// `after_step` receives `(state, step index, is_last)`.
    pub fn advance(
        &mut self,
        state: &mut NetworkState,
        t_final: f64,
        dt_nominal: f64,
        mut after_step: impl FnMut(&NetworkState, usize, bool),
    ) -> Result<usize, SimError> {
        let t0 = state.time;
        let span = t_final - t0;
        assert!(span > 0.0 && dt_nominal > 0.0, "advance needs t_final ahead of the state");
        let mut n_steps = ((span / dt_nominal) - 1e-9).ceil().max(1.0) as usize;
        if span - (n_steps as f64 - 1.0) * dt_nominal > dt_nominal * (1.0 + 1e-12) {
            n_steps += 1;
        }
        let mut t = 0.0f64;
        let mut comp = 0.0f64;
        for step in 0..n_steps {
            let last = step + 1 == n_steps;
            let dt = if last { span - (t + comp) } else { dt_nominal };
            self.step_in_place(state, dt)?;
            let sum = t + dt;
            comp += if t.abs() >= dt.abs() { (t - sum) + dt } else { (dt - sum) + t };
            t = sum;
            state.time = if last { t_final } else { t0 + (t + comp) };
            after_step(state, step, last);
        }
        Ok(n_steps)
    }
}

/// Outcome of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub final_state: NetworkState,
    pub records: Vec<DiagnosticsRecord>,
    pub wall_steps: usize,
}

/// Run to `t_final`, sampling diagnostics at the configured cadence plus the
/// final step. Deterministic for identical inputs.
pub fn run(
    spec: &NetworkSpec,
    config: &SimConfig,
    ics: &[InitialCondition],
) -> Result<RunResult, SimError> {
    run_with(spec, config, ics, |_, _| {})
}

/// [`run`] with a per-sample callback (used for snapshot output).
pub fn run_with(
    spec: &NetworkSpec,
    config: &SimConfig,
    ics: &[InitialCondition],
    mut on_sample: impl FnMut(&NetworkState, &DiagnosticsRecord),
) -> Result<RunResult, SimError> {
    config.validate(spec)?;
    let grids = NetworkGrids::new(spec, &config.n_cells)?;
    let mut sim = Simulator::new(spec, &grids, config.toggles)?;
    let mut state = build_initial_state(spec, &grids, ics)?;

    let mut monitor = Monitor::new(spec, &grids)?;
    let mut records = Vec::new();
    let first = monitor.measure(&state);
    on_sample(&state, &first);
    records.push(first);

    let dt_nominal = compute_dt(spec, &grids, config.cfl);
    let wall_steps = sim.advance(&mut state, config.t_final, dt_nominal, |st, step, last| {
        if last || (step + 1) % config.output_every == 0 {
            let record = monitor.measure(st);
            on_sample(st, &record);
            records.push(record);
        }
    })?;

    Ok(RunResult { final_state: state, records, wall_steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_network;
    use crate::testnets;
    use approx::assert_abs_diff_eq;

    fn star_config(cells: usize, t_final: f64) -> SimConfig {
        SimConfig {
            t_final,
            cfl: 0.9,
            n_cells: vec![cells; 3],
            output_every: 10,
            toggles: Toggles::default(),
            compat_check: true,
        }
    }

    #[test]
    fn compute_dt_examples() {
        let spec = parse_network(&testnets::single_arc_json(1.6, 2.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let grids = NetworkGrids::new(&spec, &[16]).unwrap();
        // h = 0.1, lambda = 2, cfl = 0.9 -> 0.045.
        assert_abs_diff_eq!(compute_dt(&spec, &grids, 0.9), 0.045, epsilon = 1e-15);

        // Two arcs with h/lambda = 0.1 and 0.05, cfl = 1 -> 0.05.
        let spec = parse_network(&testnets::two_arc_chain_custom_json(1.6, 1.0, 0.8, 1.0)).unwrap();
        let grids = NetworkGrids::new(&spec, &[16, 16]).unwrap();
        assert_abs_diff_eq!(compute_dt(&spec, &grids, 1.0), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn remainder_step_sequence() {
        // t_final = 0.12 with dt = 0.05 -> steps 0.05, 0.05, 0.02.
        let spec = parse_network(&testnets::single_arc_json(0.8, 1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let config = SimConfig {
            t_final: 0.12,
            cfl: 1.0,
            n_cells: vec![16],
            output_every: 1,
            toggles: Toggles::default(),
            compat_check: false,
        };
        let ics = vec![InitialCondition::Steady { u: 1.0 }];
        let result = run(&spec, &config, &ics).unwrap();
        assert_eq!(result.wall_steps, 3);
        let times: Vec<f64> = result.records.iter().map(|r| r.time).collect();
        assert_eq!(times, vec![0.0, 0.05, 0.1, 0.12]);
        assert_eq!(result.final_state.time, 0.12);
    }

    #[test]
    fn t_final_smaller_than_dt_takes_one_step() {
        let spec = parse_network(&testnets::single_arc_json(0.8, 1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let config = SimConfig {
            t_final: 0.001,
            cfl: 0.9,
            n_cells: vec![8],
            output_every: 100,
            toggles: Toggles::default(),
            compat_check: false,
        };
        let result = run(&spec, &config, &[InitialCondition::Steady { u: 1.0 }]).unwrap();
        assert_eq!(result.wall_steps, 1);
        assert_eq!(result.final_state.time, 0.001);
    }

    #[test]
    fn steady_state_is_preserved() {
        for text in [testnets::star3_json(), testnets::two_node_chain_json()] {
            let spec = parse_network(&text).unwrap();
            let grids =
                NetworkGrids::new(&spec, &vec![12; spec.n_arcs()]).unwrap();
            let mut sim = Simulator::new(&spec, &grids, Toggles::default()).unwrap();
            let ics = vec![InitialCondition::Steady { u: 2.0 }; spec.n_arcs()];
            let mut state = build_initial_state(&spec, &grids, &ics).unwrap();
            let reference = state.clone();
            let dt = compute_dt(&spec, &grids, 0.9);
            for _ in 0..200 {
                let next = sim.step(&state, dt).unwrap();
                for (s, r) in next.states.iter().zip(&reference.states) {
                    for (a, b) in s.u.iter().zip(&r.u) {
                        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                    }
                    for (a, b) in s.v.iter().zip(&r.v) {
                        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                    }
                    for (a, b) in s.phi.iter().zip(&r.phi) {
                        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                    }
                }
                state = next;
            }
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let spec = parse_network(&testnets::star3_json()).unwrap();
        let config = star_config(8, 0.5);
        let ics = vec![InitialCondition::Constant { u: 0.0, v: 0.0, phi: 0.0 }; 3];
        let result = run(&spec, &config, &ics).unwrap();
        for s in &result.final_state.states {
            assert!(s.u.iter().all(|&x| x == 0.0));
            assert!(s.v.iter().all(|&x| x == 0.0));
            assert!(s.phi.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let spec = parse_network(&testnets::star3_json()).unwrap();
        let config = star_config(16, 0.7);
        let ics = vec![
            InitialCondition::Gaussian { amplitude: 0.3, center: 0.5, width: 0.06 },
            InitialCondition::Steady { u: 0.2 },
            InitialCondition::Steady { u: 0.2 },
        ];
        let a = run(&spec, &config, &ics).unwrap();
        let b = run(&spec, &config, &ics).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ablation_decouples_subsystems() {
        let spec = parse_network(&testnets::star3_json()).unwrap();
        let ics = vec![
            InitialCondition::Gaussian { amplitude: 0.4, center: 0.5, width: 0.08 },
            InitialCondition::Constant { u: 0.1, v: 0.0, phi: 0.3 },
            InitialCondition::Constant { u: 0.2, v: 0.0, phi: 0.1 },
        ];
        let mut base = star_config(12, 0.4);
        base.toggles.chemotaxis_source = false;

        // With the chemotaxis source off, (u, v) must not depend on the
        // phi-side configuration.
        let mut no_production = base.clone();
        no_production.toggles.production = false;
        let with_prod = run(&spec, &base, &ics).unwrap();
        let without_prod = run(&spec, &no_production, &ics).unwrap();
        for (a, b) in with_prod.final_state.states.iter().zip(&without_prod.final_state.states) {
            for (x, y) in a.u.iter().zip(&b.u) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
            for (x, y) in a.v.iter().zip(&b.v) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }

        // With production also off, phi must not depend on the (u, v) data.
        let other_ics = vec![
            InitialCondition::Constant { u: 0.9, v: 0.1, phi: 0.0 },
            InitialCondition::Constant { u: 0.1, v: 0.0, phi: 0.3 },
            InitialCondition::Constant { u: 0.2, v: 0.0, phi: 0.1 },
        ];
        let mut phi_ics = other_ics.clone();
        // Same phi initial data as `ics` on arc 0 (zero), different (u, v).
        phi_ics[0] = InitialCondition::Constant { u: 0.9, v: 0.1, phi: 0.0 };
        let alt = run(&spec, &no_production, &phi_ics).unwrap();
        for (a, b) in without_prod.final_state.states.iter().zip(&alt.final_state.states) {
            for (x, y) in a.phi.iter().zip(&b.phi) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn linear_subsystem_energies_decay() {
        let spec = parse_network(&testnets::star3_json()).unwrap();
        let mut config = star_config(16, 1.5);
        config.toggles =
            Toggles { chemotaxis_source: false, damping: false, production: false };
        config.output_every = 1;
        let ics = vec![
            InitialCondition::CustomTable {
                u: (0..16).map(|j| 0.05 * ((j * 7 % 11) as f64 / 11.0 - 0.5)).collect(),
                v: (0..16).map(|j| 0.04 * ((j * 5 % 13) as f64 / 13.0 - 0.5)).collect(),
                phi: (0..16).map(|j| 0.06 * ((j * 3 % 7) as f64 / 7.0 - 0.5)).collect(),
            },
            InitialCondition::Constant { u: 0.02, v: -0.01, phi: 0.03 },
            InitialCondition::Constant { u: -0.01, v: 0.02, phi: -0.02 },
        ];
        let result = run(&spec, &config, &ics).unwrap();
        for pair in result.records.windows(2) {
            assert!(pair[1].e1 <= pair[0].e1 + 1e-12);
            assert!(pair[1].e2 <= pair[0].e2 + 1e-12);
        }
    }

    #[test]
    fn mirrored_data_stays_mirror_symmetric() {
        let spec = parse_network(&testnets::two_arc_chain_json()).unwrap();
        let n = 16;
        let grids = NetworkGrids::new(&spec, &[n, n]).unwrap();
        let bump: Vec<f64> = (0..n)
            .map(|j| {
                let x = grids.arc(0).center(j);
                (-(x - 0.7) * (x - 0.7) / 0.01).exp()
            })
            .collect();
        let mirrored: Vec<f64> = (0..n).map(|j| bump[n - 1 - j]).collect();
        let ics = vec![
            InitialCondition::CustomTable {
                u: bump.clone(),
                v: vec![0.0; n],
                phi: bump.clone(),
            },
            InitialCondition::CustomTable {
                u: mirrored.clone(),
                v: vec![0.0; n],
                phi: mirrored,
            },
        ];
        let mut state = build_initial_state(&spec, &grids, &ics).unwrap();
        let mut sim = Simulator::new(&spec, &grids, Toggles::default()).unwrap();
        let dt = compute_dt(&spec, &grids, 0.9);
        for _ in 0..100 {
            state = sim.step(&state, dt).unwrap();
            let (a, b) = (&state.states[0], &state.states[1]);
            for j in 0..n {
                assert_abs_diff_eq!(a.u[j], b.u[n - 1 - j], epsilon = 1e-12);
                assert_abs_diff_eq!(a.v[j], -b.v[n - 1 - j], epsilon = 1e-12);
                assert_abs_diff_eq!(a.phi[j], b.phi[n - 1 - j], epsilon = 1e-12);
            }
        }
    }
}
