//! Per-arc cell-centered grids, discrete field containers and initial data.
//!
//! Values are stored as cell averages on uniform per-arc grids with centers
//! `x_j = (j + 1/2) h`. Endpoint traces are never stored; the hyperbolic and
//! parabolic solvers produce them on demand.

use crate::network::NetworkSpec;
use thiserror::Error;

/// Uniform cell-centered grid on one arc.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcGrid {
    pub n_cells: usize,
    /// Cell width, `length / n_cells`.
    pub h: f64,
}

impl ArcGrid {
    /// Center coordinate of cell `j`.
    pub fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h
    }
}

/// Grids for every arc of a network, plus a flat cell layout shared by the
/// parabolic solver and the diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrids {
    grids: Vec<ArcGrid>,
    offsets: Vec<usize>,
    total: usize,
}

#[derive(Debug, Error)]
pub enum FieldsError {
    #[error("arc '{arc}' has {n} cells, minimum is 4")]
    TooFewCells { arc: String, n: usize },
    #[error("custom table for arc '{arc}' field {field} has {got} samples, grid has {want} cells")]
    TableLength {
        arc: String,
        field: &'static str,
        got: usize,
        want: usize,
    },
    #[error("initial condition list covers {got} arcs, network has {want}")]
    IcCount { got: usize, want: usize },
}

impl NetworkGrids {
    pub fn new(spec: &NetworkSpec, n_cells: &[usize]) -> Result<Self, FieldsError> {
        assert_eq!(n_cells.len(), spec.n_arcs(), "one cell count per arc");
        let mut grids = Vec::with_capacity(n_cells.len());
        let mut offsets = Vec::with_capacity(n_cells.len());
        let mut total = 0usize;
        for (arc, &n) in spec.arcs().iter().zip(n_cells) {
            if n < 4 {
                return Err(FieldsError::TooFewCells { arc: arc.id.clone(), n });
            }
            offsets.push(total);
            total += n;
            grids.push(ArcGrid { n_cells: n, h: arc.length / n as f64 });
        }
        Ok(Self { grids, offsets, total })
    }

    pub fn arc(&self, i: usize) -> &ArcGrid {
        &self.grids[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArcGrid> {
        self.grids.iter()
    }

    pub fn n_arcs(&self) -> usize {
        self.grids.len()
    }

    /// Offset of an arc's first cell in the flat layout.
    pub fn offset(&self, arc: usize) -> usize {
        self.offsets[arc]
    }

    pub fn total_cells(&self) -> usize {
        self.total
    }
}

/// Discrete fields of one arc at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcState {
    /// Cell density.
    pub u: Vec<f64>,
    /// Cell flux.
    pub v: Vec<f64>,
    /// Chemoattractant concentration.
    pub phi: Vec<f64>,
}

impl ArcState {
    pub fn zeros(n: usize) -> Self {
        Self { u: vec![0.0; n], v: vec![0.0; n], phi: vec![0.0; n] }
    }

    pub fn n_cells(&self) -> usize {
        self.u.len()
    }
}

/// Fields of the whole network at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub time: f64,
    /// Indexed by arc.
    pub states: Vec<ArcState>,
}

impl NetworkState {
    pub fn zeros(grids: &NetworkGrids) -> Self {
        Self {
            time: 0.0,
            states: grids.iter().map(|g| ArcState::zeros(g.n_cells)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(|s| {
            s.u.iter().chain(&s.v).chain(&s.phi).all(|x| x.is_finite())
        })
    }
}

/// Riemann invariants of the hyperbolic pair: `w± = (u ± v) / 2`.
#[inline]
pub fn to_invariants(u: f64, v: f64) -> (f64, f64) {
    ((u + v) * 0.5, (u - v) * 0.5)
}

/// Inverse of [`to_invariants`].
#[inline]
pub fn from_invariants(w_plus: f64, w_minus: f64) -> (f64, f64) {
    (w_plus + w_minus, w_plus - w_minus)
}

/// Initial data for one arc.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Spatially constant fields.
    Constant { u: f64, v: f64, phi: f64 },
    /// Gaussian density bump, `v = 0`, `phi = 0`. `center` is an absolute
    /// coordinate in `[0, length]`.
    Gaussian { amplitude: f64, center: f64, width: f64 },
    /// Equilibrium of the system: constant `u`, `v = 0`, `phi = (a/b) u`.
    Steady { u: f64 },
    /// Explicit cell values; each table must have exactly `n_cells` samples.
    CustomTable { u: Vec<f64>, v: Vec<f64>, phi: Vec<f64> },
}

/// Sample initial conditions onto the grids. `ics` is indexed by arc.
pub fn build_initial_state(
    spec: &NetworkSpec,
    grids: &NetworkGrids,
    ics: &[InitialCondition],
) -> Result<NetworkState, FieldsError> {
    if ics.len() != spec.n_arcs() {
        return Err(FieldsError::IcCount { got: ics.len(), want: spec.n_arcs() });
    }
    let mut states = Vec::with_capacity(ics.len());
    for (i, ic) in ics.iter().enumerate() {
        let grid = grids.arc(i);
        let arc = &spec.arcs()[i];
        let n = grid.n_cells;
        let state = match ic {
            InitialCondition::Constant { u, v, phi } => ArcState {
                u: vec![*u; n],
                v: vec![*v; n],
                phi: vec![*phi; n],
            },
            InitialCondition::Gaussian { amplitude, center, width } => {
                let u = (0..n)
                    .map(|j| {
                        let dx = grid.center(j) - center;
                        amplitude * (-dx * dx / (2.0 * width * width)).exp()
                    })
                    .collect();
                ArcState { u, v: vec![0.0; n], phi: vec![0.0; n] }
            }
            InitialCondition::Steady { u } => ArcState {
                u: vec![*u; n],
                v: vec![0.0; n],
                phi: vec![arc.a / arc.b * u; n],
            },
            InitialCondition::CustomTable { u, v, phi } => {
                for (field, values) in [("u", u), ("v", v), ("phi", phi)] {
                    if values.len() != n {
                        return Err(FieldsError::TableLength {
                            arc: arc.id.clone(),
                            field,
                            got: values.len(),
                            want: n,
                        });
                    }
                }
                ArcState { u: u.clone(), v: v.clone(), phi: phi.clone() }
            }
        };
        states.push(state);
    }
    Ok(NetworkState { time: 0.0, states })
}
