//! Oriented-arc network description: parsing, validation and the node
//! transmission data.
//!
//! A network is a connected graph of oriented arcs. Interior junctions
//! (nodes) carry two symmetric nonnegative weight matrices, `K` for the
//! hyperbolic transmission conditions and `alpha` for the parabolic
//! (Kedem-Katchalsky) ones. Degree-one endpoints are external points with
//! zero-flux closures and carry no matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// Index of an arc within a [`NetworkSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArcId(pub usize);

/// Index of an interior node within a [`NetworkSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// Index of an external (degree-one, zero-flux) point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExternalId(pub usize);

/// One endpoint of an arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Node(NodeId),
    External(ExternalId),
}

/// Orientation of an arc relative to a node it meets.
///
/// An arc is `Incoming` at the node its head points into (the node sits at
/// the right end of the arc interval) and `Outgoing` at the node it tails
/// from (node at the left end).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Incoming,
    Outgoing,
}

impl Direction {
    /// Sign convention: +1 incoming, -1 outgoing.
    pub fn theta(self) -> f64 {
        match self {
            Direction::Incoming => 1.0,
            Direction::Outgoing => -1.0,
        }
    }
}

/// Physics coefficients and topology of a single oriented arc.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcSpec {
    pub id: String,
    pub tail: Endpoint,
    pub head: Endpoint,
    /// Interval length, > 0.
    pub length: f64,
    /// Transport speed, > 0 (zero speed is rejected at validation).
    pub lambda: f64,
    /// Chemoattractant diffusivity, > 0.
    pub d: f64,
    /// Friction coefficient, > 0.
    pub beta: f64,
    /// Chemoattractant production rate, >= 0.
    pub a: f64,
    /// Chemoattractant degradation rate, > 0.
    pub b: f64,
}

/// Symmetric nonnegative weight matrix attached to one node, indexed by the
/// arcs meeting that node (in `arc_order`). The diagonal is unused and
/// stored as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMatrix {
    pub node: NodeId,
    pub entries: DMatrix<f64>,
}

impl TransmissionMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }
}

/// Immutable, validated network: graph, per-arc coefficients and per-node
/// transmission matrices. Safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    node_ids: Vec<String>,
    external_ids: Vec<String>,
    arcs: Vec<ArcSpec>,
    /// Arcs meeting each node, in the index order of its matrices.
    node_arcs: Vec<Vec<(ArcId, Direction)>>,
    k: Vec<TransmissionMatrix>,
    alpha: Vec<TransmissionMatrix>,
    hub: Vec<Option<ArcId>>,
}

/// Machine-readable validation failure codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    DuplicateId,
    DanglingEndpoint,
    SelfLoop,
    EmptyNetwork,
    Disconnected,
    NodeDegree,
    ExternalDegree,
    NonpositiveLength,
    NonpositiveDiffusivity,
    NonpositiveBeta,
    NonpositiveB,
    NegativeA,
    NegativeLambda,
    ZeroLambda,
    BadRatioAb,
    NonfiniteValue,
    MissingTransmission,
    DuplicateTransmission,
    UnknownNode,
    ArcOrderMismatch,
    BadMatrixShape,
    AsymmetricK,
    AsymmetricAlpha,
    NegativeK,
    NegativeAlpha,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("code serializes");
        write!(f, "{}", s.as_str().unwrap_or("UNKNOWN"))
    }
}

/// One violated invariant, with context.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("syntax error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("invalid network: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("arc {arc} does not meet node {node}")]
    ArcNotAtNode { arc: String, node: String },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("{}: {}", x.code, x.message))
        .collect::<Vec<_>>()
        .join("; ")
}

// -------------------------------------------------------------------------
// JSON document layer
// -------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDocument {
    nodes: Vec<String>,
    external_points: Vec<String>,
    arcs: Vec<ArcDocument>,
    #[serde(default)]
    transmission: Vec<TransmissionDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArcDocument {
    id: String,
    tail: String,
    head: String,
    length: f64,
    lambda: f64,
    #[serde(rename = "D")]
    d: f64,
    beta: f64,
    a: f64,
    b: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransmissionDocument {
    node: String,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    arc_order: Vec<String>,
}

/// Relative tolerance for the per-arc `a/b` constant-ratio constraint.
pub const RATIO_AB_RTOL: f64 = 1e-12;

/// Parse and validate a network-description document.
///
/// On success every [`NetworkSpec`] invariant holds and the per-node
/// global-existence hub has been computed. Validation collects all violated
/// invariants rather than stopping at the first.
pub fn parse_network(text: &str) -> Result<NetworkSpec, NetworkError> {
    let doc: NetworkDocument = serde_json::from_str(text)?;
    build_spec(doc)
}

/// Serialize a validated spec back to the document schema.
///
/// Round-trips: `parse_network(serialize_network(spec)) == spec`.
pub fn serialize_network(spec: &NetworkSpec) -> String {
    let doc = NetworkDocument {
        nodes: spec.node_ids.clone(),
        external_points: spec.external_ids.clone(),
        arcs: spec
            .arcs
            .iter()
            .map(|a| ArcDocument {
                id: a.id.clone(),
                tail: spec.endpoint_name(a.tail).to_string(),
                head: spec.endpoint_name(a.head).to_string(),
                length: a.length,
                lambda: a.lambda,
                d: a.d,
                beta: a.beta,
                a: a.a,
                b: a.b,
            })
            .collect(),
        transmission: (0..spec.node_ids.len())
            .map(|n| {
                let dim = spec.node_arcs[n].len();
                let to_rows = |m: &DMatrix<f64>| {
                    (0..dim)
                        .map(|i| (0..dim).map(|j| m[(i, j)]).collect())
                        .collect()
                };
                TransmissionDocument {
                    node: spec.node_ids[n].clone(),
                    k: to_rows(&spec.k[n].entries),
                    alpha: to_rows(&spec.alpha[n].entries),
                    arc_order: spec.node_arcs[n]
                        .iter()
                        .map(|(a, _)| spec.arcs[a.0].id.clone())
                        .collect(),
                }
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("document serializes")
}

fn build_spec(doc: NetworkDocument) -> Result<NetworkSpec, NetworkError> {
    let mut violations: Vec<Violation> = Vec::new();
    macro_rules! push {
        ($code:expr, $message:expr $(,)?) => {
            violations.push(Violation { code: $code, message: $message })
        };
    }

    // Intern identifiers.
    let mut node_index: HashMap<&str, NodeId> = HashMap::new();
    for (i, id) in doc.nodes.iter().enumerate() {
        if node_index.insert(id, NodeId(i)).is_some() {
            push!(ViolationCode::DuplicateId, format!("duplicate node id '{id}'"));
        }
    }
    let mut ext_index: HashMap<&str, ExternalId> = HashMap::new();
    for (i, id) in doc.external_points.iter().enumerate() {
        if ext_index.insert(id, ExternalId(i)).is_some() {
            push!(
                ViolationCode::DuplicateId,
                format!("duplicate external point id '{id}'"),
            );
        }
        if node_index.contains_key(id.as_str()) {
            push!(
                ViolationCode::DuplicateId,
                format!("id '{id}' declared both as node and external point"),
            );
        }
    }
    let mut arc_index: HashMap<&str, ArcId> = HashMap::new();
    for (i, a) in doc.arcs.iter().enumerate() {
        if arc_index.insert(&a.id, ArcId(i)).is_some() {
            push!(ViolationCode::DuplicateId, format!("duplicate arc id '{}'", a.id));
        }
    }

    if doc.arcs.is_empty() {
        push!(ViolationCode::EmptyNetwork, "network has no arcs".to_string());
    }

    let resolve = |name: &str| -> Option<Endpoint> {
        node_index
            .get(name)
            .map(|&n| Endpoint::Node(n))
            .or_else(|| ext_index.get(name).map(|&e| Endpoint::External(e)))
    };

    // Arcs: endpoints and coefficient ranges.
    let mut arcs = Vec::with_capacity(doc.arcs.len());
    for a in &doc.arcs {
        let tail = resolve(&a.tail);
        let head = resolve(&a.head);
        if tail.is_none() {
            push!(
                ViolationCode::DanglingEndpoint,
                format!("arc '{}' tail '{}' is neither a node nor an external point", a.id, a.tail),
            );
        }
        if head.is_none() {
            push!(
                ViolationCode::DanglingEndpoint,
                format!("arc '{}' head '{}' is neither a node nor an external point", a.id, a.head),
            );
        }
        if let (Some(t), Some(h)) = (tail, head) {
            if t == h {
                push!(
                    ViolationCode::SelfLoop,
                    format!("arc '{}' has both endpoints at '{}'", a.id, a.tail),
                );
            }
        }
        for (name, value) in [
            ("length", a.length),
            ("lambda", a.lambda),
            ("D", a.d),
            ("beta", a.beta),
            ("a", a.a),
            ("b", a.b),
        ] {
            if !value.is_finite() {
                push!(
                    ViolationCode::NonfiniteValue,
                    format!("arc '{}' field {name} is not finite", a.id),
                );
            }
        }
        if !(a.length > 0.0) {
            push!(ViolationCode::NonpositiveLength, format!("arc '{}' length must be > 0", a.id));
        }
        if !(a.d > 0.0) {
            push!(ViolationCode::NonpositiveDiffusivity, format!("arc '{}' D must be > 0", a.id));
        }
        if !(a.beta > 0.0) {
            push!(ViolationCode::NonpositiveBeta, format!("arc '{}' beta must be > 0", a.id));
        }
        if !(a.b > 0.0) {
            push!(ViolationCode::NonpositiveB, format!("arc '{}' b must be > 0", a.id));
        }
        if a.a < 0.0 {
            push!(ViolationCode::NegativeA, format!("arc '{}' a must be >= 0", a.id));
        }
        if a.lambda < 0.0 {
            push!(ViolationCode::NegativeLambda, format!("arc '{}' lambda must be >= 0", a.id));
        } else if a.lambda == 0.0 {
            // Degenerate transport makes the node trace system lose strict
            // definiteness; rejected rather than silently supported.
            push!(ViolationCode::ZeroLambda, format!("arc '{}' lambda must be > 0", a.id));
        }
        arcs.push(ArcSpec {
            id: a.id.clone(),
            tail: tail.unwrap_or(Endpoint::External(ExternalId(usize::MAX))),
            head: head.unwrap_or(Endpoint::External(ExternalId(usize::MAX))),
            length: a.length,
            lambda: a.lambda,
            d: a.d,
            beta: a.beta,
            a: a.a,
            b: a.b,
        });
    }

    // a/b ratio constant across arcs.
    if let Some(first) = arcs.iter().find(|a| a.b > 0.0) {
        let r0 = first.a / first.b;
        for a in &arcs {
            if a.b <= 0.0 {
                continue;
            }
            let r = a.a / a.b;
            if (r - r0).abs() > RATIO_AB_RTOL * r0.abs().max(r.abs()) {
                push!(
                    ViolationCode::BadRatioAb,
                    format!("arc '{}' has a/b = {r}, expected {r0} (constant across arcs)", a.id),
                );
            }
        }
    }

    // Degrees.
    let mut node_degree = vec![0usize; doc.nodes.len()];
    let mut ext_degree = vec![0usize; doc.external_points.len()];
    for a in &arcs {
        for ep in [a.tail, a.head] {
            match ep {
                Endpoint::Node(n) => node_degree[n.0] += 1,
                Endpoint::External(e) if e.0 != usize::MAX => ext_degree[e.0] += 1,
                Endpoint::External(_) => {}
            }
        }
    }
    for (i, &d) in node_degree.iter().enumerate() {
        if d < 2 {
            push!(
                ViolationCode::NodeDegree,
                format!("node '{}' has {d} arcs; a degree-1 endpoint must be an external point", doc.nodes[i]),
            );
        }
    }
    for (i, &d) in ext_degree.iter().enumerate() {
        if d != 1 {
            push!(
                ViolationCode::ExternalDegree,
                format!("external point '{}' touches {d} arcs, expected exactly 1", doc.external_points[i]),
            );
        }
    }

    // Connectivity over the union of nodes and external points.
    if !doc.arcs.is_empty() && violations.iter().all(|v| v.code != ViolationCode::DanglingEndpoint) {
        let n_vertices = doc.nodes.len() + doc.external_points.len();
        let vid = |ep: Endpoint| match ep {
            Endpoint::Node(n) => n.0,
            Endpoint::External(e) => doc.nodes.len() + e.0,
        };
        let mut adj = vec![Vec::new(); n_vertices];
        for a in &arcs {
            adj[vid(a.tail)].push(vid(a.head));
            adj[vid(a.head)].push(vid(a.tail));
        }
        let mut seen = vec![false; n_vertices];
        let mut stack = vec![vid(arcs[0].tail)];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(adj[v].iter().copied());
        }
        if seen.iter().any(|&s| !s) {
            push!(ViolationCode::Disconnected, "graph is not connected".to_string());
        }
    }

    // Transmission matrices.
    let mut node_arcs: Vec<Vec<(ArcId, Direction)>> = vec![Vec::new(); doc.nodes.len()];
    let mut k_mats: Vec<Option<TransmissionMatrix>> = (0..doc.nodes.len()).map(|_| None).collect();
    let mut alpha_mats: Vec<Option<TransmissionMatrix>> =
        (0..doc.nodes.len()).map(|_| None).collect();
    for t in &doc.transmission {
        let Some(&node) = node_index.get(t.node.as_str()) else {
            push!(ViolationCode::UnknownNode, format!("transmission entry for unknown node '{}'", t.node));
            continue;
        };
        if k_mats[node.0].is_some() {
            push!(
                ViolationCode::DuplicateTransmission,
                format!("node '{}' has more than one transmission entry", t.node),
            );
            continue;
        }

        // The declared arc_order must be exactly the arcs meeting the node.
        let mut order = Vec::with_capacity(t.arc_order.len());
        let mut order_ok = true;
        for name in &t.arc_order {
            match arc_index.get(name.as_str()) {
                Some(&aid) => {
                    let dir = direction_at(&arcs[aid.0], node);
                    match dir {
                        Some(d) => order.push((aid, d)),
                        None => {
                            push!(
                                ViolationCode::ArcOrderMismatch,
                                format!("arc '{name}' in arc_order does not meet node '{}'", t.node),
                            );
                            order_ok = false;
                        }
                    }
                }
                None => {
                    push!(
                        ViolationCode::ArcOrderMismatch,
                        format!("arc_order of node '{}' names unknown arc '{name}'", t.node),
                    );
                    order_ok = false;
                }
            }
        }
        let meeting: usize = arcs
            .iter()
            .filter(|a| a.tail == Endpoint::Node(node) || a.head == Endpoint::Node(node))
            .count();
        if order.len() != meeting {
            push!(
                ViolationCode::ArcOrderMismatch,
                format!(
                    "node '{}' arc_order lists {} arcs but {} arcs meet the node",
                    t.node,
                    order.len(),
                    meeting
                ),
            );
            order_ok = false;
        }
        {
            let mut sorted: Vec<ArcId> = order.iter().map(|(a, _)| *a).collect();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != order.len() {
                push!(
                    ViolationCode::ArcOrderMismatch,
                    format!("node '{}' arc_order repeats an arc", t.node),
                );
                order_ok = false;
            }
        }
        if !order_ok {
            continue;
        }
        let dim = order.len();

        let mut check_matrix = |rows: &Vec<Vec<f64>>,
                                label: &str,
                                asym: ViolationCode,
                                neg: ViolationCode|
         -> Option<DMatrix<f64>> {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                push!(
                    ViolationCode::BadMatrixShape,
                    format!("node '{}' {label} matrix is not {dim}x{dim}", t.node),
                );
                return None;
            }
            let mut m = DMatrix::zeros(dim, dim);
            let mut ok = true;
            for i in 0..dim {
                for j in 0..dim {
                    let x = rows[i][j];
                    if !x.is_finite() {
                        push!(
                            ViolationCode::NonfiniteValue,
                            format!("node '{}' {label}[{i}][{j}] is not finite", t.node),
                        );
                        ok = false;
                        continue;
                    }
                    if i == j {
                        continue; // diagonal unused, stored as zero
                    }
                    if x < 0.0 {
                        push!(neg, format!("node '{}' {label}[{i}][{j}] = {x} < 0", t.node));
                        ok = false;
                    }
                    if j > i && rows[j][i] != x {
                        push!(
                            asym,
                            format!(
                                "node '{}' {label}[{i}][{j}] = {x} != {label}[{j}][{i}] = {}",
                                t.node, rows[j][i]
                            ),
                        );
                        ok = false;
                    }
                    m[(i, j)] = x;
                }
            }
            ok.then_some(m)
        };

        let k = check_matrix(&t.k, "K", ViolationCode::AsymmetricK, ViolationCode::NegativeK);
        let alpha = check_matrix(
            &t.alpha,
            "alpha",
            ViolationCode::AsymmetricAlpha,
            ViolationCode::NegativeAlpha,
        );
        node_arcs[node.0] = order;
        if let Some(k) = k {
            k_mats[node.0] = Some(TransmissionMatrix { node, entries: k });
        }
        if let Some(alpha) = alpha {
            alpha_mats[node.0] = Some(TransmissionMatrix { node, entries: alpha });
        }
    }
    for (i, m) in k_mats.iter().enumerate() {
        if m.is_none() && node_degree.get(i).copied().unwrap_or(0) >= 2 {
            push!(
                ViolationCode::MissingTransmission,
                format!("node '{}' has no valid transmission entry", doc.nodes[i]),
            );
        }
    }

    if !violations.is_empty() {
        return Err(NetworkError::Invalid(violations));
    }

    let mut spec = NetworkSpec {
        node_ids: doc.nodes,
        external_ids: doc.external_points,
        arcs,
        node_arcs,
        k: k_mats.into_iter().map(Option::unwrap).collect(),
        alpha: alpha_mats.into_iter().map(Option::unwrap).collect(),
        hub: Vec::new(),
    };
    spec.hub = (0..spec.node_ids.len())
        .map(|n| global_condition_hub(&spec.k[n].entries).map(|i| spec.node_arcs[n][i].0))
        .collect();
    Ok(spec)
}

fn direction_at(arc: &ArcSpec, node: NodeId) -> Option<Direction> {
    if arc.head == Endpoint::Node(node) {
        Some(Direction::Incoming)
    } else if arc.tail == Endpoint::Node(node) {
        Some(Direction::Outgoing)
    } else {
        None
    }
}

/// Column criterion of the global-existence coefficient condition: some
/// column `k` has every off-diagonal entry strictly positive. Returns the
/// first such column index.
pub fn global_condition_hub(k: &DMatrix<f64>) -> Option<usize> {
    let dim = k.nrows();
    (0..dim).find(|&col| (0..dim).all(|row| row == col || k[(row, col)] > 0.0))
}

/// Evaluate the global-existence coefficient condition at every node.
pub fn check_global_condition(spec: &NetworkSpec) -> Vec<bool> {
    spec.hub.iter().map(Option::is_some).collect()
}

/// Orientation of `arc` at `node`: `Incoming` if the arc heads into it,
/// `Outgoing` if it tails from it.
pub fn arc_sign_at_node(
    spec: &NetworkSpec,
    arc: ArcId,
    node: NodeId,
) -> Result<Direction, NetworkError> {
    direction_at(&spec.arcs[arc.0], node).ok_or_else(|| NetworkError::ArcNotAtNode {
        arc: spec.arcs[arc.0].id.clone(),
        node: spec.node_ids[node.0].clone(),
    })
}

impl NetworkSpec {
    pub fn n_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn n_external_points(&self) -> usize {
        self.external_ids.len()
    }

    pub fn arcs(&self) -> &[ArcSpec] {
        &self.arcs
    }

    pub fn arc(&self, id: ArcId) -> &ArcSpec {
        &self.arcs[id.0]
    }

    pub fn arc_ids(&self) -> impl Iterator<Item = ArcId> {
        (0..self.arcs.len()).map(ArcId)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_ids.len()).map(NodeId)
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        &self.node_ids[node.0]
    }

    pub fn external_name(&self, ext: ExternalId) -> &str {
        &self.external_ids[ext.0]
    }

    pub fn endpoint_name(&self, ep: Endpoint) -> &str {
        match ep {
            Endpoint::Node(n) => self.node_name(n),
            Endpoint::External(e) => self.external_name(e),
        }
    }

    pub fn arc_by_name(&self, name: &str) -> Option<ArcId> {
        self.arcs.iter().position(|a| a.id == name).map(ArcId)
    }

    /// Arcs meeting `node`, in the index order of its transmission matrices.
    pub fn arcs_at(&self, node: NodeId) -> &[(ArcId, Direction)] {
        &self.node_arcs[node.0]
    }

    pub fn k(&self, node: NodeId) -> &TransmissionMatrix {
        &self.k[node.0]
    }

    pub fn alpha(&self, node: NodeId) -> &TransmissionMatrix {
        &self.alpha[node.0]
    }

    /// Hub arc of the global-existence condition at `node`, if satisfied.
    pub fn global_condition_hub_at(&self, node: NodeId) -> Option<ArcId> {
        self.hub[node.0]
    }
}
