//! Small network documents shared by the unit tests.

/// One arc sealed between two external points.
pub fn single_arc_json(length: f64, lambda: f64, d: f64, beta: f64, a: f64, b: f64) -> String {
    format!(
        r#"{{
  "nodes": [],
  "external_points": ["e1", "e2"],
  "arcs": [
    {{"id": "a1", "tail": "e1", "head": "e2",
      "length": {length}, "lambda": {lambda}, "D": {d}, "beta": {beta}, "a": {a}, "b": {b}}}
  ],
  "transmission": []
}}"#
    )
}

/// Three unit arcs meeting at one node (two incoming, one outgoing),
/// all-ones off-diagonal transmission weights.
pub fn star3_json() -> String {
    r#"{
  "nodes": ["N"],
  "external_points": ["e1", "e2", "e3"],
  "arcs": [
    {"id": "a1", "tail": "e1", "head": "N",
     "length": 1.0, "lambda": 1.0, "D": 1.0, "beta": 1.0, "a": 1.0, "b": 1.0},
    {"id": "a2", "tail": "e2", "head": "N",
     "length": 1.0, "lambda": 1.0, "D": 1.0, "beta": 1.0, "a": 1.0, "b": 1.0},
    {"id": "a3", "tail": "N", "head": "e3",
     "length": 1.0, "lambda": 1.0, "D": 1.0, "beta": 1.0, "a": 1.0, "b": 1.0}
  ],
  "transmission": [
    {"node": "N",
     "K":     [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
     "alpha": [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]],
     "arc_order": ["a1", "a2", "a3"]}
  ]
}"#
    .to_string()
}

fn two_arc_chain_with(k: &[[f64; 2]; 2], alpha: &[[f64; 2]; 2], a: [f64; 2], b: [f64; 2]) -> String {
    format!(
        r#"{{
  "nodes": ["N"],
  "external_points": ["e1", "e2"],
  "arcs": [
    {{"id": "a1", "tail": "e1", "head": "N",
      "length": 1.0, "lambda": 1.0, "D": 1.0, "beta": 1.0, "a": {}, "b": {}}},
    {{"id": "a2", "tail": "N", "head": "e2",
      "length": 1.0, "lambda": 1.0, "D": 1.0, "beta": 1.0, "a": {}, "b": {}}}
  ],
  "transmission": [
    {{"node": "N",
      "K": [[{}, {}], [{}, {}]],
      "alpha": [[{}, {}], [{}, {}]],
      "arc_order": ["a1", "a2"]}}
  ]
}}"#,
        a[0], b[0], a[1], b[1],
        k[0][0], k[0][1], k[1][0], k[1][1],
        alpha[0][0], alpha[0][1], alpha[1][0], alpha[1][1],
    )
}

const UNIT_COUPLING: [[f64; 2]; 2] = [[0.0, 1.0], [1.0, 0.0]];

/// Two unit arcs through one node, `K = alpha = 1` off-diagonal.
pub fn two_arc_chain_json() -> String {
    two_arc_chain_with(&UNIT_COUPLING, &UNIT_COUPLING, [1.0, 1.0], [1.0, 1.0])
}

pub fn two_arc_chain_json_with_k(k: &[[f64; 2]; 2]) -> String {
    two_arc_chain_with(k, &UNIT_COUPLING, [1.0, 1.0], [1.0, 1.0])
}

pub fn two_arc_chain_json_with_alpha(alpha: &[[f64; 2]; 2]) -> String {
    two_arc_chain_with(&UNIT_COUPLING, alpha, [1.0, 1.0], [1.0, 1.0])
}

pub fn two_arc_chain_json_with_ab(a: [f64; 2], b: [f64; 2]) -> String {
    two_arc_chain_with(&UNIT_COUPLING, &UNIT_COUPLING, a, b)
}

/// Two arcs through one node with per-arc lengths and speeds.
pub fn two_arc_chain_custom_json(len1: f64, lambda1: f64, len2: f64, lambda2: f64) -> String {
    format!(
        r#"{{
  "nodes": ["N"],
  "external_points": ["e1", "e2"],
  "arcs": [
    {{"id": "a1", "tail": "e1", "head": "N",
      "length": {len1}, "lambda": {lambda1}, "D": 1.0, "beta": 1.0, "a": 1.0, "b": 1.0}},
    {{"id": "a2", "tail": "N", "head": "e2",
      "length": {len2}, "lambda": {lambda2}, "D": 1.0, "beta": 1.0, "a": 1.0, "b": 1.0}}
  ],
  "transmission": [
    {{"node": "N",
      "K": [[0.0, 1.0], [1.0, 0.0]],
      "alpha": [[0.0, 1.0], [1.0, 0.0]],
      "arc_order": ["a1", "a2"]}}
  ]
}}"#
    )
}

/// Three arcs through two nodes: e1 -> N1 -> N2 -> e2.
pub fn two_node_chain_json() -> String {
    r#"{
  "nodes": ["N1", "N2"],
  "external_points": ["e1", "e2"],
  "arcs": [
    {"id": "left", "tail": "e1", "head": "N1",
     "length": 1.0, "lambda": 1.0, "D": 1.0, "beta": 1.0, "a": 1.0, "b": 1.0},
    {"id": "mid", "tail": "N1", "head": "N2",
     "length": 1.0, "lambda": 1.0, "D": 1.0, "beta": 1.0, "a": 1.0, "b": 1.0},
    {"id": "right", "tail": "N2", "head": "e2",
     "length": 1.0, "lambda": 1.0, "D": 1.0, "beta": 1.0, "a": 1.0, "b": 1.0}
  ],
  "transmission": [
    {"node": "N1",
     "K": [[0.0, 1.0], [1.0, 0.0]],
     "alpha": [[0.0, 1.0], [1.0, 0.0]],
     "arc_order": ["left", "mid"]},
    {"node": "N2",
     "K": [[0.0, 1.0], [1.0, 0.0]],
     "alpha": [[0.0, 1.0], [1.0, 0.0]],
     "arc_order": ["mid", "right"]}
  ]
}"#
    .to_string()
}

/// Two sealed arcs with no path between them.
pub fn disconnected_json() -> String {
    r#"{
  "nodes": [],
  "external_points": ["e1", "e2", "e3", "e4"],
  "arcs": [
    {"id": "a1", "tail": "e1", "head": "e2",
     "length": 1.0, "lambda": 1.0, "D": 1.0, "beta": 1.0, "a": 1.0, "b": 1.0},
    {"id": "a2", "tail": "e3", "head": "e4",
     "length": 1.0, "lambda": 1.0, "D": 1.0, "beta": 1.0, "a": 1.0, "b": 1.0}
  ],
  "transmission": []
}"#
    .to_string()
}
