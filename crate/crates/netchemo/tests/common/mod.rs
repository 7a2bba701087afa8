//! Fixtures shared by the integration suites.
#![allow(dead_code)] // each test target uses a different subset

use netchemo::network::{parse_network, NetworkSpec};
use rand::Rng;
use serde_json::json;

/// Reference 3-arc star: two arcs into one node, one out, unit
/// coefficients, all-ones off-diagonal transmission weights.
pub fn star3_json() -> String {
    star3_json_with_coupling(1.0, 1.0)
}

pub fn star3_json_with_coupling(k: f64, alpha: f64) -> String {
    let arc = |id: &str, tail: &str, head: &str| {
        json!({"id": id, "tail": tail, "head": head,
               "length": 1.0, "lambda": 1.0, "D": 1.0, "beta": 1.0, "a": 1.0, "b": 1.0})
    };
    let full = |w: f64| {
        json!([[0.0, w, w], [w, 0.0, w], [w, w, 0.0]])
    };
    json!({
        "nodes": ["N"],
        "external_points": ["e1", "e2", "e3"],
        "arcs": [arc("a1", "e1", "N"), arc("a2", "e2", "N"), arc("a3", "N", "e3")],
        "transmission": [
            {"node": "N", "K": full(k), "alpha": full(alpha), "arc_order": ["a1", "a2", "a3"]}
        ],
    })
    .to_string()
}

pub fn star3_spec() -> NetworkSpec {
    parse_network(&star3_json()).expect("star fixture is valid")
}

pub fn single_arc_json(length: f64, lambda: f64, d: f64, beta: f64, a: f64, b: f64) -> String {
    json!({
        "nodes": [],
        "external_points": ["e1", "e2"],
        "arcs": [{"id": "a1", "tail": "e1", "head": "e2",
                  "length": length, "lambda": lambda, "D": d, "beta": beta, "a": a, "b": b}],
        "transmission": [],
    })
    .to_string()
}

/// Random valid network: a chain of 1..=3 nodes with random orientations,
/// external arcs keeping every node at degree >= 2, random coefficients
/// with one global a/b ratio, random symmetric nonnegative weights.
pub fn random_network_json(rng: &mut impl Rng) -> String {
    let n_nodes = rng.gen_range(1..=3usize);
    let ratio = [0.0, 0.5, 1.0][rng.gen_range(0..3)];

    let mut arcs = Vec::new();
    let mut externals = Vec::new();
    let mut incident: Vec<Vec<String>> = vec![Vec::new(); n_nodes];

    let coeff = |rng: &mut dyn rand::RngCore| {
        let b: f64 = rng.gen_range(0.3..1.5);
        (
            rng.gen_range(0.5..2.0f64),  // length
            rng.gen_range(0.3..2.0f64),  // lambda
            rng.gen_range(0.1..1.5f64),  // D
            rng.gen_range(0.2..2.0f64),  // beta
            ratio * b,                   // a
            b,
        )
    };

    let push_arc = |arcs: &mut Vec<serde_json::Value>,
                        incident: &mut Vec<Vec<String>>,
                        rng: &mut dyn rand::RngCore,
                        tail: String,
                        head: String,
                        tail_node: Option<usize>,
                        head_node: Option<usize>| {
        let id = format!("a{}", arcs.len());
        let (length, lambda, d, beta, a, b) = coeff(rng);
        arcs.push(json!({"id": id, "tail": tail, "head": head, "length": length,
                         "lambda": lambda, "D": d, "beta": beta, "a": a, "b": b}));
        if let Some(n) = tail_node {
            incident[n].push(id.clone());
        }
        if let Some(n) = head_node {
            incident[n].push(id);
        }
    };

    // Chain of internal arcs with random orientation.
    for n in 1..n_nodes {
        if rng.gen_bool(0.5) {
            push_arc(&mut arcs, &mut incident, rng, format!("N{}", n - 1), format!("N{n}"), Some(n - 1), Some(n));
        } else {
            push_arc(&mut arcs, &mut incident, rng, format!("N{n}"), format!("N{}", n - 1), Some(n), Some(n - 1));
        }
    }
    // External arcs until every node has degree >= 2, plus random extras.
    for n in 0..n_nodes {
        while incident[n].len() < 2 || rng.gen_bool(0.3) {
            let e = format!("e{}", externals.len());
            externals.push(e.clone());
            if rng.gen_bool(0.5) {
                push_arc(&mut arcs, &mut incident, rng, e, format!("N{n}"), None, Some(n));
            } else {
                push_arc(&mut arcs, &mut incident, rng, format!("N{n}"), e, Some(n), None);
            }
        }
    }

    let transmission: Vec<serde_json::Value> = (0..n_nodes)
        .map(|n| {
            let deg = incident[n].len();
            let mut k = vec![vec![0.0f64; deg]; deg];
            let mut alpha = vec![vec![0.0f64; deg]; deg];
            for i in 0..deg {
                for j in i + 1..deg {
                    let kv = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.1..2.0) };
                    let av = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.1..2.0) };
                    k[i][j] = kv;
                    k[j][i] = kv;
                    alpha[i][j] = av;
                    alpha[j][i] = av;
                }
            }
            json!({"node": format!("N{n}"), "K": k, "alpha": alpha, "arc_order": incident[n]})
        })
        .collect();

    json!({
        "nodes": (0..n_nodes).map(|n| format!("N{n}")).collect::<Vec<_>>(),
        "external_points": externals,
        "arcs": arcs,
        "transmission": transmission,
    })
    .to_string()
}
