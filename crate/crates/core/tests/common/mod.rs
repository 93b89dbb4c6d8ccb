#![allow(dead_code)]

use std::collections::HashMap;

use qudit_qite::problem::{Edge, MinDCutInstance, PenaltyConfig, WeightedGraph};
use qudit_qite::ProductState;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random graph on `n` vertices: each pair present with probability 0.7,
/// integer weights 1..=5, random capacity and penalty scalars.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> MinDCutInstance {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.7) {
                edges.push(Edge { i, j, weight: rng.gen_range(1..=5) });
            }
        }
    }
    let graph = WeightedGraph::new(n, edges, None).unwrap();
    let penalty = PenaltyConfig {
        lambda1: rng.gen_range(0.0..3.0),
        lambda2: rng.gen_range(0.0..1.5),
        c_max: rng.gen_range(1..=n),
    };
    MinDCutInstance::new(graph, d, penalty).unwrap()
}

/// Random real product state with amplitudes of both signs.
pub fn random_state(rng: &mut ChaCha8Rng, n: usize, d: usize) -> ProductState {
    let qudits = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    ProductState::normalized(d, qudits).unwrap()
}

/// Instances of the N = 8, d = 3, C_max = 3 suite. Ten nearest neighbours
/// clamp to the complete graph at this size.
pub fn desk_instance(seed: u64) -> MinDCutInstance {
    qudit_qite::generate_instance(8, 7, 3, seed)
        .unwrap()
        .with_penalty(PenaltyConfig::from_ratio(5.0, 3))
        .unwrap()
}

/// Objective of a CPLEX LP file evaluated at `values`.
///
/// Understands the subset the exporter writes: signed linear terms, one
/// bracketed quadratic block divided by 2, and a constant.
pub fn evaluate_lp_objective(lp: &str, values: &HashMap<String, f64>) -> f64 {
    let start = lp.find("obj:").expect("objective label") + 4;
    let end = lp.find("Subject To").expect("constraint section");
    let tokens: Vec<&str> = lp[start..end].split_whitespace().collect();
    let mut total = 0.0;
    let mut quad = 0.0;
    let mut in_quad = false;
    let mut sign = 1.0;
    let mut i = 0;
    while i < tokens.len() {
        match tokens[i] {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            "[" => {
                in_quad = true;
                sign = 1.0;
            }
            "]" => {
                assert_eq!(tokens[i + 1], "/");
                assert_eq!(tokens[i + 2], "2");
                total += quad / 2.0;
                in_quad = false;
                i += 2;
            }
            tok => {
                let coeff: f64 = tok.parse().expect("coefficient");
                let next = tokens.get(i + 1).copied();
                match next {
                    Some(var) if var.starts_with("x_") => {
                        if in_quad {
                            assert_eq!(tokens[i + 2], "*");
                            let other = tokens[i + 3];
                            quad += sign * coeff * values[var] * values[other];
                            i += 3;
                        } else {
                            total += sign * coeff * values[var];
                            i += 1;
                        }
                    }
                    _ => total += sign * coeff,
                }
                sign = 1.0;
            }
        }
        i += 1;
    }
    total
}
