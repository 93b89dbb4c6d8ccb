//! Capacity-constrained Min-d-Cut: instances, classical costs, the
//! unbalanced capacity penalty, and random k-nearest-neighbour instances.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INSTANCE_VERSION: u32 = 1;

/// Default neighbour count of the random geometric instances.
pub const DEFAULT_NEIGHBORS: usize = 10;

/// Points closer than this are re-drawn so that `round(1/dist)` stays bounded.
pub const MIN_SEPARATION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    num_vertices: usize,
    edges: Vec<Edge>,
    coordinates: Option<Vec<[f64; 2]>>,
}

impl WeightedGraph {
    /// Validates the canonical edge list: `i < j < N`, unique pairs,
    /// weights at least 1.
    pub fn new(num_vertices: usize, edges: Vec<Edge>, coordinates: Option<Vec<[f64; 2]>>) -> Result<Self> {
        if num_vertices == 0 {
            return Err(Error::InvalidInstance("graph has no vertices".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.i >= e.j {
                return Err(Error::InvalidInstance(format!(
                    "edge ({}, {}) is a self-loop or not in i < j order",
                    e.i, e.j
                )));
            }
            if e.j >= num_vertices {
                return Err(Error::InvalidInstance(format!("edge ({}, {}) exceeds vertex count {num_vertices}", e.i, e.j)));
            }
            if e.weight == 0 {
                return Err(Error::InvalidInstance(format!("edge ({}, {}) has zero weight", e.i, e.j)));
            }
            if !seen.insert((e.i, e.j)) {
                return Err(Error::InvalidInstance(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
        }
        if let Some(c) = &coordinates {
            if c.len() != num_vertices {
                return Err(Error::InvalidInstance(format!(
                    "{} coordinates for {num_vertices} vertices",
                    c.len()
                )));
            }
        }
        Ok(Self { num_vertices, edges, coordinates })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn coordinates(&self) -> Option<&[[f64; 2]]> {
        self.coordinates.as_deref()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_vertices];
        for e in &self.edges {
            deg[e.i] += 1;
            deg[e.j] += 1;
        }
        deg
    }
}

/// Scalars of the parabolic capacity penalty
/// `Σ_k −λ₁(C_max − n_k) + λ₂(C_max − n_k)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub c_max: usize,
}

impl PenaltyConfig {
    /// `λ₂ = λ₁ / (2·C_max)`, which puts the parabola's minimum at an empty
    /// partition.
    pub fn from_ratio(lambda1: f64, c_max: usize) -> Self {
        Self { lambda1, lambda2: lambda1 / (2.0 * c_max as f64), c_max }
    }

    pub fn none(c_max: usize) -> Self {
        Self { lambda1: 0.0, lambda2: 0.0, c_max }
    }

    /// Penalty contributed by one partition holding `count` vertices.
    pub fn term(&self, count: usize) -> f64 {
        let slack = self.c_max as f64 - count as f64;
        -self.lambda1 * slack + self.lambda2 * slack * slack
    }
}

/// `λ₁` per partition count: 5, 20, 30 for d = 3, 5, 7 and 30 otherwise.
pub fn default_lambda1(d: usize) -> f64 {
    match d {
        3 => 5.0,
        5 => 20.0,
        _ => 30.0,
    }
}

/// `ceil(2N/d)`.
pub fn default_c_max(num_vertices: usize, d: usize) -> usize {
    (2 * num_vertices).div_ceil(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feasibility {
    pub feasible: bool,
    pub violated_partitions: usize,
    pub max_violation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinDCutInstance {
    graph: WeightedGraph,
    num_partitions: usize,
    penalty: PenaltyConfig,
    seed: Option<u64>,
}

impl MinDCutInstance {
    pub fn new(graph: WeightedGraph, num_partitions: usize, penalty: PenaltyConfig) -> Result<Self> {
        if num_partitions < 2 {
            return Err(Error::InvalidInstance(format!("need d >= 2 partitions, got {num_partitions}")));
        }
        if penalty.c_max < 1 {
            return Err(Error::InvalidInstance("c_max must be at least 1".into()));
        }
        for (name, v) in [("lambda1", penalty.lambda1), ("lambda2", penalty.lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInstance(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(Self { graph, num_partitions, penalty, seed: None })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Same graph with a different penalty configuration.
    pub fn with_penalty(&self, penalty: PenaltyConfig) -> Result<Self> {
        let mut out = Self::new(self.graph.clone(), self.num_partitions, penalty)?;
        out.seed = self.seed;
        Ok(out)
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn num_vertices(&self) -> usize {
        self.graph.num_vertices
    }

    pub fn num_partitions(&self) -> usize {
        self.num_partitions
    }

    pub fn penalty(&self) -> &PenaltyConfig {
        &self.penalty
    }

    pub fn c_max(&self) -> usize {
        self.penalty.c_max
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn check_assignment(&self, assignment: &[usize]) -> Result<()> {
        if assignment.len() != self.num_vertices() {
            return Err(Error::DimensionMismatch { expected: self.num_vertices(), got: assignment.len() });
        }
        if let Some((position, &label)) = assignment.iter().enumerate().find(|(_, &x)| x >= self.num_partitions) {
            return Err(Error::LabelOutOfRange { position, label, d: self.num_partitions });
        }
        Ok(())
    }

    /// `n_k`, the number of vertices carrying each label.
    pub fn partition_counts(&self, assignment: &[usize]) -> Result<Vec<usize>> {
        self.check_assignment(assignment)?;
        let mut counts = vec![0; self.num_partitions];
        for &x in assignment {
            counts[x] += 1;
        }
        Ok(counts)
    }

    /// Total weight of edges whose endpoints carry different labels.
    pub fn cut_cost(&self, assignment: &[usize]) -> Result<f64> {
        self.check_assignment(assignment)?;
        Ok(self
            .graph
            .edges
            .iter()
            .filter(|e| assignment[e.i] != assignment[e.j])
            .fold(0.0, |acc, e| acc + e.weight as f64))
    }

    pub fn penalty_cost(&self, assignment: &[usize]) -> Result<f64> {
        let counts = self.partition_counts(assignment)?;
        Ok(self.penalty_from_counts(&counts))
    }

    pub fn penalty_from_counts(&self, counts: &[usize]) -> f64 {
        counts.iter().map(|&n| self.penalty.term(n)).sum()
    }

    /// Cut cost plus capacity penalty; the objective both the solver and
    /// exported penalized models minimize.
    pub fn total_cost(&self, assignment: &[usize]) -> Result<f64> {
        Ok(self.cut_cost(assignment)? + self.penalty_cost(assignment)?)
    }

    /// Capacity check; also returns the per-partition counts.
    pub fn is_feasible(&self, assignment: &[usize]) -> Result<(bool, Vec<usize>)> {
        let counts = self.partition_counts(assignment)?;
        Ok((self.feasibility_of_counts(&counts).feasible, counts))
    }

    pub fn feasibility_of_counts(&self, counts: &[usize]) -> Feasibility {
        let c = self.penalty.c_max;
        let over: Vec<usize> = counts.iter().filter(|&&n| n > c).map(|&n| n - c).collect();
        Feasibility {
            feasible: over.is_empty(),
            violated_partitions: over.len(),
            max_violation: over.into_iter().max().unwrap_or(0),
        }
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            version: INSTANCE_VERSION,
            seed: self.seed,
            num_vertices: self.num_vertices(),
            d: self.num_partitions,
            c_max: self.penalty.c_max,
            lambda1: self.penalty.lambda1,
            lambda2: self.penalty.lambda2,
            coordinates: self.graph.coordinates.clone().unwrap_or_default(),
            edges: self.graph.edges.iter().map(|e| [e.i as u64, e.j as u64, e.weight as u64]).collect(),
        }
    }

    pub fn from_file(file: InstanceFile) -> Result<Self> {
        if file.version != INSTANCE_VERSION {
            return Err(Error::SchemaVersion { what: "instance", found: file.version, expected: INSTANCE_VERSION });
        }
        let edges = file
            .edges
            .iter()
            .map(|&[i, j, w]| {
                let weight = u32::try_from(w).map_err(|_| Error::InvalidInstance(format!("weight {w} too large")))?;
                Ok(Edge { i: i as usize, j: j as usize, weight })
            })
            .collect::<Result<Vec<_>>>()?;
        let coordinates = (!file.coordinates.is_empty()).then_some(file.coordinates);
        let graph = WeightedGraph::new(file.num_vertices, edges, coordinates)?;
        let penalty = PenaltyConfig { lambda1: file.lambda1, lambda2: file.lambda2, c_max: file.c_max };
        let mut inst = Self::new(graph, file.d, penalty)?;
        inst.seed = file.seed;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Format(format!("instance JSON: {e}")))?;
        Self::from_file(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: InstanceFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_file(file)
    }
}

/// On-disk instance schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub version: u32,
    pub seed: Option<u64>,
    pub num_vertices: usize,
    pub d: usize,
    pub c_max: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(default)]
    pub coordinates: Vec<[f64; 2]>,
    pub edges: Vec<[u64; 3]>,
}

/// `round(1/dist)`, never below 1.
pub fn reciprocal_weight(dist: f64) -> u32 {
    let w = (1.0 / dist).round();
    if w < 1.0 {
        1
    } else if w > u32::MAX as f64 {
        u32::MAX
    } else {
        w as u32
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Points uniform in `[−1, 1]²`; each vertex is joined to its `neighbors`
/// nearest vertices (ties by index), the union is deduplicated, and each
/// edge weighs the rounded reciprocal distance. Capacity is `ceil(2N/d)`,
/// `λ₁` follows [`default_lambda1`] and `λ₂ = λ₁/(2·C_max)`.
pub fn generate_instance(num_vertices: usize, neighbors: usize, d: usize, seed: u64) -> Result<MinDCutInstance> {
    if neighbors == 0 || num_vertices <= neighbors {
        return Err(Error::InvalidInstance(format!(
            "need num_vertices > neighbors > 0, got {num_vertices} and {neighbors}"
        )));
    }
    if d < 2 {
        return Err(Error::InvalidInstance(format!("need d >= 2 partitions, got {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<[f64; 2]> = Vec::with_capacity(num_vertices);
    while points.len() < num_vertices {
        let p = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        if points.iter().all(|&q| distance(p, q) >= MIN_SEPARATION) {
            points.push(p);
        }
    }

    let mut pairs = BTreeSet::new();
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(num_vertices);
    for (i, &p) in points.iter().enumerate() {
        order.clear();
        order.extend(points.iter().enumerate().filter(|&(j, _)| j != i).map(|(j, &q)| (distance(p, q), j)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &order[..neighbors] {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(i, j)| Edge { i, j, weight: reciprocal_weight(distance(points[i], points[j])) })
        .collect();

    let graph = WeightedGraph::new(num_vertices, edges, Some(points))?;
    let c_max = default_c_max(num_vertices, d);
    let penalty = PenaltyConfig::from_ratio(default_lambda1(d), c_max);
    Ok(MinDCutInstance::new(graph, d, penalty)?.with_seed(seed))
}
