//! Road networks with polynomial travel-time functions and O-D demand.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// BPR multiplier `a` in `ξ (1 + a (x/κ)^b)`.
pub const BPR_ALPHA: f64 = 0.15;
/// BPR exponent `b`.
pub const BPR_POWER: u32 = 4;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("instance error: {0}")]
    Instance(String),
    #[error("invalid network: {}", format_diagnostics(.0))]
    Validation(Vec<Diagnostic>),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("cannot serialize: {0}")]
    Unrepresentable(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

/// Polynomial travel time `t(x) = Σ_i c_i (x / scale)^i` with nonnegative coefficients.
///
/// The polynomial is stored in a normalized variable so that BPR functions
/// evaluate at capacity without rounding in the power term. `coefficients()`
/// reports the coefficients of the plain polynomial in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeFn {
    coefficients: Vec<f64>,
    #[serde(default = "unit_scale")]
    scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl TravelTimeFn {
    /// Plain polynomial `γ_0 + γ_1 x + … + γ_m x^m`. Negative coefficients are
    /// accepted here and reported by [`Network::validate`].
    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        Self::scaled(coefficients, 1.0)
    }

    /// Polynomial in `x / scale`.
    pub fn scaled(mut coefficients: Vec<f64>, scale: f64) -> Self {
        if coefficients.is_empty() {
            coefficients.push(0.0);
        }
        Self { coefficients, scale }
    }

    /// `ξ (1 + 0.15 (x/κ)^4)`.
    pub fn bpr(free_flow_time: f64, capacity: f64) -> Result<Self, NetworkError> {
        Self::bpr_with(free_flow_time, capacity, BPR_ALPHA, BPR_POWER)
    }

    /// `ξ (1 + b (x/κ)^power)`.
    pub fn bpr_with(
        free_flow_time: f64,
        capacity: f64,
        b: f64,
        power: u32,
    ) -> Result<Self, NetworkError> {
        if !(capacity > 0.0) || !capacity.is_finite() {
            return Err(NetworkError::Instance(format!("nonpositive capacity {capacity}")));
        }
        if !(free_flow_time >= 0.0) || !(b >= 0.0) {
            return Err(NetworkError::Instance(format!(
                "negative BPR parameter (free flow time {free_flow_time}, b {b})"
            )));
        }
        let mut coefficients = vec![0.0; power as usize + 1];
        coefficients[0] = free_flow_time;
        coefficients[power as usize] += free_flow_time * b;
        Ok(Self::scaled(coefficients, capacity))
    }

    /// Polynomial degree `m`, ignoring trailing zero coefficients.
    pub fn degree(&self) -> usize {
        self.coefficients.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    /// Coefficients `γ_0..γ_m` of the polynomial in `x`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut s = 1.0;
        self.coefficients
            .iter()
            .map(|&c| {
                let g = c / s;
                s *= self.scale;
                g
            })
            .collect()
    }

    pub fn normalized_coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = x / self.scale;
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let u = x / self.scale;
        let mut acc = 0.0;
        for (i, &c) in self.coefficients.iter().enumerate().skip(1).rev() {
            acc = acc * u + i as f64 * c;
        }
        acc / self.scale
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let u = x / self.scale;
        let mut acc = 0.0;
        for (i, &c) in self.coefficients.iter().enumerate().skip(2).rev() {
            acc = acc * u + (i * (i - 1)) as f64 * c;
        }
        acc / (self.scale * self.scale)
    }

    /// `∫_0^x t(y) dy` in closed form.
    pub fn integral(&self, x: f64) -> f64 {
        let u = x / self.scale;
        let mut acc = 0.0;
        for (i, &c) in self.coefficients.iter().enumerate().rev() {
            acc = acc * u + c / (i + 1) as f64;
        }
        acc * u * self.scale
    }

    /// Returns `(free_flow_time, capacity, b, power)` when the function has BPR shape.
    pub fn as_bpr(&self) -> Option<(f64, f64, f64, u32)> {
        let m = self.degree();
        let c0 = self.coefficients[0];
        if self.coefficients[1..m].iter().any(|&c| c != 0.0) {
            return None;
        }
        if m == 0 {
            return Some((c0, self.scale, 0.0, 0));
        }
        if c0 <= 0.0 {
            return None;
        }
        Some((c0, self.scale, self.coefficients[m] / c0, m as u32))
    }

    /// Multiply every coefficient by `factor`.
    pub fn scaled_by(&self, factor: f64) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(|c| c * factor).collect(),
            scale: self.scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub travel_time: TravelTimeFn,
    /// Normal length `η_e`.
    #[serde(default)]
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commodity {
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
    #[serde(default = "unit_value_of_time")]
    pub value_of_time: f64,
}

fn unit_value_of_time() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    NegativeCoefficient { edge: usize, index: usize, value: f64 },
    NonFiniteParameter { edge: usize },
    NegativeLength { edge: usize, value: f64 },
    NonPositiveDemand { commodity: usize, demand: f64 },
    NonPositiveValueOfTime { commodity: usize, value: f64 },
    UnknownVertex { commodity: usize, vertex: usize },
    Unreachable { commodity: usize, origin: usize, destination: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Vertices are reported 1-based, as they appear in instance files.
        match *self {
            Diagnostic::NegativeCoefficient { edge, index, value } => {
                write!(f, "edge {edge}: coefficient γ_{index} = {value} is negative")
            }
            Diagnostic::NonFiniteParameter { edge } => {
                write!(f, "edge {edge}: non-finite travel-time parameter")
            }
            Diagnostic::NegativeLength { edge, value } => {
                write!(f, "edge {edge}: negative length {value}")
            }
            Diagnostic::NonPositiveDemand { commodity, demand } => {
                write!(f, "commodity {commodity}: nonpositive demand {demand}")
            }
            Diagnostic::NonPositiveValueOfTime { commodity, value } => {
                write!(f, "commodity {commodity}: nonpositive value of time {value}")
            }
            Diagnostic::UnknownVertex { commodity, vertex } => {
                write!(f, "commodity {commodity}: unknown vertex {}", vertex + 1)
            }
            Diagnostic::Unreachable { commodity, origin, destination } => write!(
                f,
                "commodity {commodity}: destination {} unreachable from origin {}",
                destination + 1,
                origin + 1
            ),
        }
    }
}

/// Directed multigraph with travel-time functions and commodities.
///
/// Vertices are `0..num_vertices`; files use 1-based numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    num_vertices: usize,
    edges: Vec<Edge>,
    commodities: Vec<Commodity>,
    out_edges: Vec<Vec<usize>>,
}

impl Network {
    /// Builds the network. Only edge endpoints are checked here; everything
    /// else is left to [`Network::validate`].
    pub fn new(
        num_vertices: usize,
        edges: Vec<Edge>,
        commodities: Vec<Commodity>,
    ) -> Result<Self, NetworkError> {
        let mut out_edges = vec![Vec::new(); num_vertices];
        for (id, e) in edges.iter().enumerate() {
            if e.tail >= num_vertices || e.head >= num_vertices {
                return Err(NetworkError::Instance(format!(
                    "edge {id} references a vertex outside 1..={num_vertices}"
                )));
            }
            out_edges[e.tail].push(id);
        }
        Ok(Self { num_vertices, edges, commodities, out_edges })
    }

    /// Like [`Network::new`] but fails unless every invariant holds.
    pub fn new_validated(
        num_vertices: usize,
        edges: Vec<Edge>,
        commodities: Vec<Commodity>,
    ) -> Result<Self, NetworkError> {
        let net = Self::new(num_vertices, edges, commodities)?;
        let diags = net.validate();
        if diags.is_empty() {
            Ok(net)
        } else {
            Err(NetworkError::Validation(diags))
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_commodities(&self) -> usize {
        self.commodities.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    pub fn commodities(&self) -> &[Commodity] {
        &self.commodities
    }

    pub fn commodity(&self, k: usize) -> &Commodity {
        &self.commodities[k]
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    pub fn total_demand(&self) -> f64 {
        self.commodities.iter().map(|c| c.demand).sum()
    }

    /// Maximum polynomial degree `m` over all edges.
    pub fn max_degree(&self) -> usize {
        self.edges.iter().map(|e| e.travel_time.degree()).max().unwrap_or(0)
    }

    pub fn self_loops(&self) -> Vec<usize> {
        (0..self.edges.len()).filter(|&i| self.edges[i].tail == self.edges[i].head).collect()
    }

    /// Same network with a different commodity list.
    pub fn with_commodities(&self, commodities: Vec<Commodity>) -> Self {
        Self {
            num_vertices: self.num_vertices,
            edges: self.edges.clone(),
            commodities,
            out_edges: self.out_edges.clone(),
        }
    }

    /// Same network with every travel-time function multiplied by `factor`.
    pub fn with_scaled_travel_times(&self, factor: f64) -> Self {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { travel_time: e.travel_time.scaled_by(factor), ..e.clone() })
            .collect();
        Self { edges, ..self.clone() }
    }

    fn reachable_from(&self, origin: usize) -> Vec<bool> {
        let mut seen = vec![false; self.num_vertices];
        let mut queue = VecDeque::from([origin]);
        seen[origin] = true;
        while let Some(v) = queue.pop_front() {
            for &e in &self.out_edges[v] {
                let h = self.edges[e].head;
                if !seen[h] {
                    seen[h] = true;
                    queue.push_back(h);
                }
            }
        }
        seen
    }

    /// One diagnostic per violated invariant; empty iff the network is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        for (id, e) in self.edges.iter().enumerate() {
            let f = &e.travel_time;
            if !f.scale.is_finite() || f.scale <= 0.0 || f.coefficients.iter().any(|c| !c.is_finite())
            {
                diags.push(Diagnostic::NonFiniteParameter { edge: id });
                continue;
            }
            for (index, value) in f.coefficients().into_iter().enumerate() {
                if value < 0.0 {
                    diags.push(Diagnostic::NegativeCoefficient { edge: id, index, value });
                }
            }
            if e.length < 0.0 {
                diags.push(Diagnostic::NegativeLength { edge: id, value: e.length });
            }
        }
        let mut reach_cache: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
        for (k, c) in self.commodities.iter().enumerate() {
            if !(c.demand > 0.0) || !c.demand.is_finite() {
                diags.push(Diagnostic::NonPositiveDemand { commodity: k, demand: c.demand });
            }
            if !(c.value_of_time > 0.0) || !c.value_of_time.is_finite() {
                diags.push(Diagnostic::NonPositiveValueOfTime {
                    commodity: k,
                    value: c.value_of_time,
                });
            }
            let mut known = true;
            for v in [c.origin, c.destination] {
                if v >= self.num_vertices {
                    diags.push(Diagnostic::UnknownVertex { commodity: k, vertex: v });
                    known = false;
                }
            }
            if known {
                let reach =
                    reach_cache.entry(c.origin).or_insert_with(|| self.reachable_from(c.origin));
                if !reach[c.destination] {
                    diags.push(Diagnostic::Unreachable {
                        commodity: k,
                        origin: c.origin,
                        destination: c.destination,
                    });
                }
            }
        }
        diags
    }
}

/// Two parallel edges `t_1(x) = 1 + εx`, `t_2(x) = x^m`, one commodity.
pub fn build_pigou(m: u32, epsilon: f64, demand: f64) -> Result<Network, NetworkError> {
    if m < 1 {
        return Err(NetworkError::Parameter(format!("degree m must be >= 1, got {m}")));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(NetworkError::Parameter(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if !(demand > 0.0) || !demand.is_finite() {
        return Err(NetworkError::Parameter(format!("demand must be > 0, got {demand}")));
    }
    let mut power = vec![0.0; m as usize + 1];
    power[m as usize] = 1.0;
    parallel_network(
        vec![TravelTimeFn::polynomial(vec![1.0, epsilon]), TravelTimeFn::polynomial(power)],
        demand,
    )
}

/// Vertices 0 → 1 joined by one edge per travel-time function, one commodity.
pub fn parallel_network(fns: Vec<TravelTimeFn>, demand: f64) -> Result<Network, NetworkError> {
    let edges = fns
        .into_iter()
        .map(|travel_time| Edge { tail: 0, head: 1, travel_time, length: 0.0 })
        .collect();
    Network::new_validated(
        2,
        edges,
        vec![Commodity { origin: 0, destination: 1, demand, value_of_time: 1.0 }],
    )
}

/// Serialized form of a [`Network`] for synthetic instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub num_vertices: usize,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub commodities: Vec<Commodity>,
}

impl Network {
    pub fn to_json(&self) -> Result<String, NetworkError> {
        let file = InstanceFile {
            num_vertices: self.num_vertices,
            edges: self.edges.clone(),
            commodities: self.commodities.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        Self::new_validated(file.num_vertices, file.edges, file.commodities)
    }
}
