//! Parsing, representation, and structural validation of a finitely
//! generated rational graph-directed Markov system.
//!
//! A system is a directed multigraph whose edges each carry a finite
//! nonempty set of rational maps. Compositions follow directed paths: a
//! generator is a (map, edge) pair, and a word is an admissible sequence
//! of generators.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Polynomial, RationalMap};

/// Flat generator index into [`GdmsSystem::generators`].
pub type GenId = u32;

/// Vertex handle; `0..vertex_count`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

impl std::fmt::Display for VertexId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Directed edge with its document id.
#[derive(Clone, Debug)]
pub struct Edge {
    pub name: String,
    pub from: VertexId,
    pub to: VertexId,
}

/// A (map, edge) pair: `edge` indexes [`GdmsSystem::edges`], `slot` indexes
/// the map list carried by that edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Generator {
    pub edge: usize,
    pub slot: usize,
}

// --- document schema -------------------------------------------------------

/// On-disk JSON form. Coefficients are `[re, im]` pairs ascending by power;
/// `den` may be omitted and defaults to the constant 1 (polynomial map).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDocument {
    pub id: String,
    pub from: String,
    pub to: String,
    pub maps: Vec<MapDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDocument {
    pub num: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub den: Option<Vec<[f64; 2]>>,
}

fn poly_from_pairs(pairs: &[[f64; 2]]) -> Polynomial {
    Polynomial::new(pairs.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
}

// --- the system ------------------------------------------------------------

/// Immutable, validated system. All operations on it are pure functions.
#[derive(Clone, Debug)]
pub struct GdmsSystem {
    vertex_names: Vec<String>,
    edges: Vec<Edge>,
    maps: Vec<Vec<RationalMap>>,
    generators: Vec<Generator>,
    incoming: Vec<Vec<GenId>>,
    outgoing: Vec<Vec<GenId>>,
    document: SystemDocument,
}

impl GdmsSystem {
    /// Parse and validate a JSON document.
    pub fn parse_str(text: &str) -> Result<Self> {
        let doc: SystemDocument = serde_json::from_str(text)
            .map_err(|e| Error::Schema(format!("{e}")))?;
        Self::from_document(doc)
    }

    pub fn from_document(doc: SystemDocument) -> Result<Self> {
        if doc.vertices.is_empty() {
            return Err(Error::Schema("system needs at least one vertex".into()));
        }
        let mut index_of: HashMap<&str, usize> = HashMap::new();
        for (k, name) in doc.vertices.iter().enumerate() {
            if index_of.insert(name, k).is_some() {
                return Err(Error::DuplicateVertex(name.clone()));
            }
        }

        let mut edges = Vec::with_capacity(doc.edges.len());
        let mut maps: Vec<Vec<RationalMap>> = Vec::with_capacity(doc.edges.len());
        let mut edge_ids: HashMap<&str, ()> = HashMap::new();
        for e in &doc.edges {
            if edge_ids.insert(&e.id, ()).is_some() {
                return Err(Error::DuplicateEdge(e.id.clone()));
            }
            let from = *index_of.get(e.from.as_str()).ok_or_else(|| Error::UnknownVertex {
                edge: e.id.clone(),
                name: e.from.clone(),
            })?;
            let to = *index_of.get(e.to.as_str()).ok_or_else(|| Error::UnknownVertex {
                edge: e.id.clone(),
                name: e.to.clone(),
            })?;
            if e.maps.is_empty() {
                return Err(Error::EmptyEdgeMaps(e.id.clone()));
            }
            for (i, a) in e.maps.iter().enumerate() {
                for b in &e.maps[i + 1..] {
                    if a == b {
                        return Err(Error::DuplicateMap(e.id.clone()));
                    }
                }
            }
            let mut edge_maps = Vec::with_capacity(e.maps.len());
            for m in &e.maps {
                let num = poly_from_pairs(&m.num);
                let den = match &m.den {
                    Some(pairs) => poly_from_pairs(pairs),
                    None => Polynomial::one(),
                };
                if den.is_zero() {
                    return Err(Error::ZeroDenominator(e.id.clone()));
                }
                let map = RationalMap::new(num, den).map_err(|err| match err {
                    Error::DegreeZero(_) => Error::DegreeZero(e.id.clone()),
                    Error::ZeroDenominator(_) => Error::ZeroDenominator(e.id.clone()),
                    Error::NotCoprime(_) => Error::NotCoprime(e.id.clone()),
                    other => other,
                })?;
                edge_maps.push(map);
            }
            edges.push(Edge { name: e.id.clone(), from: VertexId(from), to: VertexId(to) });
            maps.push(edge_maps);
        }

        let mut generators = Vec::new();
        for (edge, edge_maps) in maps.iter().enumerate() {
            for slot in 0..edge_maps.len() {
                generators.push(Generator { edge, slot });
            }
        }

        let nv = doc.vertices.len();
        let mut incoming = vec![Vec::new(); nv];
        let mut outgoing = vec![Vec::new(); nv];
        for (g, gen) in generators.iter().enumerate() {
            let e = &edges[gen.edge];
            outgoing[e.from.0].push(g as GenId);
            incoming[e.to.0].push(g as GenId);
        }

        Ok(Self {
            vertex_names: doc.vertices.clone(),
            edges,
            maps,
            generators,
            incoming,
            outgoing,
            document: doc,
        })
    }

    /// The document this system was parsed from; serialize/parse round-trips.
    pub fn document(&self) -> &SystemDocument {
        &self.document
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.document).expect("document serializes")
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_names.len()
    }

    pub fn vertex_name(&self, v: VertexId) -> &str {
        &self.vertex_names[v.0]
    }

    pub fn vertex_by_name(&self, name: &str) -> Option<VertexId> {
        self.vertex_names.iter().position(|n| n == name).map(VertexId)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    pub fn generator(&self, g: GenId) -> Generator {
        self.generators[g as usize]
    }

    pub fn map_of(&self, g: GenId) -> &RationalMap {
        let gen = self.generators[g as usize];
        &self.maps[gen.edge][gen.slot]
    }

    /// Initial vertex of the generator's edge.
    pub fn source_of(&self, g: GenId) -> VertexId {
        self.edges[self.generators[g as usize].edge].from
    }

    /// Terminal vertex of the generator's edge.
    pub fn target_of(&self, g: GenId) -> VertexId {
        self.edges[self.generators[g as usize].edge].to
    }

    pub fn degree_of(&self, g: GenId) -> usize {
        self.map_of(g).degree()
    }

    /// Generators whose edge ends at `v`.
    pub fn incoming(&self, v: VertexId) -> &[GenId] {
        &self.incoming[v.0]
    }

    /// Generators whose edge starts at `v`.
    pub fn outgoing(&self, v: VertexId) -> &[GenId] {
        &self.outgoing[v.0]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.generator_count() as GenId).map(|g| self.degree_of(g)).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    /// Edge-count adjacency matrix: entry (i, j) is the number of edges
    /// from i to j, regardless of how many maps each edge carries.
    pub fn adjacency_counts(&self) -> Vec<Vec<u64>> {
        let n = self.vertex_count();
        let mut a = vec![vec![0u64; n]; n];
        for e in &self.edges {
            a[e.from.0][e.to.0] += 1;
        }
        a
    }

    /// True iff every ordered vertex pair is joined by a directed path of
    /// length at least one (so a single vertex needs a loop edge).
    pub fn is_irreducible(&self) -> bool {
        let n = self.vertex_count();
        let mut succ = vec![Vec::new(); n];
        for e in &self.edges {
            succ[e.from.0].push(e.to.0);
        }
        for start in 0..n {
            let mut seen = vec![false; n];
            let mut stack: Vec<usize> = succ[start].clone();
            while let Some(v) = stack.pop() {
                if !seen[v] {
                    seen[v] = true;
                    stack.extend(succ[v].iter().copied());
                }
            }
            if seen.iter().any(|s| !s) {
                return false;
            }
        }
        true
    }

    /// Period of the underlying graph (gcd of all directed cycle lengths);
    /// 1 for aperiodic. Only meaningful for irreducible systems.
    pub fn graph_period(&self) -> usize {
        let n = self.vertex_count();
        let mut succ = vec![Vec::new(); n];
        for e in &self.edges {
            succ[e.from.0].push(e.to.0);
        }
        let mut level = vec![usize::MAX; n];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        let mut g: u64 = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &succ[u] {
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                } else {
                    let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs();
                    g = gcd(g, diff);
                }
            }
        }
        if g == 0 {
            1
        } else {
            g as usize
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

// --- diagnostics ------------------------------------------------------------

/// One loop word of Möbius generators with its normalized squared trace.
#[derive(Clone, Debug)]
pub struct MobiusLoopReport {
    pub vertex: VertexId,
    pub word: Vec<GenId>,
    pub trace_sq: Complex64,
    pub loxodromic: bool,
}

/// Structural diagnostics for a parsed system.
#[derive(Clone, Debug)]
pub struct SystemDiagnostics {
    pub irreducible: bool,
    pub has_degree_ge2: bool,
    pub mobius_loop_report: Vec<MobiusLoopReport>,
    pub warnings: Vec<String>,
}

/// For every loop word of length at most `max_loop_len` all of whose
/// generators are Möbius, compose the 2x2 matrices, normalize the
/// determinant to 1, and classify: loxodromic iff the squared trace is not
/// a real number in [0, 4] (within tolerance). Non-loxodromic Möbius loops
/// violate a necessary condition for the system to be expanding.
pub fn check_loxodromic_loops(system: &GdmsSystem, max_loop_len: usize) -> Vec<MobiusLoopReport> {
    assert!(max_loop_len >= 1);
    let mut out = Vec::new();
    let mut word: Vec<GenId> = Vec::new();
    for v in 0..system.vertex_count() {
        let root = VertexId(v);
        descend_mobius_loops(system, root, root, max_loop_len, &mut word, &mut out);
    }
    out
}

fn descend_mobius_loops(
    system: &GdmsSystem,
    root: VertexId,
    current: VertexId,
    remaining: usize,
    word: &mut Vec<GenId>,
    out: &mut Vec<MobiusLoopReport>,
) {
    if remaining == 0 {
        return;
    }
    for &g in system.outgoing(current) {
        if !system.map_of(g).is_mobius() {
            continue;
        }
        word.push(g);
        let next = system.target_of(g);
        if next == root {
            out.push(classify_mobius_loop(system, root, word));
        }
        descend_mobius_loops(system, root, next, remaining - 1, word, out);
        word.pop();
    }
}

fn classify_mobius_loop(system: &GdmsSystem, vertex: VertexId, word: &[GenId]) -> MobiusLoopReport {
    // Word letters apply first to last, so the matrix product is M_n ... M_1.
    let mut m = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
    ];
    for &g in word {
        let letter = system.map_of(g).mobius_matrix().expect("filtered to Möbius maps");
        m = mat_mul(&letter, &m);
    }
    let det = m[0] * m[3] - m[1] * m[2];
    let s = det.sqrt();
    let trace = (m[0] + m[3]) / s;
    let trace_sq = trace * trace;
    const TOL: f64 = 1e-9;
    let on_real_segment =
        trace_sq.im.abs() <= TOL && trace_sq.re >= -TOL && trace_sq.re <= 4.0 + TOL;
    MobiusLoopReport {
        vertex,
        word: word.to_vec(),
        trace_sq,
        loxodromic: !on_real_segment,
    }
}

fn mat_mul(a: &[Complex64; 4], b: &[Complex64; 4]) -> [Complex64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

/// Irreducibility, degree census, and the Möbius-loop report in one place.
pub fn diagnostics(system: &GdmsSystem, max_loop_len: usize) -> SystemDiagnostics {
    let irreducible = system.is_irreducible();
    let has_degree_ge2 = system.degrees().iter().any(|&d| d >= 2);
    let mobius_loop_report = check_loxodromic_loops(system, max_loop_len);
    let mut warnings = Vec::new();
    if !irreducible {
        warnings.push("system is not irreducible; spectral quantities are undefined".into());
    }
    if !has_degree_ge2 {
        warnings.push("no generator has degree >= 2".into());
    }
    for r in &mobius_loop_report {
        if !r.loxodromic {
            warnings.push(format!(
                "Möbius loop {:?} at vertex {} is not loxodromic (trace^2 = {}); \
                 expansion along fibres is impossible",
                r.word, system.vertex_name(r.vertex), r.trace_sq
            ));
        }
    }
    SystemDiagnostics { irreducible, has_degree_ge2, mobius_loop_report, warnings }
}
