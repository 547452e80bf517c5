//! Backward orbit machinery: preimage trees with accumulated derivatives,
//! repelling fixed points, Julia-set point clouds, expansion estimates, and
//! the separation-condition check.
//!
//! A preimage tree for target `(j, w)` at depth `n` enumerates, for every
//! admissible word `xi` of length `n` ending at `j`, every solution of
//! `g_xi(z) = w`. Derivatives accumulate in log space along the chain rule,
//! since their moduli grow geometrically.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{GdmsSystem, GenId, VertexId};
use crate::numeric::splitmix64;
use crate::poly::{cluster_roots, roots, Polynomial, RationalMap};
use crate::symbolic::words;

/// Modulus beyond which a backward orbit is declared escaped; the Julia
/// set is assumed to be a bounded subset of the plane.
pub const BLOWUP_BOUND: f64 = 1e6;

/// Options for preimage-tree walks.
#[derive(Clone, Copy, Debug)]
pub struct WalkOptions {
    pub blowup_bound: f64,
    /// Escalate degree-drop diagnostics (preimages at infinity) to errors.
    pub infinity_is_error: bool,
    /// Visit internal nodes too, not just depth-`n` leaves.
    pub visit_internal: bool,
    /// Split the walk over first-level branches with rayon. The merge
    /// order is fixed, so results do not depend on the thread count.
    pub parallel: bool,
}

impl Default for WalkOptions {
    fn default() -> Self {
        Self {
            blowup_bound: BLOWUP_BOUND,
            infinity_is_error: false,
            visit_internal: false,
            parallel: true,
        }
    }
}

/// Node of a preimage tree as seen by a fold visitor. `rev_word` holds the
/// applied letters from last to first, i.e. `rev_word[0]` is the final
/// letter of the forward word.
pub struct TreeNode<'a> {
    pub rev_word: &'a [GenId],
    pub point: Complex64,
    pub log_deriv: f64,
}

impl TreeNode<'_> {
    pub fn level(&self) -> usize {
        self.rev_word.len()
    }

    /// The word in forward (composition) order.
    pub fn word(&self) -> Vec<GenId> {
        self.rev_word.iter().rev().copied().collect()
    }
}

/// Walk counters. `finite_leaves + leaves_at_infinity` equals the total
/// degree sum over the enumerated words.
#[derive(Clone, Copy, Debug, Default)]
pub struct TreeStats {
    pub finite_leaves: u64,
    pub leaves_at_infinity: f64,
    pub multiplicity_flags: u64,
}

impl TreeStats {
    fn absorb(&mut self, other: &TreeStats) {
        self.finite_leaves += other.finite_leaves;
        self.leaves_at_infinity += other.leaves_at_infinity;
        self.multiplicity_flags += other.multiplicity_flags;
    }
}

/// One enumerated backward leaf, word in forward order.
#[derive(Clone, Debug)]
pub struct BackwardLeaf {
    pub word: Vec<GenId>,
    pub point: Complex64,
    pub log_deriv: f64,
}

/// Column sums of `M^r` at `t = 1`: the number of tree leaves below a node
/// at vertex `v` with `r` backward steps remaining. Used to account for
/// subtrees lost to preimages at infinity.
fn subtree_leaf_table(system: &GdmsSystem, depth: usize) -> Vec<Vec<f64>> {
    let nv = system.vertex_count();
    let mut row = vec![1.0; nv];
    let mut table = vec![row.clone()];
    for _ in 0..depth {
        let mut next = vec![0.0; nv];
        for g in 0..system.generator_count() as GenId {
            let i = system.source_of(g).0;
            let j = system.target_of(g).0;
            next[j] += (system.degree_of(g) as f64) * row[i];
        }
        table.push(next.clone());
        row = next;
    }
    table
}

struct Walker<'a, A, VF: Fn(&mut A, &TreeNode<'_>)> {
    system: &'a GdmsSystem,
    opts: WalkOptions,
    visit: &'a VF,
    subtree_leaves: &'a [Vec<f64>],
    stats: TreeStats,
    rev_word: Vec<GenId>,
    _marker: std::marker::PhantomData<A>,
}

impl<A, VF: Fn(&mut A, &TreeNode<'_>)> Walker<'_, A, VF> {
    fn descend(
        &mut self,
        acc: &mut A,
        vertex: VertexId,
        point: Complex64,
        log_deriv: f64,
        remaining: usize,
    ) -> Result<()> {
        if self.opts.visit_internal || remaining == 0 {
            (self.visit)(acc, &TreeNode { rev_word: &self.rev_word, point, log_deriv });
        }
        if remaining == 0 {
            self.stats.finite_leaves += 1;
            return Ok(());
        }
        for &g in self.system.incoming(vertex) {
            let map = self.system.map_of(g);
            let pre = map.preimages(point)?;
            if pre.missing_at_infinity > 0 {
                if self.opts.infinity_is_error {
                    return Err(Error::PreimageAtInfinity {
                        generator: g,
                        missing: pre.missing_at_infinity,
                    });
                }
                let src = self.system.source_of(g).0;
                self.stats.leaves_at_infinity +=
                    pre.missing_at_infinity as f64 * self.subtree_leaves[remaining - 1][src];
            }
            if pre.clustered {
                self.stats.multiplicity_flags += 1;
            }
            for z in pre.points {
                if z.norm() > self.opts.blowup_bound {
                    return Err(Error::Blowup { modulus: z.norm(), bound: self.opts.blowup_bound });
                }
                let d = map.deriv_eval(z)?.norm();
                // A vanishing derivative means the target hit a critical
                // value; flag it and floor the log so sums stay finite.
                let ld = if d > 0.0 {
                    log_deriv + d.ln()
                } else {
                    self.stats.multiplicity_flags += 1;
                    log_deriv + f64::MIN_POSITIVE.ln()
                };
                self.rev_word.push(g);
                let r = self.descend(acc, self.system.source_of(g), z, ld, remaining - 1);
                self.rev_word.pop();
                r?;
            }
        }
        Ok(())
    }
}

/// Generic fold over a preimage tree. `make` builds a fresh accumulator,
/// `visit` absorbs one node, `merge` combines branch accumulators in a
/// fixed order (first-level branches are sorted, so parallel and
/// sequential runs agree).
pub fn fold_tree<A, MF, VF, MG>(
    system: &GdmsSystem,
    target_vertex: VertexId,
    target: Complex64,
    depth: usize,
    opts: WalkOptions,
    make: MF,
    visit: VF,
    merge: MG,
) -> Result<(A, TreeStats)>
where
    A: Send,
    MF: Fn() -> A + Sync,
    VF: Fn(&mut A, &TreeNode<'_>) + Sync + Send,
    MG: Fn(A, A) -> A,
{
    assert!(depth >= 1, "preimage trees have depth >= 1");
    let subtree_leaves = subtree_leaf_table(system, depth);
    let mut stats = TreeStats::default();

    // First-level branches, in generator order then root order.
    let mut branches: Vec<(GenId, Complex64, f64)> = Vec::new();
    for &g in system.incoming(target_vertex) {
        let map = system.map_of(g);
        let pre = map.preimages(target)?;
        if pre.missing_at_infinity > 0 {
            if opts.infinity_is_error {
                return Err(Error::PreimageAtInfinity {
                    generator: g,
                    missing: pre.missing_at_infinity,
                });
            }
            let src = system.source_of(g).0;
            stats.leaves_at_infinity +=
                pre.missing_at_infinity as f64 * subtree_leaves[depth - 1][src];
        }
        if pre.clustered {
            stats.multiplicity_flags += 1;
        }
        for z in pre.points {
            if z.norm() > opts.blowup_bound {
                return Err(Error::Blowup { modulus: z.norm(), bound: opts.blowup_bound });
            }
            let d = map.deriv_eval(z)?.norm();
            let ld = if d > 0.0 {
                d.ln()
            } else {
                stats.multiplicity_flags += 1;
                f64::MIN_POSITIVE.ln()
            };
            branches.push((g, z, ld));
        }
    }

    let run_branch = |&(g, z, ld): &(GenId, Complex64, f64)| -> Result<(A, TreeStats)> {
        let mut acc = make();
        let mut walker = Walker {
            system,
            opts,
            visit: &visit,
            subtree_leaves: &subtree_leaves,
            stats: TreeStats::default(),
            rev_word: vec![g],
            _marker: std::marker::PhantomData,
        };
        walker.descend(&mut acc, system.source_of(g), z, ld, depth - 1)?;
        Ok((acc, walker.stats))
    };

    let results: Vec<Result<(A, TreeStats)>> = if opts.parallel && branches.len() > 1 {
        branches.par_iter().map(run_branch).collect()
    } else {
        branches.iter().map(run_branch).collect()
    };

    let mut acc = make();
    for r in results {
        let (branch_acc, branch_stats) = r?;
        acc = merge(acc, branch_acc);
        stats.absorb(&branch_stats);
    }
    Ok((acc, stats))
}

/// Materialize every leaf of the preimage tree.
pub fn collect_leaves(
    system: &GdmsSystem,
    target_vertex: VertexId,
    target: Complex64,
    depth: usize,
    opts: WalkOptions,
) -> Result<(Vec<BackwardLeaf>, TreeStats)> {
    let opts = WalkOptions { visit_internal: false, ..opts };
    fold_tree(
        system,
        target_vertex,
        target,
        depth,
        opts,
        Vec::new,
        |acc: &mut Vec<BackwardLeaf>, node| {
            acc.push(BackwardLeaf {
                word: node.word(),
                point: node.point,
                log_deriv: node.log_deriv,
            });
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    )
}

/// Forward evaluation of a word (first letter applied first).
pub fn eval_word(system: &GdmsSystem, word: &[GenId], z: Complex64) -> Result<Complex64> {
    let mut w = z;
    for &g in word {
        w = system.map_of(g).eval(w)?;
    }
    Ok(w)
}

/// Chain-rule log-derivative of a word along the forward orbit of `z`.
pub fn word_log_deriv(system: &GdmsSystem, word: &[GenId], z: Complex64) -> Result<f64> {
    let mut w = z;
    let mut acc = 0.0;
    for &g in word {
        acc += system.map_of(g).deriv_eval(w)?.norm().ln();
        w = system.map_of(g).eval(w)?;
    }
    Ok(acc)
}

// --- repelling fixed points --------------------------------------------------

/// A repelling fixed point of a loop composition, a concrete point of the
/// Julia set at its vertex.
#[derive(Clone, Debug)]
pub struct RepellingPoint {
    pub vertex: VertexId,
    pub word: Vec<GenId>,
    pub point: Complex64,
    pub multiplier_modulus: f64,
}

/// Compositions above this degree are skipped while scanning loops.
const MAX_COMPOSED_DEGREE: usize = 512;

/// Scan loop words at `vertex` by increasing length and return the first
/// fixed point of a loop composition whose multiplier modulus exceeds
/// `1 + 1e-6`.
pub fn repelling_fixed_point(
    system: &GdmsSystem,
    vertex: VertexId,
    max_loop_len: usize,
) -> Result<RepellingPoint> {
    for len in 1..=max_loop_len {
        for word in words(system, len, Some(vertex), Some(vertex)) {
            let deg_product: usize = word.iter().map(|&g| system.degree_of(g)).product();
            if deg_product > MAX_COMPOSED_DEGREE {
                continue;
            }
            let mut comp = system.map_of(word[0]).clone();
            for &g in &word[1..] {
                comp = RationalMap::compose(system.map_of(g), &comp);
            }
            let z_poly = Polynomial::from_real(&[0.0, 1.0]);
            let fixed_eq = comp.num().sub(&comp.den().mul(&z_poly)).trim_relative(1e-13);
            if fixed_eq.is_zero() || fixed_eq.degree() == 0 {
                continue;
            }
            let Ok(mut candidates) = roots(&fixed_eq, 1e-9) else { continue };
            cluster_roots(&mut candidates);
            for z in candidates {
                if let Some(rp) = try_repelling(system, vertex, &word, z) {
                    return Ok(rp);
                }
            }
        }
    }
    Err(Error::NoRepellingPoint { vertex: vertex.0, max_loop_len })
}

fn try_repelling(
    system: &GdmsSystem,
    vertex: VertexId,
    word: &[GenId],
    z: Complex64,
) -> Option<RepellingPoint> {
    let mut w = z;
    let mut multiplier = 1.0_f64;
    for &g in word {
        let map = system.map_of(g);
        multiplier *= map.deriv_eval(w).ok()?.norm();
        w = map.eval(w).ok()?;
    }
    let residual = (w - z).norm();
    if residual <= 1e-8 * (1.0 + z.norm()) && multiplier > 1.0 + 1e-6 {
        Some(RepellingPoint {
            vertex,
            word: word.to_vec(),
            point: z,
            multiplier_modulus: multiplier,
        })
    } else {
        None
    }
}

fn default_loop_scan_len(system: &GdmsSystem) -> usize {
    system.vertex_count().max(4) + 2
}

/// Repelling points for every vertex.
pub fn repelling_points(system: &GdmsSystem) -> Result<Vec<RepellingPoint>> {
    let len = default_loop_scan_len(system);
    (0..system.vertex_count())
        .map(|v| repelling_fixed_point(system, VertexId(v), len))
        .collect()
}

// --- Julia point clouds -------------------------------------------------------

/// Sampled approximation of the Julia set at a vertex: endpoints of seeded
/// random backward walks started at repelling points.
#[derive(Clone, Debug)]
pub struct PointCloud {
    pub vertex: VertexId,
    pub points: Vec<Complex64>,
    pub depth: usize,
    pub seed: u64,
}

impl PointCloud {
    pub fn diameter(&self) -> f64 {
        let (mut lo_re, mut hi_re) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lo_im, mut hi_im) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            lo_re = lo_re.min(p.re);
            hi_re = hi_re.max(p.re);
            lo_im = lo_im.min(p.im);
            hi_im = hi_im.max(p.im);
        }
        if self.points.is_empty() {
            0.0
        } else {
            ((hi_re - lo_re).powi(2) + (hi_im - lo_im).powi(2)).sqrt()
        }
    }

    /// CSV export, one `re,im` line per point.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for p in &self.points {
            writeln!(w, "{},{}", p.re, p.im)?;
        }
        Ok(())
    }
}

/// Backward random walk sampler for the Julia set at `vertex`.
///
/// Each sample starts at the repelling point of a random vertex reachable
/// by an admissible word of length `depth` from `vertex`, then pulls back
/// `depth` times choosing uniformly among admissible generators and
/// uniformly among preimage points. Walks are constrained so the final
/// point lies in the fibre of the requested vertex. Samples are seeded
/// individually, so parallel runs reproduce bit-for-bit.
///
/// The generator choice is uniform, not weight-biased: clouds are geometric
/// approximants of the Julia set, not samples of any invariant measure.
pub fn julia_cloud(
    system: &GdmsSystem,
    vertex: VertexId,
    samples: usize,
    depth: usize,
    seed: u64,
) -> Result<PointCloud> {
    assert!(depth >= 1);
    if !system.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    let nv = system.vertex_count();
    // reach[k][v]: an admissible word of length k runs from `vertex` to v.
    let mut reach = vec![vec![false; nv]; depth + 1];
    reach[0][vertex.0] = true;
    for k in 1..=depth {
        for g in 0..system.generator_count() as GenId {
            if reach[k - 1][system.source_of(g).0] {
                reach[k][system.target_of(g).0] = true;
            }
        }
    }
    let end_vertices: Vec<usize> = (0..nv).filter(|&v| reach[depth][v]).collect();
    if end_vertices.is_empty() {
        return Err(Error::NoAdmissiblePath { vertex: vertex.0, depth });
    }
    let reps = {
        let len = default_loop_scan_len(system);
        let mut reps: Vec<Option<RepellingPoint>> = vec![None; nv];
        for &v in &end_vertices {
            reps[v] = Some(repelling_fixed_point(system, VertexId(v), len)?);
        }
        reps
    };

    let sample_one = |k: usize| -> Result<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ (k as u64).wrapping_mul(0x9E37)));
        let j = end_vertices[rng.gen_range(0..end_vertices.len())];
        let mut cur = j;
        let mut z = reps[j].as_ref().expect("repelling point computed").point;
        for r in (1..=depth).rev() {
            let candidates: Vec<GenId> = system
                .incoming(VertexId(cur))
                .iter()
                .copied()
                .filter(|&g| reach[r - 1][system.source_of(g).0])
                .collect();
            debug_assert!(!candidates.is_empty(), "irreducible systems always continue");
            let g = candidates[rng.gen_range(0..candidates.len())];
            let pre = system.map_of(g).preimages(z)?;
            if pre.points.is_empty() {
                return Err(Error::PreimageAtInfinity {
                    generator: g,
                    missing: pre.missing_at_infinity,
                });
            }
            z = pre.points[rng.gen_range(0..pre.points.len())];
            if z.norm() > BLOWUP_BOUND {
                return Err(Error::Blowup { modulus: z.norm(), bound: BLOWUP_BOUND });
            }
            cur = system.source_of(g).0;
        }
        debug_assert_eq!(cur, vertex.0);
        Ok(z)
    };

    let points: Result<Vec<Complex64>> = (0..samples).into_par_iter().map(sample_one).collect();
    Ok(PointCloud { vertex, points: points?, depth, seed })
}

// --- expansion estimate -------------------------------------------------------

/// Per-depth lower-bound proxies for the fibrewise expansion constant:
/// `lambda_hat[n-1] = (min log-derivative over all depth-n leaves rooted at
/// every vertex's repelling point) ^ (1/n)`.
pub fn expansion_estimate(system: &GdmsSystem, depth: usize) -> Result<Vec<f64>> {
    assert!(depth >= 2, "expansion estimates need depth >= 2");
    let reps = repelling_points(system)?;
    let mut min_log = vec![f64::INFINITY; depth];
    for rp in &reps {
        let (mins, _) = fold_tree(
            system,
            rp.vertex,
            rp.point,
            depth,
            WalkOptions { visit_internal: true, ..WalkOptions::default() },
            || vec![f64::INFINITY; depth],
            |acc: &mut Vec<f64>, node| {
                let k = node.level() - 1;
                if node.log_deriv < acc[k] {
                    acc[k] = node.log_deriv;
                }
            },
            |a, b| a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect(),
        )?;
        for (m, x) in min_log.iter_mut().zip(mins) {
            *m = m.min(x);
        }
    }
    Ok(min_log
        .iter()
        .enumerate()
        .map(|(k, m)| (m / (k + 1) as f64).exp())
        .collect())
}

// --- separation check ---------------------------------------------------------

/// Minimum separation between the pullbacks of sampled Julia clouds under
/// one pair of generators out of a common vertex.
#[derive(Clone, Debug)]
pub struct VscPairReport {
    pub vertex: VertexId,
    pub gen_a: GenId,
    pub gen_b: GenId,
    pub min_distance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct VscReport {
    /// Pairs fail when their separation is at most `threshold * scale`.
    pub threshold: f64,
    /// Largest sampled cloud diameter; the separation scale reference.
    pub scale: f64,
    pub pairs: Vec<VscPairReport>,
    pub all_pass: bool,
    pub note: String,
}

pub const VSC_THRESHOLD: f64 = 1e-3;

/// Sampled check of the vertex-wise separation condition: for every vertex
/// and every pair of distinct generators out of it, the pullbacks of the
/// target-vertex Julia clouds should be disjoint. Report-only and
/// explicitly heuristic: finite samples cannot certify emptiness of an
/// intersection of fractal sets.
pub fn vsc_check(
    system: &GdmsSystem,
    cloud_samples: usize,
    depth: usize,
    seed: u64,
) -> Result<VscReport> {
    let nv = system.vertex_count();
    let mut clouds = Vec::with_capacity(nv);
    for v in 0..nv {
        clouds.push(julia_cloud(system, VertexId(v), cloud_samples, depth, splitmix64(seed ^ v as u64))?);
    }
    let scale = clouds.iter().map(|c| c.diameter()).fold(0.0_f64, f64::max).max(1e-12);

    let mut pullbacks: Vec<Vec<Complex64>> = Vec::with_capacity(system.generator_count());
    for g in 0..system.generator_count() as GenId {
        let target_cloud = &clouds[system.target_of(g).0];
        let mut pts = Vec::new();
        for &p in &target_cloud.points {
            pts.extend(system.map_of(g).preimages(p)?.points);
        }
        pullbacks.push(pts);
    }

    let mut pairs = Vec::new();
    for v in 0..nv {
        let out = system.outgoing(VertexId(v));
        for (i, &ga) in out.iter().enumerate() {
            for &gb in &out[i + 1..] {
                let mut min_distance = f64::INFINITY;
                for a in &pullbacks[ga as usize] {
                    for b in &pullbacks[gb as usize] {
                        min_distance = min_distance.min((a - b).norm());
                    }
                }
                pairs.push(VscPairReport {
                    vertex: VertexId(v),
                    gen_a: ga,
                    gen_b: gb,
                    min_distance,
                    pass: min_distance > VSC_THRESHOLD * scale,
                });
            }
        }
    }
    let all_pass = pairs.iter().all(|p| p.pass);
    Ok(VscReport {
        threshold: VSC_THRESHOLD,
        scale,
        pairs,
        all_pass,
        note: "HEURISTIC: separation is measured between finite sampled point clouds; \
               emptiness of Julia-set intersections is not decidable from samples."
            .into(),
    })
}
