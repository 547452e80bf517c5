//! Vertex-wise hole families, truncated post-critical clouds, and explicit
//! hole-preimage atoms with distortion-bound disk enclosures.
//!
//! A hole family places a disk of radius `R` at a Julia point of every
//! vertex, with the closed `2R` disk clear of the (truncated) post-critical
//! set so every inverse branch is univalent over the doubled disk. Pulling
//! the hole centres back along preimage trees yields one atom per inverse
//! branch: the branch image of the hole is sandwiched between two disks
//! around the centre preimage with radii `R / (K |g'|)` and `K R / |g'|`.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::backward::{collect_leaves, julia_cloud, repelling_points, WalkOptions};
use crate::error::{Error, Result};
use crate::model::{GdmsSystem, GenId, VertexId};
use crate::numeric::KahanSum;
use crate::symbolic::partition_deg_matrix;

/// Distortion constant for inverse-branch disk enclosures:
/// `k(t) = ((1+t)/(1-t))^4` evaluated at `t = 1/2`. Deliberately
/// conservative; both enclosure radii are reported so callers can sharpen.
pub const KOEBE_CONSTANT: f64 = 81.0;

/// Truncated, grid-deduplicated sample of the post-critical set at a
/// vertex: critical values of all compositions of length at most `depth`
/// ending there. An inner approximation; clearances computed against it
/// are necessary-condition checks only.
#[derive(Clone, Debug)]
pub struct PostcriticalCloud {
    pub vertex: VertexId,
    pub points: Vec<Complex64>,
    pub depth: usize,
    pub truncated: bool,
}

/// Default truncation depth for post-critical clouds.
pub const POSTCRITICAL_DEPTH: usize = 8;
/// Default total point budget across vertices.
pub const POSTCRITICAL_BUDGET: usize = 1_000_000;

/// Post-critical clouds for every vertex at once (the per-vertex sets feed
/// each other along edges).
pub fn postcritical_all(
    system: &GdmsSystem,
    depth: usize,
    budget: usize,
) -> Result<Vec<PostcriticalCloud>> {
    assert!(depth >= 1);
    let nv = system.vertex_count();

    // Finite critical values per generator.
    let mut critical_values: Vec<Vec<Complex64>> = Vec::with_capacity(system.generator_count());
    for g in 0..system.generator_count() as GenId {
        let map = system.map_of(g);
        let mut cvs = Vec::new();
        for c in map.critical_points()? {
            match map.eval(c) {
                Ok(v) if v.norm() <= crate::backward::BLOWUP_BOUND => cvs.push(v),
                // Critical values at or near infinity stay out of the
                // planar cloud.
                _ => {}
            }
        }
        critical_values.push(cvs);
    }

    // Grid pitch from the first-generation scale.
    let scale = critical_values
        .iter()
        .flatten()
        .map(|z| z.norm())
        .fold(1.0_f64, f64::max);
    let pitch = 1e-4 * scale;

    let mut points: Vec<Vec<Complex64>> = vec![Vec::new(); nv];
    let mut cells: Vec<HashMap<(i64, i64), ()>> = vec![HashMap::new(); nv];
    let key = |z: Complex64| ((z.re / pitch).round() as i64, (z.im / pitch).round() as i64);
    let mut total = 0usize;
    let mut truncated = false;

    'outer: for _ in 0..depth {
        let snapshot: Vec<usize> = points.iter().map(|p| p.len()).collect();
        for g in 0..system.generator_count() as GenId {
            let to = system.target_of(g).0;
            let from = system.source_of(g).0;
            let mut push = |z: Complex64, points: &mut Vec<Vec<Complex64>>| -> bool {
                if cells[to].insert(key(z), ()).is_none() {
                    points[to].push(z);
                    total += 1;
                }
                total <= budget
            };
            for k in 0..critical_values[g as usize].len() {
                let z = critical_values[g as usize][k];
                if !push(z, &mut points) {
                    truncated = true;
                    break 'outer;
                }
            }
            // Push the previous generation forward through this generator.
            for k in 0..snapshot[from] {
                let z = points[from][k];
                if let Ok(v) = system.map_of(g).eval(z) {
                    if v.norm() <= crate::backward::BLOWUP_BOUND && !push(v, &mut points) {
                        truncated = true;
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok((0..nv)
        .map(|v| PostcriticalCloud {
            vertex: VertexId(v),
            points: points[v].clone(),
            depth,
            truncated,
        })
        .collect())
}

/// Single-vertex convenience wrapper over [`postcritical_all`].
pub fn postcritical_approx(
    system: &GdmsSystem,
    vertex: VertexId,
    depth: usize,
    budget: usize,
) -> Result<PostcriticalCloud> {
    Ok(postcritical_all(system, depth, budget)?.swap_remove(vertex.0))
}

/// Per-vertex validation record of a hole family.
#[derive(Clone, Copy, Debug)]
pub struct HoleValidation {
    /// Distance from the centre to the sampled Julia cloud (repelling
    /// point included). Centres are expected to lie on the Julia set.
    pub dist_to_cloud: f64,
    /// Distance from the centre to the truncated post-critical cloud;
    /// `None` when no finite post-critical points exist.
    pub postcritical_clearance: Option<f64>,
}

/// A family of vertex-wise holes of one radius: a centre on (the sampled
/// approximation of) each vertex Julia set whose doubled disk clears the
/// truncated post-critical cloud.
#[derive(Clone, Debug)]
pub struct HoleFamily {
    pub radius: f64,
    pub centers: Vec<Complex64>,
    pub validation: Vec<HoleValidation>,
    pub warnings: Vec<String>,
}

/// Knobs for hole construction: cloud sampling and post-critical depth.
#[derive(Clone, Copy, Debug)]
pub struct HoleConfig {
    pub cloud_samples: usize,
    pub cloud_depth: usize,
    pub seed: u64,
    pub postcritical_depth: usize,
    pub postcritical_budget: usize,
}

impl Default for HoleConfig {
    fn default() -> Self {
        Self {
            cloud_samples: 400,
            cloud_depth: 10,
            seed: 1,
            postcritical_depth: POSTCRITICAL_DEPTH,
            postcritical_budget: POSTCRITICAL_BUDGET,
        }
    }
}

fn min_dist(z: Complex64, pts: &[Complex64]) -> Option<f64> {
    pts.iter()
        .map(|p| (z - p).norm())
        .min_by(|a, b| a.total_cmp(b))
}

/// Build and validate a hole family of radius `R`.
///
/// With `centers` given, each centre is validated in place. Otherwise the
/// centre at each vertex is chosen from the sampled Julia cloud maximizing
/// the distance to the post-critical cloud (deterministic given the seed).
/// Validation requires clearance strictly greater than `2R`; failure
/// reports the best achievable clearance.
pub fn build_hole_family(
    system: &GdmsSystem,
    radius: f64,
    centers: Option<&[Complex64]>,
    cfg: &HoleConfig,
) -> Result<HoleFamily> {
    assert!(radius > 0.0);
    let nv = system.vertex_count();
    if let Some(cs) = centers {
        assert_eq!(cs.len(), nv, "one centre per vertex");
    }
    let pc = postcritical_all(system, cfg.postcritical_depth, cfg.postcritical_budget)?;
    let reps = repelling_points(system)?;

    let mut out_centers = Vec::with_capacity(nv);
    let mut validation = Vec::with_capacity(nv);
    let mut warnings = Vec::new();
    if pc.iter().any(|c| c.truncated) {
        warnings.push("post-critical cloud budget exhausted; clearances use a partial cloud".into());
    }
    warnings.push(
        "HEURISTIC: post-critical clearance is checked against a truncated inner \
         approximation; it is a necessary condition only"
            .into(),
    );

    for v in 0..nv {
        let cloud = julia_cloud(system, VertexId(v), cfg.cloud_samples, cfg.cloud_depth, cfg.seed)?;
        let mut candidates = cloud.points.clone();
        candidates.push(reps[v].point);
        let scale = cloud.diameter().max(1.0);

        let center = match centers {
            Some(cs) => cs[v],
            None => {
                let mut best = candidates[0];
                let mut best_clear = f64::NEG_INFINITY;
                for &c in &candidates {
                    let clear = min_dist(c, &pc[v].points).unwrap_or(f64::INFINITY);
                    if clear > best_clear {
                        best_clear = clear;
                        best = c;
                    }
                }
                best
            }
        };

        let clearance = min_dist(center, &pc[v].points);
        if let Some(clear) = clearance {
            if clear <= 2.0 * radius {
                let best_possible = match centers {
                    Some(_) => clear,
                    None => clearance.unwrap_or(f64::INFINITY),
                };
                return Err(Error::HoleClearance {
                    vertex: v,
                    radius,
                    best_clearance: best_possible,
                    two_r: 2.0 * radius,
                });
            }
        } else {
            warnings.push(format!(
                "vertex {}: no finite post-critical points; clearance is vacuous",
                system.vertex_name(VertexId(v))
            ));
        }
        let dist_to_cloud = min_dist(center, &candidates).expect("cloud is nonempty");
        if dist_to_cloud > 1e-3 * scale {
            warnings.push(format!(
                "vertex {}: hole centre sits {dist_to_cloud:.3e} from the sampled Julia cloud \
                 (scale {scale:.3e}); it may not lie on the Julia set",
                system.vertex_name(VertexId(v))
            ));
        }
        out_centers.push(center);
        validation.push(HoleValidation { dist_to_cloud, postcritical_clearance: clearance });
    }

    Ok(HoleFamily { radius, centers: out_centers, validation, warnings })
}

/// One inverse-branch pullback of a hole: the branch image of the hole at
/// `t(word)` is sandwiched between the disks of radii `r_inner` and
/// `r_outer` about `center`, and carries weight `|g'|^(-delta)`.
#[derive(Clone, Debug)]
pub struct HolePreimageAtom {
    pub word: Vec<GenId>,
    pub center: Complex64,
    pub r_inner: f64,
    pub r_outer: f64,
    pub weight: f64,
}

impl HolePreimageAtom {
    /// CSV row: dash-joined generator ids, centre, radii, weight.
    pub fn csv_row(&self) -> String {
        let word = self
            .word
            .iter()
            .map(|g| g.to_string())
            .collect::<Vec<_>>()
            .join("-");
        format!(
            "{},{},{},{},{},{}",
            word, self.center.re, self.center.im, self.r_inner, self.r_outer, self.weight
        )
    }
}

/// All depth-`n` hole-preimage atoms across every vertex, one per backward
/// leaf. The weight sum equals the geometric partition function at `delta`.
pub fn hole_preimages(
    system: &GdmsSystem,
    holes: &HoleFamily,
    delta: f64,
    n: usize,
    budget: f64,
) -> Result<Vec<HolePreimageAtom>> {
    let needed = partition_deg_matrix(system, n, 1.0);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let opts = WalkOptions { infinity_is_error: true, ..WalkOptions::default() };
    let mut atoms = Vec::new();
    for v in 0..system.vertex_count() {
        let (leaves, _) = collect_leaves(system, VertexId(v), holes.centers[v], n, opts)?;
        for leaf in leaves {
            let inv_deriv = (-leaf.log_deriv).exp();
            atoms.push(HolePreimageAtom {
                word: leaf.word,
                center: leaf.point,
                r_inner: holes.radius * inv_deriv / KOEBE_CONSTANT,
                r_outer: holes.radius * inv_deriv * KOEBE_CONSTANT,
                weight: (-delta * leaf.log_deriv).exp(),
            });
        }
    }
    Ok(atoms)
}

/// Weight sum together with the only measure statement the theory
/// licenses: the conformal measure of the n-hole preimage is bracketed by
/// unknown system constants times the sum.
#[derive(Clone, Debug)]
pub struct MeasureBracket {
    pub weight_sum: f64,
    pub statement: String,
}

pub fn measure_bracket_report(atoms: &[HolePreimageAtom]) -> Result<MeasureBracket> {
    if atoms.is_empty() {
        return Err(Error::EmptyAtoms);
    }
    let mut sum = KahanSum::new();
    for a in atoms {
        sum.add(a.weight);
    }
    let weight_sum = sum.total();
    Ok(MeasureBracket {
        weight_sum,
        statement: format!(
            "the conformal measure of the n-hole preimage lies between C1*{weight_sum:.12e} and \
             C2*{weight_sum:.12e} for system-dependent constants C1, C2 > 0 that are not \
             computed here"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn z_pow(d: usize) -> serde_json::Value {
        let mut num = vec![[0.0, 0.0]; d + 1];
        num[d] = [1.0, 0.0];
        serde_json::json!({ "num": num })
    }

    fn single_z2() -> GdmsSystem {
        GdmsSystem::parse_str(
            &serde_json::json!({
                "vertices": ["v"],
                "edges": [{ "id": "e", "from": "v", "to": "v", "maps": [z_pow(2)] }]
            })
            .to_string(),
        )
        .unwrap()
    }

    fn two_vertex() -> GdmsSystem {
        GdmsSystem::parse_str(
            &serde_json::json!({
                "vertices": ["1", "2"],
                "edges": [
                    { "id": "a", "from": "1", "to": "2", "maps": [z_pow(2)] },
                    { "id": "b", "from": "2", "to": "1", "maps": [z_pow(3)] }
                ]
            })
            .to_string(),
        )
        .unwrap()
    }

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn postcritical_of_square_is_origin() {
        let sys = single_z2();
        let pc = postcritical_approx(&sys, VertexId(0), 3, 10_000).unwrap();
        assert_eq!(pc.points.len(), 1);
        assert!(pc.points[0].norm() < 1e-12);
    }

    #[test]
    fn postcritical_of_basilica_parameter() {
        // z^2 - 2: critical orbit 0 -> -2 -> 2 -> 2; the cloud is {-2, 2}.
        let sys = GdmsSystem::parse_str(
            &serde_json::json!({
                "vertices": ["v"],
                "edges": [{ "id": "e", "from": "v", "to": "v",
                            "maps": [{ "num": [[-2.0, 0.0], [0.0, 0.0], [1.0, 0.0]] }] }]
            })
            .to_string(),
        )
        .unwrap();
        let pc = postcritical_approx(&sys, VertexId(0), 3, 10_000).unwrap();
        let mut moduli: Vec<f64> = pc.points.iter().map(|p| p.re).collect();
        moduli.sort_by(f64::total_cmp);
        assert_eq!(pc.points.len(), 2);
        assert_relative_eq!(moduli[0], -2.0, max_relative = 1e-12);
        assert_relative_eq!(moduli[1], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn postcritical_two_vertex_sticks_at_origin() {
        let sys = two_vertex();
        let pc = postcritical_approx(&sys, VertexId(0), 2, 10_000).unwrap();
        assert_eq!(pc.points.len(), 1);
        assert!(pc.points[0].norm() < 1e-12);
    }

    #[test]
    fn hole_family_accepts_and_rejects_by_clearance() {
        let sys = single_z2();
        let cfg = HoleConfig::default();
        // Centre 1, postcritical cloud {0}: clearance 1 > 0.2.
        let holes = build_hole_family(&sys, 0.1, Some(&[one()]), &cfg).unwrap();
        assert_relative_eq!(holes.validation[0].postcritical_clearance.unwrap(), 1.0);
        assert!(holes.validation[0].dist_to_cloud < 1e-9);

        // R = 0.6: clearance 1 is not > 1.2.
        let err = build_hole_family(&sys, 0.6, Some(&[one()]), &cfg).unwrap_err();
        assert!(matches!(err, Error::HoleClearance { .. }));
    }

    #[test]
    fn hole_family_two_vertex_at_unit_centres() {
        let sys = two_vertex();
        let holes =
            build_hole_family(&sys, 0.1, Some(&[one(), one()]), &HoleConfig::default()).unwrap();
        for v in &holes.validation {
            assert_relative_eq!(v.postcritical_clearance.unwrap(), 1.0);
        }
    }

    #[test]
    fn auto_selected_centres_validate() {
        let sys = single_z2();
        let holes = build_hole_family(&sys, 0.1, None, &HoleConfig::default()).unwrap();
        assert_eq!(holes.centers.len(), 1);
        assert!((holes.centers[0].norm() - 1.0).abs() < 1e-8);
        assert!(holes.validation[0].dist_to_cloud == 0.0);
    }

    #[test]
    fn atoms_of_square_depth_one() {
        let sys = single_z2();
        let holes =
            build_hole_family(&sys, 0.1, Some(&[one()]), &HoleConfig::default()).unwrap();
        let atoms = hole_preimages(&sys, &holes, 1.0, 1, 1e7).unwrap();
        assert_eq!(atoms.len(), 2);
        for a in &atoms {
            assert_relative_eq!(a.weight, 0.5, max_relative = 1e-12);
            assert_relative_eq!(a.r_inner, 0.1 / (81.0 * 2.0), max_relative = 1e-12);
            assert_relative_eq!(a.r_outer, 0.1 * 81.0 / 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn atom_weights_sum_to_geometric_partition() {
        let sys = single_z2();
        let holes =
            build_hole_family(&sys, 0.1, Some(&[one()]), &HoleConfig::default()).unwrap();
        let atoms = hole_preimages(&sys, &holes, 1.0, 3, 1e7).unwrap();
        assert_eq!(atoms.len(), 8);
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-10);

        let report = measure_bracket_report(&atoms).unwrap();
        assert_relative_eq!(report.weight_sum, 1.0, max_relative = 1e-10);
        assert!(report.statement.contains("C1"));
        assert!(report.statement.contains("C2"));
    }

    #[test]
    fn atom_weights_at_delta_zero_count_leaves() {
        let sys = single_z2();
        let holes =
            build_hole_family(&sys, 0.1, Some(&[one()]), &HoleConfig::default()).unwrap();
        let atoms = hole_preimages(&sys, &holes, 0.0, 2, 1e7).unwrap();
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        assert_relative_eq!(total, 4.0);
    }

    #[test]
    fn two_vertex_atoms_depth_two() {
        let sys = two_vertex();
        let holes =
            build_hole_family(&sys, 0.1, Some(&[one(), one()]), &HoleConfig::default()).unwrap();
        let atoms = hole_preimages(&sys, &holes, 1.0, 2, 1e7).unwrap();
        assert_eq!(atoms.len(), 12);
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        assert_relative_eq!(total, 2.0, max_relative = 1e-10);
    }

    #[test]
    fn csv_rows_are_well_formed() {
        let atom = HolePreimageAtom {
            word: vec![0, 1, 0],
            center: Complex64::new(0.5, -0.25),
            r_inner: 1e-3,
            r_outer: 8.1,
            weight: 0.125,
        };
        assert_eq!(atom.csv_row(), "0-1-0,0.5,-0.25,0.001,8.1,0.125");
    }
}
