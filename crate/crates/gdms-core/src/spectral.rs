//! Rational degree matrices, Perron–Frobenius data, canonical weights,
//! topological entropy, and the entropy identity.
//!
//! The degree matrix at inverse temperature `t` has entries
//! `M(t)[i][j] = sum over generators i -> j of deg(g)^t`. Its spectral
//! radius carries the pressure: `log rho(M(1))` is the topological entropy
//! of the associated skew product, and for every `t` the canonical weights
//! tie a closed-form measure entropy to `log rho(M(t))`.

use crate::error::{Error, Result};
use crate::model::{GdmsSystem, GenId, VertexId};

/// `#V x #V` nonnegative matrix of degree sums at inverse temperature `t`.
#[derive(Clone, Debug)]
pub struct DegreeMatrix {
    pub t: f64,
    pub entries: Vec<Vec<f64>>,
}

/// Spectral radius with sum-normalized positive left/right eigenvectors.
#[derive(Clone, Debug)]
pub struct PerronData {
    pub rho: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

/// Canonical weights `a(t)[g] = deg(g)^t u[i(g)] / (rho_t u[t(g)])`,
/// indexed by generator. They sum to 1 over the generators into each vertex.
#[derive(Clone, Debug)]
pub struct WeightFamily {
    pub t: f64,
    pub weights: Vec<f64>,
}

/// Stationary vertex distribution of the weight-induced vertex chain.
#[derive(Clone, Debug)]
pub struct VertexDistribution {
    pub c: Vec<f64>,
}

pub fn degree_matrix(system: &GdmsSystem, t: f64) -> DegreeMatrix {
    let n = system.vertex_count();
    let mut entries = vec![vec![0.0; n]; n];
    for g in 0..system.generator_count() as GenId {
        let i = system.source_of(g).0;
        let j = system.target_of(g).0;
        entries[i][j] += (system.degree_of(g) as f64).powf(t);
    }
    DegreeMatrix { t, entries }
}

const POWER_MAX_ITERS: usize = 100_000;

/// One power-iteration run on `A + shift*I` with sum normalization.
/// Returns the shift-corrected dominant eigenvalue and its eigenvector once
/// successive estimates settle below 1e-14 relative and the residual
/// `max |Av - rho v|` drops below `1e-13 * max(rho, 1)`.
fn power_iterate(a: &[Vec<f64>], shift: f64) -> Option<(f64, Vec<f64>)> {
    let n = a.len();
    let mut v = vec![1.0 / n as f64; n];
    let mut rho_est = f64::NAN;
    for _ in 0..POWER_MAX_ITERS {
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut acc = shift * v[i];
            for j in 0..n {
                acc += a[i][j] * v[j];
            }
            w[i] = acc;
        }
        let s: f64 = w.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        for x in &mut w {
            *x /= s;
        }
        let settled = (s - rho_est).abs() <= 1e-14 * s;
        rho_est = s;
        v = w;
        if settled {
            let rho = rho_est - shift;
            let mut residual = 0.0_f64;
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += a[i][j] * v[j];
                }
                residual = residual.max((acc - rho * v[i]).abs());
            }
            if residual <= 1e-13 * rho.max(1.0) {
                return Some((rho, v));
            }
        }
    }
    None
}

/// Perron–Frobenius eigendata by power iteration on `M` and on its
/// transpose. Period-2-like degree matrices make the plain iteration
/// oscillate forever, so a failed pass retries on `M + I`: the unit shift
/// leaves the eigenvectors untouched, separates the dominant eigenvalue
/// from its rotated companions by an O(1) ratio, and is subtracted back out.
pub fn perron(matrix: &DegreeMatrix) -> Result<PerronData> {
    let a = &matrix.entries;
    let n = a.len();
    let transpose: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect();
    let (rho, right) = power_iterate(a, 0.0)
        .or_else(|| power_iterate(a, 1.0))
        .ok_or(Error::PowerIterationDidNotConverge(POWER_MAX_ITERS))?;
    let (_, left) = power_iterate(&transpose, 0.0)
        .or_else(|| power_iterate(&transpose, 1.0))
        .ok_or(Error::PowerIterationDidNotConverge(POWER_MAX_ITERS))?;
    Ok(PerronData { rho, left, right })
}

pub fn canonical_weights(system: &GdmsSystem, t: f64) -> Result<WeightFamily> {
    if !system.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    let pd = perron(&degree_matrix(system, t))?;
    let mut weights = Vec::with_capacity(system.generator_count());
    for g in 0..system.generator_count() as GenId {
        let i = system.source_of(g).0;
        let j = system.target_of(g).0;
        let w = (system.degree_of(g) as f64).powf(t) * pd.left[i] / (pd.rho * pd.left[j]);
        weights.push(w);
    }
    Ok(WeightFamily { t, weights })
}

/// `log rho(M)` at `t = 1`.
pub fn topological_entropy(system: &GdmsSystem) -> Result<f64> {
    if !system.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    Ok(perron(&degree_matrix(system, 1.0))?.rho.ln())
}

const STATIONARY_MAX_ITERS: usize = 200_000;

/// Fixed point of `c[i] = sum over generators g out of i of a[g] c[t(g)]`,
/// normalized to sum 1. The iteration is damped (averaged with the
/// identity), which has the same fixed points but converges for periodic
/// vertex chains as well.
pub fn vertex_stationary(system: &GdmsSystem, weights: &WeightFamily) -> Result<VertexDistribution> {
    let n = system.vertex_count();
    let mut b = vec![vec![0.0; n]; n];
    for g in 0..system.generator_count() as GenId {
        let i = system.source_of(g).0;
        let j = system.target_of(g).0;
        b[i][j] += weights.weights[g as usize];
    }
    let mut c = vec![1.0 / n as f64; n];
    for it in 0..STATIONARY_MAX_ITERS {
        let mut bc = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                bc[i] += b[i][j] * c[j];
            }
        }
        let residual = bc
            .iter()
            .zip(&c)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0_f64, f64::max);
        if residual <= 1e-14 {
            return Ok(VertexDistribution { c });
        }
        let mut next: Vec<f64> = bc.iter().zip(&c).map(|(x, y)| 0.5 * (x + y)).collect();
        let s: f64 = next.iter().sum();
        if !(s > 0.0) {
            return Err(Error::StationaryDidNotConverge(it));
        }
        for x in &mut next {
            *x /= s;
        }
        c = next;
    }
    Err(Error::StationaryDidNotConverge(STATIONARY_MAX_ITERS))
}

/// Residual of the entropy identity at inverse temperature `t`:
/// `|h + (t - 1) E - log rho(M(t))|`, where `h` is the closed-form
/// conditional entropy of the canonical weight measure and `E` its mean
/// log-degree. Exact identities make this a machine-precision check.
pub fn entropy_identity_residual(system: &GdmsSystem, t: f64) -> Result<f64> {
    let pd = perron(&degree_matrix(system, t))?;
    let weights = canonical_weights(system, t)?;
    let dist = vertex_stationary(system, &weights)?;
    let mut h = 0.0;
    let mut mean_log_deg = 0.0;
    for i in 0..system.vertex_count() {
        let mut h_i = 0.0;
        let mut e_i = 0.0;
        for &g in system.incoming(VertexId(i)) {
            let a = weights.weights[g as usize];
            let log_deg = (system.degree_of(g) as f64).ln();
            h_i += a * (log_deg - a.ln());
            e_i += a * log_deg;
        }
        h += dist.c[i] * h_i;
        mean_log_deg += dist.c[i] * e_i;
    }
    Ok((h + (t - 1.0) * mean_log_deg - pd.rho.ln()).abs())
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

    fn degrees_2_3() -> GdmsSystem {
        GdmsSystem::parse_str(
            &serde_json::json!({
                "vertices": ["v"],
                "edges": [{ "id": "e", "from": "v", "to": "v", "maps": [z_pow(2), z_pow(3)] }]
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

    #[test]
    fn degree_matrix_values() {
        let m = degree_matrix(&degrees_2_3(), 1.0);
        assert_eq!(m.entries, vec![vec![5.0]]);

        let m = degree_matrix(&two_vertex(), 1.0);
        assert_eq!(m.entries, vec![vec![0.0, 2.0], vec![3.0, 0.0]]);

        let m = degree_matrix(&two_vertex(), 0.0);
        assert_eq!(m.entries, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn perron_scalar() {
        let pd = perron(&degree_matrix(&degrees_2_3(), 1.0)).unwrap();
        assert_relative_eq!(pd.rho, 5.0, max_relative = 1e-13);
        assert_relative_eq!(pd.left[0], 1.0);
        assert_relative_eq!(pd.right[0], 1.0);
    }

    #[test]
    fn perron_periodic_two_vertex() {
        // Oracle: the dominant eigenvalue solves lambda^2 = 6.
        let pd = perron(&degree_matrix(&two_vertex(), 1.0)).unwrap();
        assert_relative_eq!(pd.rho, 6.0_f64.sqrt(), max_relative = 1e-12);
        // Left eigenvector proportional to (sqrt 3, sqrt 2).
        let expected = [3.0_f64.sqrt(), 2.0_f64.sqrt()];
        let norm: f64 = expected.iter().sum();
        assert_relative_eq!(pd.left[0], expected[0] / norm, max_relative = 1e-10);
        assert_relative_eq!(pd.left[1], expected[1] / norm, max_relative = 1e-10);
    }

    #[test]
    fn perron_symmetric_rank_one() {
        let m = DegreeMatrix { t: 1.0, entries: vec![vec![1.0, 1.0], vec![1.0, 1.0]] };
        let pd = perron(&m).unwrap();
        assert_relative_eq!(pd.rho, 2.0, max_relative = 1e-13);
        assert_relative_eq!(pd.left[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(pd.right[1], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn perron_residuals_are_tight() {
        for sys in [single_z2(), degrees_2_3(), two_vertex()] {
            for t in [0.0, 0.5, 1.0, 2.0] {
                let m = degree_matrix(&sys, t);
                let pd = perron(&m).unwrap();
                let n = m.entries.len();
                for i in 0..n {
                    let mut right_res = -pd.rho * pd.right[i];
                    let mut left_res = -pd.rho * pd.left[i];
                    for j in 0..n {
                        right_res += m.entries[i][j] * pd.right[j];
                        left_res += m.entries[j][i] * pd.left[j];
                    }
                    assert!(right_res.abs() <= 1e-10 * pd.rho);
                    assert!(left_res.abs() <= 1e-10 * pd.rho);
                    assert!(pd.left[i] > 0.0 && pd.right[i] > 0.0);
                }
            }
        }
    }

    #[test]
    fn weights_on_single_vertex() {
        let w = canonical_weights(&degrees_2_3(), 1.0).unwrap();
        assert_relative_eq!(w.weights[0], 0.4, max_relative = 1e-12);
        assert_relative_eq!(w.weights[1], 0.6, max_relative = 1e-12);

        let w = canonical_weights(&degrees_2_3(), 0.0).unwrap();
        assert_relative_eq!(w.weights[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(w.weights[1], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn weights_on_two_vertex_are_one() {
        let w = canonical_weights(&two_vertex(), 1.0).unwrap();
        assert_relative_eq!(w.weights[0], 1.0, max_relative = 1e-11);
        assert_relative_eq!(w.weights[1], 1.0, max_relative = 1e-11);
    }

    #[test]
    fn entropy_values() {
        assert_relative_eq!(topological_entropy(&single_z2()).unwrap(), 2.0_f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(topological_entropy(&degrees_2_3()).unwrap(), 5.0_f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(
            topological_entropy(&two_vertex()).unwrap(),
            0.5 * 6.0_f64.ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn stationary_distributions() {
        let sys = single_z2();
        let w = canonical_weights(&sys, 1.0).unwrap();
        let c = vertex_stationary(&sys, &w).unwrap();
        assert_relative_eq!(c.c[0], 1.0);

        let sys = two_vertex();
        let w = canonical_weights(&sys, 1.0).unwrap();
        let c = vertex_stationary(&sys, &w).unwrap();
        assert_relative_eq!(c.c[0], 0.5, max_relative = 1e-11);
        assert_relative_eq!(c.c[1], 0.5, max_relative = 1e-11);
    }

    #[test]
    fn stationary_three_cycle_is_uniform() {
        let sys = GdmsSystem::parse_str(
            &serde_json::json!({
                "vertices": ["1", "2", "3"],
                "edges": [
                    { "id": "a", "from": "1", "to": "2", "maps": [z_pow(2)] },
                    { "id": "b", "from": "2", "to": "3", "maps": [z_pow(2)] },
                    { "id": "c", "from": "3", "to": "1", "maps": [z_pow(2)] }
                ]
            })
            .to_string(),
        )
        .unwrap();
        let w = canonical_weights(&sys, 1.0).unwrap();
        let c = vertex_stationary(&sys, &w).unwrap();
        for x in &c.c {
            assert_relative_eq!(*x, 1.0 / 3.0, max_relative = 1e-11);
        }
    }

    #[test]
    fn identity_residual_single_vertex_t1() {
        // By hand: h = -0.4 ln 0.4 - 0.6 ln 0.6 + 0.4 ln 2 + 0.6 ln 3 = ln 5.
        let sys = degrees_2_3();
        let w = canonical_weights(&sys, 1.0).unwrap();
        let a = [w.weights[0], w.weights[1]];
        let h = -a[0] * a[0].ln() - a[1] * a[1].ln()
            + a[0] * 2.0_f64.ln()
            + a[1] * 3.0_f64.ln();
        assert_relative_eq!(h, 5.0_f64.ln(), max_relative = 1e-12);
        assert!(entropy_identity_residual(&sys, 1.0).unwrap() <= 1e-10);
    }

    #[test]
    fn identity_residual_is_exactly_zero_for_single_generator() {
        let sys = single_z2();
        for t in [0.0, 0.5, 1.0, 2.0, -1.0] {
            assert!(entropy_identity_residual(&sys, t).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn identity_residual_two_vertex_t1() {
        assert!(entropy_identity_residual(&two_vertex(), 1.0).unwrap() <= 1e-10);
    }
}
