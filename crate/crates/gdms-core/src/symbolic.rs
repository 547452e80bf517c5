//! Admissible word enumeration over the graph and the degree partition
//! functions, with matrix closed forms for cross-checking.

use crate::error::{Error, Result};
use crate::model::{GdmsSystem, GenId, VertexId};
use crate::numeric::KahanSum;
use crate::spectral::{degree_matrix, perron};

/// Default maximum number of words the brute-force enumeration will visit.
pub const DEFAULT_WORD_BUDGET: f64 = 1e7;

/// Exact count of words `#{xi in X^n : t(xi) = v}` reachability table:
/// `reach[k][v]` is true when some admissible word of length `k` ends at
/// `v` and can be extended to length `n` ending at `end` (when given).
fn end_reach_table(system: &GdmsSystem, n: usize, end: Option<VertexId>) -> Vec<Vec<bool>> {
    let nv = system.vertex_count();
    // can_finish[k][v]: a word suffix of length k can run from v to `end`.
    let mut can_finish = vec![vec![false; nv]; n + 1];
    match end {
        Some(e) => can_finish[0][e.0] = true,
        None => can_finish[0].iter_mut().for_each(|x| *x = true),
    }
    for k in 1..=n {
        for v in 0..nv {
            can_finish[k][v] = system
                .outgoing(VertexId(v))
                .iter()
                .any(|&g| can_finish[k - 1][system.target_of(g).0]);
        }
    }
    can_finish
}

/// Depth-first enumeration of the admissible words of length `n`,
/// optionally filtered by initial and terminal vertex, in lexicographic
/// generator order. Words are handed to the visitor as generator-id slices;
/// nothing is materialized.
pub fn for_each_word<F: FnMut(&[GenId])>(
    system: &GdmsSystem,
    n: usize,
    start: Option<VertexId>,
    end: Option<VertexId>,
    visit: &mut F,
) {
    assert!(n >= 1, "words have length >= 1");
    let can_finish = end_reach_table(system, n, end);
    let mut buf: Vec<GenId> = Vec::with_capacity(n);
    let first: Vec<GenId> = match start {
        Some(s) => system.outgoing(s).to_vec(),
        None => (0..system.generator_count() as GenId).collect(),
    };
    for g in first {
        descend_words(system, g, n, &can_finish, &mut buf, visit);
    }
}

fn descend_words<F: FnMut(&[GenId])>(
    system: &GdmsSystem,
    g: GenId,
    n: usize,
    can_finish: &[Vec<bool>],
    buf: &mut Vec<GenId>,
    visit: &mut F,
) {
    let here = system.target_of(g);
    let remaining = n - buf.len() - 1;
    if !can_finish[remaining][here.0] {
        return;
    }
    buf.push(g);
    if remaining == 0 {
        visit(buf);
    } else {
        for &next in system.outgoing(here) {
            descend_words(system, next, n, can_finish, buf, visit);
        }
    }
    buf.pop();
}

/// Iterator over admissible words; convenience wrapper around the visitor
/// for callers that want owned words.
pub fn words(
    system: &GdmsSystem,
    n: usize,
    start: Option<VertexId>,
    end: Option<VertexId>,
) -> impl Iterator<Item = Vec<GenId>> + '_ {
    // Backtracking iterator with an explicit cursor stack.
    struct WordIter<'a> {
        system: &'a GdmsSystem,
        n: usize,
        can_finish: Vec<Vec<bool>>,
        first: Vec<GenId>,
        // (candidate list, next index) per level; level 0 draws from `first`.
        cursors: Vec<usize>,
        buf: Vec<GenId>,
        done: bool,
    }
    impl WordIter<'_> {
        fn candidates(&self, level: usize) -> &[GenId] {
            if level == 0 {
                &self.first
            } else {
                self.system.outgoing(self.system.target_of(self.buf[level - 1]))
            }
        }
    }
    impl Iterator for WordIter<'_> {
        type Item = Vec<GenId>;
        fn next(&mut self) -> Option<Vec<GenId>> {
            if self.done {
                return None;
            }
            // On re-entry after yielding a full word, pop to advance.
            if self.buf.len() == self.n {
                self.buf.pop();
            }
            loop {
                let level = self.buf.len();
                let idx = self.cursors[level];
                let cands = self.candidates(level);
                if idx >= cands.len() {
                    self.cursors[level] = 0;
                    if level == 0 {
                        self.done = true;
                        return None;
                    }
                    self.buf.pop();
                    continue;
                }
                let g = cands[idx];
                self.cursors[level] += 1;
                let here = self.system.target_of(g);
                let remaining = self.n - level - 1;
                if !self.can_finish[remaining][here.0] {
                    continue;
                }
                self.buf.push(g);
                if self.buf.len() == self.n {
                    return Some(self.buf.clone());
                }
            }
        }
    }
    let first: Vec<GenId> = match start {
        Some(s) => system.outgoing(s).to_vec(),
        None => (0..system.generator_count() as GenId).collect(),
    };
    WordIter {
        system,
        n,
        can_finish: end_reach_table(system, n, end),
        first,
        cursors: vec![0; n + 1],
        buf: Vec::with_capacity(n),
        done: false,
    }
}

/// Brute-force degree partition function: the sum of `deg(g_xi)^t` over
/// every admissible word of length `n`, Kahan-compensated. Refuses word
/// counts beyond `budget` (the matrix form always exists).
pub fn partition_deg(system: &GdmsSystem, n: usize, t: f64, budget: f64) -> Result<f64> {
    let expected_words = partition_deg_matrix(system, n, 0.0);
    if expected_words > budget {
        return Err(Error::BudgetExceeded { needed: expected_words, budget });
    }
    let mut sum = KahanSum::new();
    for_each_word(system, n, None, None, &mut |word| {
        let mut deg_product = 1.0;
        for &g in word {
            deg_product *= system.degree_of(g) as f64;
        }
        sum.add(deg_product.powf(t));
    });
    Ok(sum.total())
}

/// Closed form `1^T M(t)^n 1` by repeated matrix-vector products; the
/// independent oracle for [`partition_deg`].
pub fn partition_deg_matrix(system: &GdmsSystem, n: usize, t: f64) -> f64 {
    assert!(n >= 1);
    let m = degree_matrix(system, t).entries;
    let nv = m.len();
    let mut v = vec![1.0; nv];
    for _ in 0..n {
        let mut w = vec![0.0; nv];
        for i in 0..nv {
            for j in 0..nv {
                w[i] += m[i][j] * v[j];
            }
        }
        v = w;
    }
    v.iter().sum()
}

/// Pressure estimates for the degree potential: the sequence
/// `(1/n) log(1^T M(t)^n 1)` for `n = 1..=n_max`, together with the limit
/// `log rho(M(t))`. The matrix powers are accumulated in log space so deep
/// sequences cannot overflow.
#[derive(Clone, Debug)]
pub struct PressureDeg {
    /// `rates[k]` is the estimate at `n = k + 1`.
    pub rates: Vec<f64>,
    pub limit: f64,
}

pub fn pressure_deg(system: &GdmsSystem, t: f64, n_max: usize) -> Result<PressureDeg> {
    assert!(n_max >= 2);
    if !system.is_irreducible() {
        return Err(Error::NotIrreducible);
    }
    let m = degree_matrix(system, t);
    let limit = perron(&m)?.rho.ln();
    let rates = log_partition_sequence(&m.entries, n_max)
        .into_iter()
        .enumerate()
        .map(|(k, log_z)| log_z / (k + 1) as f64)
        .collect();
    Ok(PressureDeg { rates, limit })
}

/// `log(1^T A^n 1)` for `n = 1..=n_max`, with per-step renormalization.
pub(crate) fn log_partition_sequence(a: &[Vec<f64>], n_max: usize) -> Vec<f64> {
    let nv = a.len();
    let mut v = vec![1.0; nv];
    let mut log_acc = 0.0;
    let mut out = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        let mut w = vec![0.0; nv];
        for i in 0..nv {
            for j in 0..nv {
                w[i] += a[i][j] * v[j];
            }
        }
        let s: f64 = w.iter().sum();
        log_acc += s.ln();
        for x in &mut w {
            *x /= s;
        }
        v = w;
        out.push(log_acc);
    }
    out
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
    fn free_monoid_word_count() {
        let mut count = 0;
        for_each_word(&degrees_2_3(), 2, None, None, &mut |_| count += 1);
        assert_eq!(count, 4);
    }

    #[test]
    fn two_vertex_words_alternate() {
        let sys = two_vertex();
        let got: Vec<Vec<GenId>> = words(&sys, 2, None, None).collect();
        assert_eq!(got, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn parity_obstruction_gives_empty_stream() {
        let sys = two_vertex();
        let got: Vec<Vec<GenId>> =
            words(&sys, 2, Some(VertexId(0)), Some(VertexId(1))).collect();
        assert!(got.is_empty());
    }

    #[test]
    fn iterator_agrees_with_visitor() {
        let sys = degrees_2_3();
        for n in 1..=4 {
            let mut visited = Vec::new();
            for_each_word(&sys, n, None, None, &mut |w| visited.push(w.to_vec()));
            let iterated: Vec<Vec<GenId>> = words(&sys, n, None, None).collect();
            assert_eq!(visited, iterated);
        }
    }

    #[test]
    fn partition_values() {
        assert_relative_eq!(partition_deg(&degrees_2_3(), 3, 1.0, 1e7).unwrap(), 125.0);
        let z2 = GdmsSystem::parse_str(
            &serde_json::json!({
                "vertices": ["v"],
                "edges": [{ "id": "e", "from": "v", "to": "v", "maps": [z_pow(2)] }]
            })
            .to_string(),
        )
        .unwrap();
        assert_relative_eq!(partition_deg(&z2, 5, 2.0, 1e7).unwrap(), 1024.0);
        // Two admissible words of length 2, each with composed degree 6.
        assert_relative_eq!(partition_deg(&two_vertex(), 2, 1.0, 1e7).unwrap(), 12.0);
    }

    #[test]
    fn matrix_form_matches_brute_force() {
        assert_relative_eq!(partition_deg_matrix(&degrees_2_3(), 3, 1.0), 125.0);
        assert_relative_eq!(partition_deg_matrix(&two_vertex(), 2, 1.0), 12.0);
        assert_relative_eq!(
            partition_deg_matrix(&two_vertex(), 1, 0.0),
            two_vertex().generator_count() as f64
        );
    }

    #[test]
    fn budget_excess_is_an_error() {
        let err = partition_deg(&degrees_2_3(), 10, 1.0, 100.0).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn pressure_sequences() {
        let z2 = GdmsSystem::parse_str(
            &serde_json::json!({
                "vertices": ["v"],
                "edges": [{ "id": "e", "from": "v", "to": "v", "maps": [z_pow(2)] }]
            })
            .to_string(),
        )
        .unwrap();
        let p = pressure_deg(&z2, 1.0, 10).unwrap();
        for r in &p.rates {
            assert_relative_eq!(*r, 2.0_f64.ln(), max_relative = 1e-12);
        }
        assert_relative_eq!(p.limit, 2.0_f64.ln(), max_relative = 1e-12);

        let p = pressure_deg(&degrees_2_3(), 1.0, 10).unwrap();
        for r in &p.rates {
            assert_relative_eq!(*r, 5.0_f64.ln(), max_relative = 1e-12);
        }

        // Two-vertex: 1^T M^n 1 is 2 * 6^(n/2) at even n and 5 * 6^((n-1)/2)
        // at odd n; hand-checked for n <= 4.
        let p = pressure_deg(&two_vertex(), 1.0, 4).unwrap();
        assert_relative_eq!(p.rates[0], 5.0_f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(p.rates[1], 12.0_f64.ln() / 2.0, max_relative = 1e-12);
        assert_relative_eq!(p.rates[2], 30.0_f64.ln() / 3.0, max_relative = 1e-12);
        assert_relative_eq!(p.rates[3], 72.0_f64.ln() / 4.0, max_relative = 1e-12);
        assert_relative_eq!(p.limit, 0.5 * 6.0_f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn word_count_equals_matrix_at_t_zero() {
        let sys = two_vertex();
        for n in 1..=6 {
            let mut count = 0u64;
            for_each_word(&sys, n, None, None, &mut |_| count += 1);
            assert_relative_eq!(count as f64, partition_deg_matrix(&sys, n, 0.0));
        }
    }
}
