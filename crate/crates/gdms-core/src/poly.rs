//! Complex polynomials and rational maps: Horner evaluation, derivatives,
//! simultaneous root finding, preimage solving, critical points.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// |den(z)| below this aborts evaluation with a pole error.
pub const TOL_POLE: f64 = 1e-12;
/// Numerator/denominator roots closer than this fail the coprimality check.
pub const TOL_COPRIME: f64 = 1e-8;
/// Roots within `1e-7 * (1 + |z|)` of each other are treated as one cluster.
pub const ROOT_CLUSTER_TOL: f64 = 1e-7;
/// Default residual tolerance for the root finder.
pub const DEFAULT_ROOT_TOL: f64 = 1e-11;
/// Default iteration cap for the root finder.
pub const MAX_ROOT_ITERS: usize = 200;

/// Complex polynomial, coefficients ascending by power, exact trailing
/// zeros trimmed. The zero polynomial is the empty coefficient list.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<Complex64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.last().is_some_and(|c| c.re == 0.0 && c.im == 0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self { coeffs: vec![Complex64::new(1.0, 0.0)] }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; 0 for constants and for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::zero();
        }
        Polynomial::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(k, c)| c * (k as f64 + 1.0))
                .collect(),
        )
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (k, c) in self.coeffs.iter().enumerate() {
            out[k] += c;
        }
        for (k, c) in other.coeffs.iter().enumerate() {
            out[k] += c;
        }
        Polynomial::new(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (k, c) in self.coeffs.iter().enumerate() {
            out[k] += c;
        }
        for (k, c) in other.coeffs.iter().enumerate() {
            out[k] -= c;
        }
        Polynomial::new(out)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.is_zero() || other.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    pub fn scale(&self, s: Complex64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Trim leading coefficients that are negligible relative to the
    /// largest one. Used on arithmetically-derived polynomials where
    /// cancellation leaves numerical dust in the top coefficients.
    pub fn trim_relative(self, rel_tol: f64) -> Polynomial {
        let max_mag = self
            .coeffs
            .iter()
            .map(|c| c.norm())
            .fold(0.0_f64, f64::max);
        if max_mag == 0.0 {
            return Polynomial::zero();
        }
        let mut coeffs = self.coeffs;
        while coeffs.last().is_some_and(|c| c.norm() <= rel_tol * max_mag) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }
}

/// Fujiwara bound: every root of the polynomial has modulus at most this.
fn fujiwara_radius(coeffs: &[Complex64]) -> f64 {
    let n = coeffs.len() - 1;
    let lead = coeffs[n].norm();
    let mut bound = 0.0_f64;
    for k in 1..=n {
        let c = coeffs[n - k].norm();
        let term = if k == n { c / (2.0 * lead) } else { c / lead };
        bound = bound.max(term.powf(1.0 / k as f64));
    }
    2.0 * bound
}

/// All roots with multiplicity via Aberth–Ehrlich simultaneous iteration.
///
/// Initial guesses sit on a circle of Fujiwara radius, angles offset by a
/// fixed irrational rotation so symmetric configurations cannot stall the
/// coupled updates. Clustered roots (within [`ROOT_CLUSTER_TOL`]) are
/// averaged and kept with multiplicity.
pub fn roots(p: &Polynomial, tol: f64) -> Result<Vec<Complex64>> {
    assert!(p.degree() >= 1, "roots() requires degree >= 1");
    let coeffs = p.coeffs();
    let n = p.degree();

    if n == 1 {
        return Ok(vec![-coeffs[0] / coeffs[1]]);
    }

    let deriv = p.derivative();
    let radius = fujiwara_radius(coeffs).max(1e-3);
    // Golden-angle increment keeps the start configuration asymmetric.
    const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;
    let mut zs: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64
                + GOLDEN_ANGLE * k as f64;
            radius * Complex64::new(theta.cos(), theta.sin())
        })
        .collect();

    let mut converged = false;
    for _ in 0..MAX_ROOT_ITERS {
        let mut max_step = 0.0_f64;
        for k in 0..n {
            let zk = zs[k];
            let pv = p.eval(zk);
            if pv.norm() == 0.0 {
                continue;
            }
            let dv = deriv.eval(zk);
            let newton = if dv.norm() < 1e-300 {
                // Derivative vanished at the current iterate; nudge off it.
                Complex64::new(1e-8 * (1.0 + zk.norm()), 0.0)
            } else {
                pv / dv
            };
            let mut coupling = Complex64::new(0.0, 0.0);
            for (j, zj) in zs.iter().enumerate() {
                if j != k {
                    let diff = zk - zj;
                    if diff.norm() > 1e-300 {
                        coupling += Complex64::new(1.0, 0.0) / diff;
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - newton * coupling;
            let step = if denom.norm() < 1e-12 { newton } else { newton / denom };
            zs[k] = zk - step;
            max_step = max_step.max(step.norm() / (1.0 + zs[k].norm()));
        }
        if max_step <= 1e-13 {
            converged = true;
            break;
        }
    }

    let max_coeff = coeffs.iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
    let mut worst_residual = 0.0_f64;
    for z in &zs {
        let scale = max_coeff * z.norm().max(1.0).powi(n as i32);
        let residual = p.eval(*z).norm() / scale.max(f64::MIN_POSITIVE);
        worst_residual = worst_residual.max(residual);
    }
    if worst_residual > tol {
        return Err(Error::RootsDidNotConverge {
            iterations: MAX_ROOT_ITERS,
            worst_residual,
        });
    }
    let _ = converged;

    let clustered = cluster_roots(&mut zs);
    let _ = clustered;
    Ok(zs)
}

/// Average root clusters in place, keeping multiplicity. Returns true when
/// any cluster of size > 1 was found. Output is sorted by (re, im).
pub fn cluster_roots(zs: &mut [Complex64]) -> bool {
    let n = zs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let tol = ROOT_CLUSTER_TOL * (1.0 + zs[i].norm());
            if (zs[i] - zs[j]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut any = false;
    let mut sums: Vec<(Complex64, usize)> = vec![(Complex64::new(0.0, 0.0), 0); n];
    for i in 0..n {
        let r = find(&mut parent, i);
        sums[r].0 += zs[i];
        sums[r].1 += 1;
    }
    for i in 0..n {
        let r = find(&mut parent, i);
        let (sum, count) = sums[r];
        if count > 1 {
            any = true;
        }
        zs[i] = sum / count as f64;
    }
    zs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    any
}

/// Preimage solving result: finite points (with multiplicity, sorted by
/// (re, im)) plus a count of preimages that escaped to infinity because the
/// numerator of `P - wQ` dropped degree.
#[derive(Clone, Debug)]
pub struct PreimageSet {
    pub points: Vec<Complex64>,
    pub missing_at_infinity: usize,
    pub clustered: bool,
}

/// Non-constant rational map `P/Q` with `deg = max(deg P, deg Q) >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalMap {
    num: Polynomial,
    den: Polynomial,
    degree: usize,
}

impl RationalMap {
    /// Build and validate: denominator nonzero, degree at least 1, and no
    /// shared root of numerator and denominator within [`TOL_COPRIME`].
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::ZeroDenominator(String::new()));
        }
        let degree = num.degree().max(den.degree());
        if degree < 1 || num.is_zero() {
            return Err(Error::DegreeZero(String::new()));
        }
        if num.degree() >= 1 && den.degree() >= 1 {
            let nr = roots(&num, DEFAULT_ROOT_TOL)?;
            let dr = roots(&den, DEFAULT_ROOT_TOL)?;
            for a in &nr {
                for b in &dr {
                    if (a - b).norm() <= TOL_COPRIME {
                        return Err(Error::NotCoprime(String::new()));
                    }
                }
            }
        }
        Ok(Self { num, den, degree })
    }

    /// Polynomial map `P / 1`.
    pub fn polynomial(num: Polynomial) -> Result<Self> {
        Self::new(num, Polynomial::one())
    }

    /// Internal constructor skipping the coprimality check; used for loop
    /// compositions where spurious common factors are filtered downstream
    /// by forward-evaluation residuals.
    pub(crate) fn new_unchecked(num: Polynomial, den: Polynomial) -> Self {
        let degree = num.degree().max(den.degree());
        Self { num, den, degree }
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_mobius(&self) -> bool {
        self.degree == 1
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let q = self.den.eval(z);
        if q.norm() < TOL_POLE {
            return Err(Error::PoleAt { z, abs_den: q.norm() });
        }
        Ok(self.num.eval(z) / q)
    }

    /// Euclidean derivative `(P'Q - PQ')(z) / Q(z)^2`.
    pub fn deriv_eval(&self, z: Complex64) -> Result<Complex64> {
        let q = self.den.eval(z);
        if q.norm() < TOL_POLE {
            return Err(Error::PoleAt { z, abs_den: q.norm() });
        }
        let p = self.num.eval(z);
        let dp = self.num.derivative().eval(z);
        let dq = self.den.derivative().eval(z);
        Ok((dp * q - p * dq) / (q * q))
    }

    /// Solutions of `g(z) = w`, i.e. roots of `P - wQ`. If that polynomial
    /// drops below `deg(g)`, the missing preimages are at infinity and are
    /// reported in the diagnostic count instead of crashing.
    pub fn preimages(&self, w: Complex64) -> Result<PreimageSet> {
        let shifted = self.num.sub(&self.den.scale(w)).trim_relative(1e-14);
        let missing = self.degree - shifted.degree().min(self.degree);
        if shifted.is_zero() || shifted.degree() == 0 {
            return Ok(PreimageSet {
                points: Vec::new(),
                missing_at_infinity: self.degree,
                clustered: false,
            });
        }
        let mut pts = roots(&shifted, DEFAULT_ROOT_TOL)?;
        let clustered = cluster_roots(&mut pts);
        Ok(PreimageSet { points: pts, missing_at_infinity: missing, clustered })
    }

    /// Finite critical points: roots of the Wronskian numerator `P'Q - PQ'`
    /// with multiplicity. Critical points at infinity are not enumerated.
    pub fn critical_points(&self) -> Result<Vec<Complex64>> {
        let w = self
            .num
            .derivative()
            .mul(&self.den)
            .sub(&self.num.mul(&self.den.derivative()))
            .trim_relative(1e-14);
        if w.is_zero() || w.degree() == 0 {
            return Ok(Vec::new());
        }
        let mut pts = roots(&w, DEFAULT_ROOT_TOL)?;
        cluster_roots(&mut pts);
        Ok(pts)
    }

    /// Composition `outer ∘ inner` as a rational map, by substituting
    /// `inner = P1/Q1` into `outer = P2/Q2` and clearing denominators.
    pub fn compose(outer: &RationalMap, inner: &RationalMap) -> RationalMap {
        let d = outer.num.degree().max(outer.den.degree());
        let mut p1_pow = Polynomial::one();
        let mut powers = Vec::with_capacity(d + 1);
        powers.push(p1_pow.clone());
        for _ in 0..d {
            p1_pow = p1_pow.mul(&inner.num);
            powers.push(p1_pow.clone());
        }
        let mut q1_pow = Polynomial::one();
        let mut q_powers = Vec::with_capacity(d + 1);
        q_powers.push(q1_pow.clone());
        for _ in 0..d {
            q1_pow = q1_pow.mul(&inner.den);
            q_powers.push(q1_pow.clone());
        }
        let substitute = |poly: &Polynomial| {
            let mut acc = Polynomial::zero();
            for (k, c) in poly.coeffs().iter().enumerate() {
                acc = acc.add(&powers[k].mul(&q_powers[d - k]).scale(*c));
            }
            acc
        };
        let num = substitute(&outer.num).trim_relative(1e-14);
        let den = substitute(&outer.den).trim_relative(1e-14);
        RationalMap::new_unchecked(num, den)
    }

    /// Matrix `[a, b; c, d]` of a Möbius map `(az+b)/(cz+d)`.
    pub fn mobius_matrix(&self) -> Option<[Complex64; 4]> {
        if !self.is_mobius() {
            return None;
        }
        let coeff = |p: &Polynomial, k: usize| {
            p.coeffs().get(k).copied().unwrap_or(Complex64::new(0.0, 0.0))
        };
        Some([
            coeff(&self.num, 1),
            coeff(&self.num, 0),
            coeff(&self.den, 1),
            coeff(&self.den, 0),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn z_squared() -> RationalMap {
        RationalMap::polynomial(Polynomial::from_real(&[0.0, 0.0, 1.0])).unwrap()
    }

    #[test]
    fn eval_square_at_three() {
        assert_relative_eq!(z_squared().eval(c(3.0, 0.0)).unwrap().re, 9.0);
    }

    #[test]
    fn eval_rational_map() {
        // (z^2 + 1) / (z - 2) at 0 -> -0.5
        let g = RationalMap::new(
            Polynomial::from_real(&[1.0, 0.0, 1.0]),
            Polynomial::from_real(&[-2.0, 1.0]),
        )
        .unwrap();
        assert_relative_eq!(g.eval(c(0.0, 0.0)).unwrap().re, -0.5);
    }

    #[test]
    fn eval_at_pole_errors() {
        let g = RationalMap::new(Polynomial::one(), Polynomial::from_real(&[0.0, 1.0])).unwrap();
        assert!(matches!(g.eval(c(0.0, 0.0)), Err(Error::PoleAt { .. })));
    }

    #[test]
    fn derivative_values() {
        assert_relative_eq!(z_squared().deriv_eval(c(3.0, 0.0)).unwrap().re, 6.0);
        let cube = RationalMap::polynomial(Polynomial::from_real(&[0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_relative_eq!(cube.deriv_eval(c(1.0, 0.0)).unwrap().re, 3.0);
        assert_relative_eq!(z_squared().deriv_eval(c(0.0, 0.0)).unwrap().norm(), 0.0);
    }

    #[test]
    fn roots_of_quadratic() {
        let p = Polynomial::from_real(&[-1.0, 0.0, 1.0]);
        let rs = roots(&p, DEFAULT_ROOT_TOL).unwrap();
        assert_eq!(rs.len(), 2);
        assert!((rs[0] - c(-1.0, 0.0)).norm() < 1e-10);
        assert!((rs[1] - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn roots_of_hand_expanded_cubic() {
        // (z-1)(z-2)(z-3) expanded by hand: z^3 - 6z^2 + 11z - 6.
        let p = Polynomial::from_real(&[-6.0, 11.0, -6.0, 1.0]);
        let rs = roots(&p, DEFAULT_ROOT_TOL).unwrap();
        assert_eq!(rs.len(), 3);
        for (root, expected) in rs.iter().zip([1.0, 2.0, 3.0]) {
            assert!((root - c(expected, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn double_root_is_clustered() {
        let p = Polynomial::from_real(&[0.0, 0.0, 1.0]);
        let rs = roots(&p, DEFAULT_ROOT_TOL).unwrap();
        assert_eq!(rs.len(), 2);
        assert!(rs[0].norm() < 1e-8);
        assert!(rs[1].norm() < 1e-8);
        assert_eq!(rs[0], rs[1]);
    }

    #[test]
    fn preimages_of_square() {
        let pre = z_squared().preimages(c(4.0, 0.0)).unwrap();
        assert_eq!(pre.points.len(), 2);
        assert_eq!(pre.missing_at_infinity, 0);
        assert!((pre.points[0] - c(-2.0, 0.0)).norm() < 1e-10);
        assert!((pre.points[1] - c(2.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn preimages_of_cube_are_roots_of_unity() {
        let cube = RationalMap::polynomial(Polynomial::from_real(&[0.0, 0.0, 0.0, 1.0])).unwrap();
        let pre = cube.preimages(c(1.0, 0.0)).unwrap();
        assert_eq!(pre.points.len(), 3);
        for z in &pre.points {
            assert!((z.norm() - 1.0).abs() < 1e-10);
            assert!((z.powi(3) - c(1.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn preimages_match_quadratic_formula_at_large_w() {
        // (z^2 + 1)/z: preimages of w solve z^2 - wz + 1 = 0. Oracle:
        // quadratic formula at w = 1000.
        let g = RationalMap::new(
            Polynomial::from_real(&[1.0, 0.0, 1.0]),
            Polynomial::from_real(&[0.0, 1.0]),
        )
        .unwrap();
        let w = 1000.0;
        let disc = (w * w - 4.0).sqrt();
        let expected_small = (w - disc) / 2.0;
        let expected_big = (w + disc) / 2.0;
        let pre = g.preimages(c(w, 0.0)).unwrap();
        assert_eq!(pre.points.len(), 2);
        assert_eq!(pre.missing_at_infinity, 0);
        assert!((pre.points[0] - c(expected_small, 0.0)).norm() < 1e-8);
        assert!((pre.points[1] - c(expected_big, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn degree_drop_reports_preimage_at_infinity() {
        // (z^2+1)/(z^2) at w = 1: z^2 + 1 - z^2 = 1, no finite preimages.
        let g = RationalMap::new(
            Polynomial::from_real(&[1.0, 0.0, 1.0]),
            Polynomial::from_real(&[0.0, 0.0, 1.0]),
        )
        .unwrap();
        let pre = g.preimages(c(1.0, 0.0)).unwrap();
        assert_eq!(pre.points.len(), 0);
        assert_eq!(pre.missing_at_infinity, 2);
    }

    #[test]
    fn critical_points_examples() {
        assert_eq!(z_squared().critical_points().unwrap().len(), 1);
        assert!(z_squared().critical_points().unwrap()[0].norm() < 1e-10);

        // z^3 - 3z: critical points at roots of 3z^2 - 3 = {-1, 1}.
        let g = RationalMap::polynomial(Polynomial::from_real(&[0.0, -3.0, 0.0, 1.0])).unwrap();
        let cps = g.critical_points().unwrap();
        assert_eq!(cps.len(), 2);
        assert!((cps[0] - c(-1.0, 0.0)).norm() < 1e-10);
        assert!((cps[1] - c(1.0, 0.0)).norm() < 1e-10);

        // Möbius (z+1)/(z-1): no finite critical points.
        let m = RationalMap::new(
            Polynomial::from_real(&[1.0, 1.0]),
            Polynomial::from_real(&[-1.0, 1.0]),
        )
        .unwrap();
        assert!(m.critical_points().unwrap().is_empty());
    }

    #[test]
    fn coprimality_is_enforced() {
        // (z-1)/(z-1) shares the root 1.
        let shared = RationalMap::new(
            Polynomial::from_real(&[-1.0, 1.0]),
            Polynomial::from_real(&[-1.0, 1.0]),
        );
        assert!(matches!(shared, Err(Error::NotCoprime(_))));
    }

    #[test]
    fn compose_squares_gives_fourth_power() {
        let g = z_squared();
        let comp = RationalMap::compose(&g, &g);
        assert_eq!(comp.degree(), 4);
        let got = comp.eval(c(1.5, 0.5)).unwrap();
        let expected = c(1.5, 0.5).powi(4);
        assert!((got - expected).norm() < 1e-10);
    }
}
