//! Points on the probability simplex and vectors in its dual space.
//!
//! Everything here is finite-dimensional and dense. Dimensions are small
//! (experts or outcomes of a single game), so vectors are plain `Vec<f64>`.

use std::ops::Index;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|Σ μ − 1|` accepted by [`ProbVector::new`].
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Default clamping constant for gradient evaluations near the boundary.
pub const DEFAULT_INTERIOR_EPS: f64 = 1e-9;

/// A point on the probability simplex Δ_K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

/// An element of the dual space of Δ_K: gradients and accumulated losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DualVector(Vec<f64>);

impl ProbVector {
    /// Validates nonnegativity and unit mass.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::NotOnSimplex(format!("entry {w} is negative or non-finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NotOnSimplex(format!("entries sum to {sum}")));
        }
        Ok(Self(weights))
    }

    /// Rescales nonnegative weights to unit mass.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::NotOnSimplex(format!("entry {w} is negative or non-finite")));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::NotOnSimplex("all entries are zero".into()));
        }
        Ok(Self::from_raw(weights.into_iter().map(|w| w / sum).collect()))
    }

    /// Internal constructor for vectors that are on the simplex by construction.
    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        debug_assert!(!weights.is_empty());
        debug_assert!(weights.iter().all(|w| w.is_finite() && *w >= 0.0), "{weights:?}");
        debug_assert!(
            (weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
            "mass drift: {weights:?}"
        );
        Self(weights)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// True when every coordinate is strictly positive.
    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|w| *w > 0.0)
    }

    pub fn min_coordinate(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Convex combination `t·self + (1−t)·other`.
    pub fn mix(&self, other: &ProbVector, t: f64) -> Result<ProbVector> {
        check_dims(self.dim(), other.dim())?;
        let w = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (t * a + (1.0 - t) * b).max(0.0))
            .collect();
        ProbVector::normalized(w)
    }

    pub fn max_abs_diff(&self, other: &ProbVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbVector::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

impl Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl DualVector {
    pub fn new(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| !v.is_nan()), "NaN in dual vector");
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self(vec![c; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// False if any entry is ±∞ (the boundary-gradient sentinel).
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scale(&self, c: f64) -> DualVector {
        DualVector(self.0.iter().map(|v| c * v).collect())
    }

    pub fn shift(&self, c: f64) -> DualVector {
        DualVector(self.0.iter().map(|v| v + c).collect())
    }

    pub fn add(&self, other: &DualVector) -> Result<DualVector> {
        check_dims(self.dim(), other.dim())?;
        Ok(DualVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &DualVector) -> Result<DualVector> {
        check_dims(self.dim(), other.dim())?;
        Ok(DualVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn max_abs_diff(&self, other: &DualVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for DualVector {
    fn from(v: Vec<f64>) -> Self {
        DualVector::new(v)
    }
}

impl Index<usize> for DualVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// The uniform distribution `K⁻¹·1`.
pub fn uniform(k: usize) -> Result<ProbVector> {
    if k < 2 {
        return Err(Error::InvalidDimension(k));
    }
    Ok(ProbVector::from_raw(vec![1.0 / k as f64; k]))
}

/// The point mass δ_θ.
pub fn dirac(k: usize, theta: usize) -> Result<ProbVector> {
    if k == 0 {
        return Err(Error::InvalidDimension(k));
    }
    if theta >= k {
        return Err(Error::IndexOutOfRange { index: theta, dim: k });
    }
    let mut w = vec![0.0; k];
    w[theta] = 1.0;
    Ok(ProbVector::from_raw(w))
}

/// ⟨μ, v⟩.
pub fn inner(mu: &ProbVector, v: &DualVector) -> Result<f64> {
    check_dims(mu.dim(), v.dim())?;
    Ok(dot(mu.as_slice(), v.as_slice()))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Raises every coordinate to at least `eps` and renormalizes.
///
/// Interior points with all coordinates ≥ `eps` are returned unchanged.
pub fn clamp_interior(mu: &ProbVector, eps: f64) -> ProbVector {
    if mu.iter().all(|w| *w >= eps) {
        return mu.clone();
    }
    let clamped: Vec<f64> = mu.iter().map(|w| w.max(eps)).collect();
    let sum: f64 = clamped.iter().sum();
    ProbVector::from_raw(clamped.into_iter().map(|w| w / sum).collect())
}

/// Integer compositions of `total` into `parts` nonnegative parts, in
/// lexicographic order.
pub fn compositions(parts: usize, total: usize) -> Vec<Vec<usize>> {
    fn rec(parts: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=total {
            prefix.push(first);
            rec(parts - 1, total - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(parts, total, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

/// All lattice points `{i / resolution}` on Δ_K in lexicographic order,
/// each clamped to `interior_margin` when the margin is positive.
pub fn simplex_grid(k: usize, resolution: usize, interior_margin: f64) -> Result<Vec<ProbVector>> {
    if k < 2 {
        return Err(Error::InvalidDimension(k));
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!("grid resolution {resolution} < 2")));
    }
    if !(0.0..1.0 / k as f64).contains(&interior_margin) {
        return Err(Error::InvalidParameter(format!(
            "interior margin {interior_margin} outside [0, 1/{k})"
        )));
    }
    let r = resolution as f64;
    Ok(compositions(k, resolution)
        .into_iter()
        .map(|c| {
            let p = ProbVector::from_raw(c.into_iter().map(|i| i as f64 / r).collect());
            if interior_margin > 0.0 {
                clamp_interior(&p, interior_margin)
            } else {
                p
            }
        })
        .collect())
}

/// Lattice points `center + step·k` with `Σk = 0` and `|k_i| ≤ radius`
/// that stay on the simplex, in lexicographic order of `k`.
pub fn local_lattice(center: &ProbVector, step: f64, radius: usize) -> Vec<ProbVector> {
    let dim = center.dim();
    let r = radius as i64;
    let mut out = Vec::new();
    if dim == 1 {
        out.push(center.clone());
        return out;
    }
    let mut k = vec![-r; dim - 1];
    loop {
        let last: i64 = -k.iter().sum::<i64>();
        if last.abs() <= r {
            let mut pt = Vec::with_capacity(dim);
            let mut ok = true;
            for (i, c) in center.iter().enumerate() {
                let ki = if i + 1 < dim { k[i] } else { last };
                let x = c + step * ki as f64;
                if x < -1e-15 {
                    ok = false;
                    break;
                }
                pt.push(x.max(0.0));
            }
            if ok {
                if let Ok(p) = ProbVector::normalized(pt) {
                    out.push(p);
                }
            }
        }
        // odometer increment
        let mut i = dim - 2;
        loop {
            if k[i] < r {
                k[i] += 1;
                break;
            }
            k[i] = -r;
            if i == 0 {
                return out;
            }
            i -= 1;
        }
    }
}

/// Euclidean projection of `y` onto Δ_K (sort-based).
pub fn project_onto_simplex(y: &[f64]) -> ProbVector {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        }
    }
    ProbVector::normalized(y.iter().map(|v| (v - tau).max(0.0)).collect())
        .expect("projection has positive mass")
}

/// A draw from the flat Dirichlet distribution on Δ_K.
pub fn random_point<R: Rng + ?Sized>(rng: &mut R, k: usize) -> ProbVector {
    let w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    ProbVector::normalized(w).expect("exponential draws are positive")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: usize, k: usize) -> usize {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn uniform_and_dirac() {
        assert_eq!(uniform(2).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(uniform(4).unwrap().as_slice(), &[0.25; 4]);
        assert_eq!(uniform(1), Err(Error::InvalidDimension(1)));
        assert_eq!(dirac(3, 0).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(dirac(2, 1).unwrap().as_slice(), &[0.0, 1.0]);
        assert!(matches!(dirac(2, 5), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn inner_products() {
        let u = uniform(2).unwrap();
        assert_eq!(inner(&u, &DualVector::new(vec![2.0, 4.0])).unwrap(), 3.0);
        let d = dirac(2, 0).unwrap();
        assert_eq!(inner(&d, &DualVector::new(vec![7.0, -1.0])).unwrap(), 7.0);
        let p = ProbVector::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(inner(&p, &DualVector::zeros(2)).unwrap(), 0.0);
        assert!(inner(&p, &DualVector::zeros(3)).is_err());
    }

    #[test]
    fn inner_with_constant_vector_is_constant() {
        let mut rng = rand::thread_rng();
        for k in 2..8 {
            let mu = random_point(&mut rng, k);
            let c = rng.gen_range(-50.0..50.0);
            let got = inner(&mu, &DualVector::constant(k, c)).unwrap();
            assert!((got - c).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn grid_enumeration() {
        let g = simplex_grid(2, 2, 0.0).unwrap();
        let pts: Vec<_> = g.iter().map(|p| p.as_slice().to_vec()).collect();
        assert_eq!(pts, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
        assert_eq!(simplex_grid(2, 4, 0.0).unwrap().len(), 5);
        assert_eq!(simplex_grid(2, 1, 0.0).map(|_| ()), Err(Error::InvalidParameter("grid resolution 1 < 2".into())));
    }

    #[test]
    fn grid_count_matches_brute_force() {
        // brute force: count all integer triples summing to 10
        let mut brute = 0;
        for i in 0..=10 {
            for j in 0..=10 {
                for l in 0..=10 {
                    if i + j + l == 10 {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(brute, 66);
        assert_eq!(simplex_grid(3, 10, 0.0).unwrap().len(), brute);
        for (k, r) in [(2, 7), (3, 5), (4, 6), (5, 3)] {
            assert_eq!(simplex_grid(k, r, 0.0).unwrap().len(), binom(r + k - 1, k - 1));
        }
    }

    #[test]
    fn grid_is_deterministic_and_respects_margin() {
        let a = simplex_grid(3, 8, 0.01).unwrap();
        let b = simplex_grid(3, 8, 0.01).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.min_coordinate() >= 0.01 / 1.03);
        }
    }

    #[test]
    fn clamping() {
        let p = ProbVector::new(vec![0.0, 1.0]).unwrap();
        let c = clamp_interior(&p, 1e-6);
        assert!((c[0] - 1e-6 / (1.0 + 1e-6)).abs() < 1e-18);
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-15);

        let q = ProbVector::new(vec![0.4, 0.6]).unwrap();
        assert_eq!(clamp_interior(&q, 1e-6), q);

        let e = dirac(3, 0).unwrap();
        let c = clamp_interior(&e, 0.01);
        assert!((c[0] - 1.0 / 1.02).abs() < 1e-15);
        assert!((c[1] - 0.01 / 1.02).abs() < 1e-15);
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn local_lattice_stays_on_simplex() {
        let c = ProbVector::new(vec![0.02, 0.5, 0.48]).unwrap();
        let pts = local_lattice(&c, 0.01, 3);
        assert!(pts.contains(&c));
        for p in &pts {
            assert!(p.min_coordinate() >= 0.0);
            assert!(p.max_abs_diff(&c) <= 0.06 + 1e-12);
        }
        let c2 = ProbVector::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(local_lattice(&c2, 0.05, 4).len(), 9);
    }

    #[test]
    fn projection() {
        let p = project_onto_simplex(&[0.5, 0.5]);
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
        let p = project_onto_simplex(&[2.0, 0.0, -1.0]);
        assert_eq!(p.as_slice(), &[1.0, 0.0, 0.0]);
        let p = project_onto_simplex(&[0.6, 0.6]);
        assert!((p[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constructor_validation() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbVector::normalized(vec![0.0, 0.0]).is_err());
        let p: ProbVector = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(p[1], 0.75);
        assert!(serde_json::from_str::<ProbVector>("[0.25, 0.25]").is_err());
    }
}
