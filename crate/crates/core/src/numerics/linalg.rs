use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-empty vector of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vec64(Vec<f64>);

impl Vec64 {
    pub fn new(elements: Vec<f64>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Shape("vector must have at least one element".into()));
        }
        if let Some(i) = elements.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("element {i} is {}", elements[i])));
        }
        Ok(Vec64(elements))
    }

    pub fn zeros(len: usize) -> Self {
        Vec64(vec![0.0; len.max(1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Vec64 {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vec64 {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vec64::new(v)
    }
}

impl From<Vec64> for Vec<f64> {
    fn from(v: Vec64) -> Self {
        v.0
    }
}

/// Row-major dense matrix of finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat64 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat64 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix dims must be positive, got {rows}x{cols}"
            )));
        }
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix element {i} is {}",
                data[i]
            )));
        }
        Ok(Mat64 { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat64 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat64::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// `self · v`
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(self.row_iter().map(|row| dot(row, v)).collect())
    }

    /// `selfᵀ · v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::Shape(format!(
                "cannot multiply transpose of {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (row, &w) in self.row_iter().zip(v) {
            for (o, r) in out.iter_mut().zip(row) {
                *o += w * r;
            }
        }
        Ok(out)
    }

    /// `self += alpha · other`, shapes must agree.
    pub fn add_scaled(&mut self, alpha: f64, other: &Mat64) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot add {}x{} to {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }
}

/// Inner product accumulated in four interleaved lanes (fixed order), then
/// the tail.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            lanes[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn nonzero_norm(v: &[f64]) -> Result<f64> {
    let norm = l2_norm(v);
    if norm > 0.0 && norm.is_finite() {
        Ok(norm)
    } else {
        Err(Error::Domain(format!(
            "cannot normalize a vector with norm {norm}"
        )))
    }
}

/// Returns `v / ‖v‖₂`. Zero vectors are rejected.
pub fn l2_normalize(v: &[f64]) -> Result<Vec64> {
    let norm = nonzero_norm(v)?;
    Ok(Vec64(v.iter().map(|x| x / norm).collect()))
}

/// Jacobian of `v ↦ v/‖v‖₂`: `I/‖v‖ − v·vᵀ/‖v‖³`.
pub fn normalize_jacobian(v: &[f64]) -> Result<Mat64> {
    let norm = nonzero_norm(v)?;
    let n = v.len();
    let norm3 = norm * norm * norm;
    let mut j = Mat64::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let diag = if r == c { 1.0 / norm } else { 0.0 };
            j.set(r, c, diag - v[r] * v[c] / norm3);
        }
    }
    Ok(j)
}

/// Computes `J(v)·u` without materialising the Jacobian: `(u − v̂(v̂·u))/‖v‖`.
/// The Jacobian is symmetric, so this is also `J(v)ᵀ·u`.
pub fn normalize_jacobian_apply(v: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if v.len() != u.len() {
        return Err(Error::Shape(format!(
            "jacobian of dim {} applied to dim {}",
            v.len(),
            u.len()
        )));
    }
    let norm = nonzero_norm(v)?;
    let radial = dot(v, u) / norm;
    Ok(v.iter()
        .zip(u)
        .map(|(vi, ui)| (ui - vi / norm * radial) / norm)
        .collect())
}

/// `ln Σ exp(vᵢ)` via max-subtraction. Returns `-inf` for an empty slice.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Central-difference gradient `(f(x+heᵢ) − f(x−heᵢ)) / 2h`.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Result<Vec64>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!(
                "function evaluation around coordinate {i} gave {fp} / {fm}"
            )));
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Vec64::new(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn vec64_rejects_non_finite_and_empty() {
        assert!(Vec64::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vec64::new(vec![f64::INFINITY]).is_err());
        assert!(Vec64::new(vec![]).is_err());
        assert!(Mat64::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert!(close(
            &l2_normalize(&[3.0, 4.0]).unwrap(),
            &[0.6, 0.8],
            1e-15
        ));
        assert!(close(&l2_normalize(&[0.0, 5.0]).unwrap(), &[0.0, 1.0], 0.0));
        assert!(close(&l2_normalize(&[1.0; 4]).unwrap(), &[0.5; 4], 0.0));
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn jacobian_axis_examples() {
        let j = normalize_jacobian(&[1.0, 0.0]).unwrap();
        assert_eq!(j.as_slice(), &[0.0, 0.0, 0.0, 1.0]);
        let j = normalize_jacobian(&[0.0, 2.0]).unwrap();
        assert_eq!(j.as_slice(), &[0.5, 0.0, 0.0, 0.0]);
        assert!(normalize_jacobian(&[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let v = [3.0, 4.0];
        let j = normalize_jacobian(&v).unwrap();
        for out in 0..2 {
            let fd = finite_diff_grad(|p| l2_normalize(p).unwrap()[out], &v, 1e-5).unwrap();
            for input in 0..2 {
                assert!((j.get(out, input) - fd[input]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn jacobian_apply_agrees_with_dense() {
        let v = [0.3, -1.2, 2.5, 0.7];
        let u = [1.0, 0.5, -0.25, 2.0];
        let dense = normalize_jacobian(&v).unwrap().mul_vec(&u).unwrap();
        let fast = normalize_jacobian_apply(&v, &u).unwrap();
        assert!(close(&dense, &fast, 1e-14));
    }

    #[test]
    fn log_sum_exp_examples() {
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[5.0]), 5.0);
        assert!(log_sum_exp(&[-1000.0, -1000.0]).is_finite());
    }

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-9);
        let g = finite_diff_grad(|_| 4.2, &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let g = finite_diff_grad(|x| x[0].exp(), &[0.0], 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-9);
        assert!(matches!(
            finite_diff_grad(|_| f64::NAN, &[0.0], 1e-5),
            Err(Error::NonFinite(_))
        ));
        assert!(finite_diff_grad(|x| x[0], &[0.0], 0.0).is_err());
    }

    fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim).prop_filter("nonzero", |v| l2_norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in nonzero_vec(6)) {
            let once = l2_normalize(&v).unwrap();
            let twice = l2_normalize(&once).unwrap();
            prop_assert!((l2_norm(&once) - 1.0).abs() < 1e-12);
            prop_assert!(close(&once, &twice, 1e-12));
        }

        #[test]
        fn jacobian_annihilates_radial_direction(
            dim in prop::sample::select(vec![2usize, 8, 64]),
            seed in any::<u64>(),
        ) {
            let mut rng = crate::numerics::Rng::new(seed);
            let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let j = normalize_jacobian(&v).unwrap();
            let jv = j.mul_vec(&v).unwrap();
            prop_assert!(jv.iter().all(|x| x.abs() < 1e-12));
            for r in 0..dim {
                for c in 0..dim {
                    prop_assert_eq!(j.get(r, c), j.get(c, r));
                }
            }
        }

        #[test]
        fn log_sum_exp_shift(v in prop::collection::vec(-50.0f64..50.0, 1..12), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            prop_assert!((log_sum_exp(&shifted) - (log_sum_exp(&v) + c)).abs() < 1e-12);
        }
    }
}
