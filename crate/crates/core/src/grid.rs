//! Periodic lattice types and the forward/backward difference stencils.
//!
//! `gradient` uses forward differences with wrap at the last index of each
//! axis; `divergence` uses backward differences with wrap at the first index,
//! so that `⟨u, div p⟩ = −⟨∇u, p⟩` holds exactly in exact arithmetic.

use crate::error::{Error, Result};

/// Real-valued scalar field on a periodic `height × width` lattice.
///
/// Row `i` (the "x" axis) has `width` samples indexed by `j` (the "y" axis).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidGrid(format!(
            "lattice must be at least 2x2, got {width}x{height}"
        )));
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(Error::InvalidGrid(format!("non-finite value at index {k}"))),
        None => Ok(()),
    }
}

fn mismatch(a: (usize, usize), b: (usize, usize)) -> Error {
    Error::DimensionMismatch {
        left_width: a.0,
        left_height: a.1,
        right_width: b.0,
        right_height: b.1,
    }
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Builds a grid from rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidGrid("ragged rows".into()));
        }
        Self::new(width, height, rows.concat())
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// `f(i, j)` evaluated at every pixel (row `i`, column `j`).
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                values.push(f(i, j));
            }
        }
        Self::new(width, height, values)
    }

    /// Skips validation; callers guarantee dims and finiteness.
    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.width + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.width)
    }

    pub fn same_dims(&self, other: &ImageGrid) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(mismatch(self.dims(), other.dims()));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `⟨a, b⟩_X = Σ a_ij b_ij`.
    pub fn inner_product(&self, other: &ImageGrid) -> Result<f64> {
        self.same_dims(other)?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid::from_raw(
            self.width,
            self.height,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Pixelwise `f(self, other)`; panics on a dimension mismatch.
    pub fn zip_map(&self, other: &ImageGrid, f: impl Fn(f64, f64) -> f64) -> ImageGrid {
        assert_eq!(self.dims(), other.dims(), "zip_map on mismatched grids");
        ImageGrid::from_raw(
            self.width,
            self.height,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// `‖self − other‖`.
    pub fn distance(&self, other: &ImageGrid) -> Result<f64> {
        self.same_dims(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Root-mean-square difference.
    pub fn rms_distance(&self, other: &ImageGrid) -> Result<f64> {
        Ok(self.distance(other)? / (self.len() as f64).sqrt())
    }

    /// Periodic shift: output `(i, j)` takes input `(i − di, j − dj)`.
    pub fn circular_shift(&self, di: isize, dj: isize) -> ImageGrid {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = vec![0.0; self.len()];
        for i in 0..h {
            let si = (i - di).rem_euclid(h);
            for j in 0..w {
                let sj = (j - dj).rem_euclid(w);
                out[(i * w + j) as usize] = self.values[(si * w + sj) as usize];
            }
        }
        ImageGrid::from_raw(self.width, self.height, out)
    }

    pub fn transpose(&self) -> ImageGrid {
        let mut out = vec![0.0; self.len()];
        for i in 0..self.height {
            for j in 0..self.width {
                out[j * self.height + i] = self.values[i * self.width + j];
            }
        }
        ImageGrid::from_raw(self.height, self.width, out)
    }
}

/// Two-channel field `p = (p1, p2)` on the same lattice as an [`ImageGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualField {
    width: usize,
    height: usize,
    p1: Vec<f64>,
    p2: Vec<f64>,
}

impl DualField {
    pub fn new(width: usize, height: usize, p1: Vec<f64>, p2: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        let n = width * height;
        if p1.len() != n || p2.len() != n {
            return Err(Error::InvalidGrid(format!(
                "expected {n} values per channel, got {} and {}",
                p1.len(),
                p2.len()
            )));
        }
        check_finite(&p1)?;
        check_finite(&p2)?;
        Ok(Self {
            width,
            height,
            p1,
            p2,
        })
    }

    pub fn from_channels(p1: ImageGrid, p2: ImageGrid) -> Result<Self> {
        p1.same_dims(&p2)?;
        Ok(Self {
            width: p1.width,
            height: p1.height,
            p1: p1.values,
            p2: p2.values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        let n = width * height;
        Ok(Self::from_raw(width, height, vec![0.0; n], vec![0.0; n]))
    }

    pub(crate) fn from_raw(width: usize, height: usize, p1: Vec<f64>, p2: Vec<f64>) -> Self {
        Self {
            width,
            height,
            p1,
            p2,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn p1(&self) -> &[f64] {
        &self.p1
    }

    pub fn p2(&self) -> &[f64] {
        &self.p2
    }

    pub(crate) fn channels_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.p1, &mut self.p2)
    }

    pub fn channel1(&self) -> ImageGrid {
        ImageGrid::from_raw(self.width, self.height, self.p1.clone())
    }

    pub fn channel2(&self) -> ImageGrid {
        ImageGrid::from_raw(self.width, self.height, self.p2.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.p1.iter().chain(&self.p2).all(|v| v.is_finite())
    }

    /// `⟨p, q⟩_Y = Σ (p1 q1 + p2 q2)`.
    pub fn inner_product(&self, other: &DualField) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(mismatch(self.dims(), other.dims()));
        }
        Ok(dot(&self.p1, &other.p1) + dot(&self.p2, &other.p2))
    }

    /// Pointwise Euclidean magnitude `√(p1² + p2²)`.
    pub fn magnitude(&self) -> ImageGrid {
        pointwise_magnitude(self)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.p1
            .iter()
            .zip(&self.p2)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    /// Multiplies both channels at each pixel by `weights`.
    pub fn scale_pointwise(&self, weights: &ImageGrid) -> DualField {
        assert_eq!(self.dims(), weights.dims());
        let w = weights.values();
        DualField::from_raw(
            self.width,
            self.height,
            self.p1.iter().zip(w).map(|(p, c)| p * c).collect(),
            self.p2.iter().zip(w).map(|(p, c)| p * c).collect(),
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward differences `(D⁺x u, D⁺y u)` with periodic wrap.
pub fn gradient(u: &ImageGrid) -> DualField {
    let (w, h) = u.dims();
    let v = u.values();
    let mut p1 = vec![0.0; v.len()];
    let mut p2 = vec![0.0; v.len()];
    for i in 0..h {
        let down = if i + 1 == h { 0 } else { i + 1 };
        for j in 0..w {
            let right = if j + 1 == w { 0 } else { j + 1 };
            let k = i * w + j;
            p1[k] = v[down * w + j] - v[k];
            p2[k] = v[i * w + right] - v[k];
        }
    }
    DualField::from_raw(w, h, p1, p2)
}

/// `div p = D⁻x p1 + D⁻y p2` with periodic wrap; the negative adjoint of [`gradient`].
pub fn divergence(p: &DualField) -> ImageGrid {
    let (w, h) = p.dims();
    let (p1, p2) = (p.p1(), p.p2());
    let mut out = vec![0.0; w * h];
    for i in 0..h {
        let up = if i == 0 { h - 1 } else { i - 1 };
        for j in 0..w {
            let left = if j == 0 { w - 1 } else { j - 1 };
            let k = i * w + j;
            out[k] = (p1[k] - p1[up * w + j]) + (p2[k] - p2[i * w + left]);
        }
    }
    ImageGrid::from_raw(w, h, out)
}

pub fn pointwise_magnitude(p: &DualField) -> ImageGrid {
    ImageGrid::from_raw(
        p.width,
        p.height,
        p.p1.iter()
            .zip(&p.p2)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .collect(),
    )
}

/// Periodic five-point Laplacian `div ∇u`.
pub fn laplacian(u: &ImageGrid) -> ImageGrid {
    divergence(&gradient(u))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_rejects_bad_input() {
        assert!(ImageGrid::new(1, 4, vec![0.0; 4]).is_err());
        assert!(ImageGrid::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ImageGrid::new(2, 2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(ImageGrid::new(2, 2, vec![0.0, f64::INFINITY, 0.0, 0.0]).is_err());
        assert!(DualField::new(2, 2, vec![0.0; 4], vec![0.0; 3]).is_err());
    }

    #[test]
    fn inner_product_x() {
        let ones = ImageGrid::filled(2, 2, 1.0).unwrap();
        assert_eq!(ones.inner_product(&ones).unwrap(), 4.0);
        let zero = ImageGrid::zeros(2, 2).unwrap();
        assert_eq!(zero.inner_product(&ones).unwrap(), 0.0);
        let a = ImageGrid::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = ImageGrid::from_rows(&[vec![4.0, 3.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(a.inner_product(&b).unwrap(), 20.0);
        assert_eq!(b.inner_product(&a).unwrap(), 20.0);
        let c = ImageGrid::zeros(3, 2).unwrap();
        assert!(matches!(
            a.inner_product(&c),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn inner_product_y() {
        let p = DualField::new(2, 2, vec![1.0; 4], vec![1.0; 4]).unwrap();
        assert_eq!(p.inner_product(&p).unwrap(), 8.0);
        let z = DualField::zeros(2, 2).unwrap();
        assert_eq!(p.inner_product(&z).unwrap(), 0.0);
        let p = DualField::new(2, 2, vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]).unwrap();
        let q = DualField::new(2, 2, vec![3.0, 0.0, 0.0, 0.0], vec![0.0; 4]).unwrap();
        assert_eq!(p.inner_product(&q).unwrap(), 3.0);
        let r = DualField::zeros(3, 3).unwrap();
        assert!(p.inner_product(&r).is_err());
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let u = ImageGrid::filled(5, 3, 7.25).unwrap();
        let g = gradient(&u);
        assert!(g.p1().iter().chain(g.p2()).all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_row_ramp_wraps() {
        // u(i, j) = i for i = 1..4
        let u = ImageGrid::from_fn(4, 4, |i, _| (i + 1) as f64).unwrap();
        let g = gradient(&u);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == 3 { -3.0 } else { 1.0 };
                assert_eq!(g.p1()[i * 4 + j], expect);
                assert_eq!(g.p2()[i * 4 + j], 0.0);
            }
        }
    }

    #[test]
    fn gradient_two_by_two() {
        let u = ImageGrid::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        let g = gradient(&u);
        assert_eq!(g.p1(), &[2.0, 2.0, -2.0, -2.0]);
        assert_eq!(g.p2(), &[1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn divergence_of_zero_and_constant() {
        let z = DualField::zeros(3, 4).unwrap();
        assert!(divergence(&z).values().iter().all(|&v| v == 0.0));
        let c = DualField::new(3, 4, vec![1.5; 12], vec![-0.25; 12]).unwrap();
        assert!(divergence(&c).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn magnitude_examples() {
        let p = DualField::new(2, 2, vec![3.0; 4], vec![4.0; 4]).unwrap();
        assert!(pointwise_magnitude(&p).values().iter().all(|&v| v == 5.0));
        let z = DualField::zeros(2, 2).unwrap();
        assert!(z.magnitude().values().iter().all(|&v| v == 0.0));
        let d = DualField::new(2, 2, vec![1.0; 4], vec![1.0; 4]).unwrap();
        for &v in d.magnitude().values() {
            assert!((v - std::f64::consts::SQRT_2).abs() < 1e-8);
        }
    }

    #[test]
    fn shift_and_transpose() {
        let u = ImageGrid::from_fn(3, 2, |i, j| (10 * i + j) as f64).unwrap();
        let s = u.circular_shift(1, 1);
        assert_eq!(s.get(0, 0), u.get(1, 2));
        assert_eq!(s.get(1, 1), u.get(0, 0));
        let t = u.transpose();
        assert_eq!(t.dims(), (2, 3));
        assert_eq!(t.get(2, 1), u.get(1, 2));
        assert_eq!(t.transpose(), u);
    }
}
