//! Row-major stacks of equal-length vectors.

use crate::{Error, Result};

/// `rows` vectors of dimension `dim`, stored contiguously row-major.
///
/// Component means (M x d) and sample points (n x d) share this layout. The
/// [`norm`](Stacked::norm) is the Euclidean norm of the whole stack, which is
/// the norm used by the convergence bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Stacked {
    dim: usize,
    data: Vec<f64>,
}

impl Stacked {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim, data: vec![0.0; rows * dim] }
    }

    /// Build from per-row slices; all rows must share one positive length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.len())
            .ok_or_else(|| Error::InvalidArgument("no rows".into()))?;
        if dim == 0 {
            return Err(Error::InvalidArgument("zero-dimensional rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row of length {} in a stack of dimension {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "flat length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(|r| r.to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Euclidean norm of the full stack.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        norm(self.row(i))
    }

    pub fn sub(&self, other: &Self) -> Result<Stacked> {
        self.check_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { dim: self.dim, data })
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Self, s: f64) -> Result<()> {
        self.check_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn row_distances(&self, other: &Self) -> Result<Vec<f64>> {
        self.check_shape(other)?;
        Ok((0..self.rows()).map(|i| dist(self.row(i), other.row(i))).collect())
    }

    /// New stack with `out[i] = self[perm[i]]`.
    pub fn permuted_rows(&self, perm: &[usize]) -> Result<Stacked> {
        if perm.len() != self.rows() {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        let mut out = Stacked::zeros(self.rows(), self.dim);
        for (i, &p) in perm.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(p));
        }
        Ok(out)
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.data.len() != other.data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows(),
                self.dim,
                other.rows(),
                other.dim
            )));
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_rows() {
        let s = Stacked::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(s.rows(), 2);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.row(1), &[3.0, 4.0]);
        assert!(Stacked::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Stacked::from_flat(3, vec![0.0; 4]).is_err());
    }

    #[test]
    fn norms_and_ops() {
        let a = Stacked::from_rows(&[vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let b = Stacked::zeros(2, 2);
        assert_eq!(a.norm(), 5.0);
        assert_eq!(a.distance(&b).unwrap(), 5.0);
        assert_eq!(a.row_distances(&b).unwrap(), vec![3.0, 4.0]);
        let mut c = b.clone();
        c.add_scaled(&a, 2.0).unwrap();
        assert_eq!(c.row(0), &[6.0, 0.0]);
    }

    #[test]
    fn permute() {
        let a = Stacked::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let p = a.permuted_rows(&[2, 0, 1]).unwrap();
        assert_eq!(p.as_slice(), &[3.0, 1.0, 2.0]);
    }
}
