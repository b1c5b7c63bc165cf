use crate::error::{Error, Result};
use crate::pipeline::{Alphabet, FiniteDistribution};

/// Row sums of a channel must be within this distance of 1.
pub const ROW_TOLERANCE: f64 = 1e-12;

/// Conditional distribution `p(x^|x)` as a row-stochastic matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    rows: Alphabet,
    cols: Alphabet,
    values: Vec<f64>,
}

impl Channel {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        let rows = Alphabet::new(rows)?;
        let cols = Alphabet::new(cols)?;
        if values.len() != rows.size() * cols.size() {
            return Err(Error::invalid(format!(
                "{} values for a {}x{} channel",
                values.len(),
                rows.size(),
                cols.size()
            )));
        }
        if let Some(i) = values
            .iter()
            .position(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::invalid(format!(
                "channel entry ({}, {}) = {} is outside [0, 1]",
                i / cols.size(),
                i % cols.size(),
                values[i]
            )));
        }
        for (x, row) in values.chunks(cols.size()).enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::invalid(format!("channel row {x} sums to {total}")));
            }
        }
        Ok(Channel { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("ragged channel matrix"));
        }
        Self::new(rows.len(), m, rows.concat())
    }

    pub fn identity(size: usize) -> Result<Self> {
        let values = (0..size * size)
            .map(|i| if i / size == i % size { 1.0 } else { 0.0 })
            .collect();
        Self::new(size, size, values)
    }

    pub fn uniform(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![1.0 / cols as f64; rows * cols])
    }

    /// Every row a point mass on `col`.
    pub fn constant(rows: usize, cols: usize, col: usize) -> Result<Self> {
        if col >= cols {
            return Err(Error::invalid(format!(
                "column {col} outside {cols} columns"
            )));
        }
        let mut values = vec![0.0; rows * cols];
        for r in 0..rows {
            values[r * cols + col] = 1.0;
        }
        Self::new(rows, cols, values)
    }

    /// Builds a channel from rows that are already normalized by
    /// construction inside the solver.
    pub(crate) fn from_normalized(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Channel {
            rows: Alphabet(rows),
            cols: Alphabet(cols),
            values,
        }
    }

    pub fn rows(&self) -> Alphabet {
        self.rows
    }

    pub fn cols(&self) -> Alphabet {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols.size() + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        let m = self.cols.size();
        &self.values[row * m..(row + 1) * m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks(self.cols.size())
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Output distribution `q(x^) = sum_x p(x) p(x^|x)`.
    pub fn output_marginal(&self, source: &FiniteDistribution) -> Result<Vec<f64>> {
        if source.alphabet() != self.rows {
            return Err(Error::mismatch(
                "output_marginal",
                self.rows.size(),
                source.len(),
            ));
        }
        let mut q = vec![0.0; self.cols.size()];
        for (x, &p) in source.mass().iter().enumerate() {
            for (qj, c) in q.iter_mut().zip(self.row(x)) {
                *qj += p * c;
            }
        }
        Ok(q)
    }

    /// `weight * self + (1 - weight) * other`, row by row.
    pub fn mix(&self, other: &Channel, weight: f64) -> Result<Channel> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::invalid("cannot mix channels of different shapes"));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid(format!(
                "mixing weight {weight} outside [0, 1]"
            )));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| weight * a + (1.0 - weight) * b)
            .collect();
        Ok(Channel::from_normalized(
            self.rows.size(),
            self.cols.size(),
            values,
        ))
    }
}
