//! Dense asset × date matrix with `NaN` as the missing-cell sentinel.
//!
//! Every panel-shaped quantity in the crate (prices, returns, signals) is a
//! [`Grid`]. A cell is *present* when it holds a finite value; anything else
//! (`NaN`, `±inf`) is treated as missing, so operators that produce a
//! non-finite number implicitly emit "no value".

use serde::{Deserialize, Serialize};

/// Row-major grid indexed by `(asset, date)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    n_assets: usize,
    n_dates: usize,
    data: Vec<f64>,
}

impl Grid {
    /// All-missing grid.
    pub fn missing(n_assets: usize, n_dates: usize) -> Self {
        Self {
            n_assets,
            n_dates,
            data: vec![f64::NAN; n_assets * n_dates],
        }
    }

    pub fn filled(n_assets: usize, n_dates: usize, value: f64) -> Self {
        Self {
            n_assets,
            n_dates,
            data: vec![value; n_assets * n_dates],
        }
    }

    /// Builds a grid from per-asset rows. Panics if rows have unequal length.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n_assets = rows.len();
        let n_dates = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_assets * n_dates);
        for row in rows {
            assert_eq!(row.len(), n_dates, "ragged grid rows");
            data.extend(row);
        }
        Self {
            n_assets,
            n_dates,
            data,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn n_dates(&self) -> usize {
        self.n_dates
    }

    #[inline]
    pub fn get(&self, asset: usize, date: usize) -> f64 {
        self.data[asset * self.n_dates + date]
    }

    /// `Some(v)` only when the cell holds a finite value.
    #[inline]
    pub fn value(&self, asset: usize, date: usize) -> Option<f64> {
        let v = self.get(asset, date);
        v.is_finite().then_some(v)
    }

    #[inline]
    pub fn is_present(&self, asset: usize, date: usize) -> bool {
        self.get(asset, date).is_finite()
    }

    #[inline]
    pub fn set(&mut self, asset: usize, date: usize, value: f64) {
        self.data[asset * self.n_dates + date] = value;
    }

    pub fn row(&self, asset: usize) -> &[f64] {
        &self.data[asset * self.n_dates..(asset + 1) * self.n_dates]
    }

    pub fn row_mut(&mut self, asset: usize) -> &mut [f64] {
        &mut self.data[asset * self.n_dates..(asset + 1) * self.n_dates]
    }

    /// Values of every asset at one date.
    pub fn column(&self, date: usize) -> Vec<f64> {
        (0..self.n_assets).map(|a| self.get(a, date)).collect()
    }

    pub fn count_present(&self) -> usize {
        self.data.iter().filter(|v| v.is_finite()).count()
    }

    /// Elementwise map; non-finite results become missing.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            n_assets: self.n_assets,
            n_dates: self.n_dates,
            data: self.data.iter().map(|&v| sanitize(f(v))).collect(),
        }
    }

    /// Elementwise combination of two equally shaped grids.
    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Grid {
        assert_eq!(
            (self.n_assets, self.n_dates),
            (other.n_assets, other.n_dates)
        );
        Grid {
            n_assets: self.n_assets,
            n_dates: self.n_dates,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| sanitize(f(a, b)))
                .collect(),
        }
    }

    /// Keeps only the listed asset rows, in the given order.
    pub fn select_assets(&self, keep: &[usize]) -> Grid {
        let mut data = Vec::with_capacity(keep.len() * self.n_dates);
        for &a in keep {
            data.extend_from_slice(self.row(a));
        }
        Grid {
            n_assets: keep.len(),
            n_dates: self.n_dates,
            data,
        }
    }

    /// Bitwise equality that treats every `NaN` as equal to every other `NaN`.
    pub fn same_cells(&self, other: &Grid) -> bool {
        self.n_assets == other.n_assets
            && self.n_dates == other.n_dates
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits())
    }
}

/// Missing cells compare equal to each other.
impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.same_cells(other)
    }
}

#[inline]
pub(crate) fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}
