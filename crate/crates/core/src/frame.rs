//! Dense, row-major feature matrix with named columns.

use std::collections::HashSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    data: Vec<f64>,
    n_rows: usize,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let n_cols = names.len();
        let mut seen = HashSet::with_capacity(n_cols);
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{name}`")));
            }
        }
        let n_rows = if n_cols == 0 {
            if !data.is_empty() {
                return Err(Error::Schema("data given for a matrix with no columns".into()));
            }
            0
        } else {
            if !data.len().is_multiple_of(n_cols) {
                return Err(Error::Schema(format!("{} values do not fill rows of {} columns", data.len(), n_cols)));
            }
            data.len() / n_cols
        };
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value in column `{}` at row {}",
                names[pos % n_cols],
                pos / n_cols
            )));
        }
        Ok(Self { names, data, n_rows })
    }

    /// Matrix with columns but zero-length rows is represented with an explicit row count.
    pub fn empty_rows(n_rows: usize) -> Self {
        Self { names: Vec::new(), data: Vec::new(), n_rows }
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = names.len();
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::Schema(format!("row {i} has {} values, expected {n_cols}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Self::new(names, data)
    }

    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Schema("column count does not match names".into()));
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Schema("columns have different lengths".into()));
        }
        let mut data = Vec::with_capacity(n_rows * names.len());
        for i in 0..n_rows {
            data.extend(columns.iter().map(|c| c[i]));
        }
        let mut m = Self::new(names, data)?;
        m.n_rows = n_rows;
        Ok(m)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let c = self.n_cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { names: self.names.clone(), data, n_rows: idx.len() }
    }

    pub fn select_columns(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::Schema(format!("unknown feature `{n}`"))))
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(self.n_rows * idx.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Ok(Self { names: names.to_vec(), data, n_rows: self.n_rows })
    }

    /// New matrix with `values` inserted as the first column.
    pub fn prepend_column(&self, name: &str, values: &[f64]) -> Result<Self> {
        if values.len() != self.n_rows {
            return Err(Error::Schema(format!("column `{name}` has {} values for {} rows", values.len(), self.n_rows)));
        }
        if self.column_index(name).is_some() {
            return Err(Error::Schema(format!("duplicate feature name `{name}`")));
        }
        let mut names = Vec::with_capacity(self.n_cols() + 1);
        names.push(name.to_string());
        names.extend(self.names.iter().cloned());
        let mut data = Vec::with_capacity(self.n_rows * names.len());
        for (i, &v) in values.iter().enumerate() {
            data.push(v);
            data.extend_from_slice(self.row(i));
        }
        Ok(Self { names, data, n_rows: self.n_rows })
    }

    /// Column order mapping from this matrix into `schema`; every schema name must be present
    /// and no extra columns are allowed.
    pub fn alignment_to(&self, schema: &[String]) -> Result<Vec<usize>> {
        if let Some(extra) = self.names.iter().find(|n| !schema.contains(n)) {
            return Err(Error::Schema(format!("unknown feature `{extra}`")));
        }
        schema
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::Schema(format!("missing feature `{n}`"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rejects_duplicate_names_and_nan() {
        assert!(FeatureMatrix::new(names(&["a", "a"]), vec![1.0, 2.0]).is_err());
        assert!(FeatureMatrix::new(names(&["a"]), vec![f64::NAN]).is_err());
    }

    #[test]
    fn select_and_prepend() {
        let m = FeatureMatrix::from_rows(names(&["a", "b"]), &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = m.select_columns(&names(&["b"])).unwrap();
        assert_eq!(s.column(0), vec![2.0, 4.0]);
        let p = m.prepend_column("t", &[9.0, 8.0]).unwrap();
        assert_eq!(p.row(1), &[8.0, 3.0, 4.0]);
        assert_eq!(m.select_rows(&[1, 1]).column(0), vec![3.0, 3.0]);
    }

    #[test]
    fn alignment_flags_unknown_names() {
        let m = FeatureMatrix::from_rows(names(&["b", "a"]), &[vec![1.0, 2.0]]).unwrap();
        assert_eq!(m.alignment_to(&names(&["a", "b"])).unwrap(), vec![1, 0]);
        assert!(m.alignment_to(&names(&["a"])).is_err());
        assert!(m.alignment_to(&names(&["a", "b", "c"])).is_err());
    }
}
