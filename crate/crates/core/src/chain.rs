use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major `n x d` matrix of recorded positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> Chain<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * rows),
        }
    }

    pub fn from_rows<I, R>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[T]>,
    {
        let mut c = Self::new(dim);
        for r in rows {
            c.push(r.as_ref())?;
        }
        Ok(c)
    }

    /// Builds a one-column chain.
    pub fn from_column(xs: &[T]) -> Self {
        Self {
            dim: 1,
            data: xs.to_vec(),
        }
    }

    pub fn push(&mut self, row: &[T]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Chain restricted to the given columns, in order.
    pub fn select(&self, columns: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.len() * columns.len());
        for r in self.rows() {
            data.extend(columns.iter().map(|&j| r[j]));
        }
        Self {
            dim: columns.len(),
            data,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// One row per draw, columns `theta_1..theta_d`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record((1..=self.dim).map(|j| format!("theta_{j}")))?;
        for r in self.rows() {
            out.write_record(r.iter().map(|x| format!("{:.16e}", x.as_f64())))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a chain written by [`write_csv`](Self::write_csv) (header
    /// optional).
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut chain: Option<Self> = None;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut vals = Vec::with_capacity(rec.len());
            for (col, f) in rec.iter().enumerate() {
                match f.trim().parse::<f64>() {
                    Ok(x) => vals.push(T::lit(x)),
                    Err(_) if row == 0 => break,
                    Err(e) => {
                        return Err(Error::Parse {
                            path: "<chain csv>".into(),
                            row: row + 1,
                            column: col + 1,
                            message: e.to_string(),
                        })
                    }
                }
            }
            if vals.len() != rec.len() {
                continue;
            }
            chain.get_or_insert_with(|| Self::new(vals.len())).push(&vals)?;
        }
        chain.ok_or_else(|| Error::config("chain file has no numeric rows"))
    }
}
