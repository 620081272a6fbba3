use std::io::Write;

use serde::Serialize;

use crate::{Error, Result};

/// Real values sampled on the nodes `(i / n1, k / n2)` of `[0, 1]^2`,
/// stored row-major with index `i * (n2 + 1) + k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    n1: usize,
    n2: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(n1: usize, n2: usize) -> Self {
        Self { n1, n2, values: vec![0.0; (n1 + 1) * (n2 + 1)] }
    }

    /// Samples `f(x1, x2)` at every node.
    pub fn from_fn(n1: usize, n2: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity((n1 + 1) * (n2 + 1));
        for i in 0..=n1 {
            for k in 0..=n2 {
                values.push(f(i as f64 / n1 as f64, k as f64 / n2 as f64));
            }
        }
        Self { n1, n2, values }
    }

    pub fn from_values(n1: usize, n2: usize, values: Vec<f64>) -> Result<Self> {
        let expected = (n1 + 1) * (n2 + 1);
        if values.len() != expected {
            return Err(Error::InvalidGrid(format!(
                "{} values supplied for a {}x{} node grid",
                values.len(),
                n1 + 1,
                n2 + 1
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at flat index {pos}")));
        }
        Ok(Self { n1, n2, values })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, i: usize, k: usize) -> usize {
        i * (self.n2 + 1) + k
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[self.index(i, k)]
    }

    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        let idx = self.index(i, k);
        self.values[idx] = v;
    }

    pub fn coords(&self, i: usize, k: usize) -> [f64; 2] {
        [i as f64 / self.n1 as f64, k as f64 / self.n2 as f64]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.n1 == other.n1 && self.n2 == other.n2
    }

    pub fn check_shape(&self, other: &Field) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(self.n1 + 1, self.n2 + 1, other.n1 + 1, other.n2 + 1))
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Iterates `(i, k, x1, x2, value)` in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, f64, f64, f64)> + '_ {
        self.values.iter().enumerate().map(move |(idx, &v)| {
            let (i, k) = (idx / (self.n2 + 1), idx % (self.n2 + 1));
            let [x1, x2] = self.coords(i, k);
            (i, k, x1, x2, v)
        })
    }

    /// Restricts a fine field to the nodes of a coarser `(m1, m2)` grid whose
    /// nodes are a subset of this one's.
    pub fn restrict_to(&self, m1: usize, m2: usize) -> Result<Field> {
        if m1 == 0 || m2 == 0 || !self.n1.is_multiple_of(m1) || !self.n2.is_multiple_of(m2) {
            return Err(Error::InvalidGrid(format!(
                "a {m1}x{m2} grid is not a subgrid of the {}x{} grid",
                self.n1, self.n2
            )));
        }
        let (s1, s2) = (self.n1 / m1, self.n2 / m2);
        Ok(Field::from_values(
            m1,
            m2,
            (0..=m1).flat_map(|i| (0..=m2).map(move |k| (i, k))).map(|(i, k)| self.get(i * s1, k * s2)).collect(),
        )
        .expect("restriction of a finite field"))
    }

    /// CSV with header `i,k,x1,x2,value`; floats carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W, header: [&str; 5]) -> std::io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for (i, k, x1, x2, v) in self.nodes() {
            writeln!(w, "{i},{k},{},{},{}", crate::io::fmt_f64(x1), crate::io::fmt_f64(x2), crate::io::fmt_f64(v))?;
        }
        Ok(())
    }
}
