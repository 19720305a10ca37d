use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Named parameter matrices, iterated in lexicographic name order.
///
/// Shapes are fixed once a name is inserted; [`ParamStore::set`] rejects a
/// replacement with a different shape.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::KeyMismatch(format!("duplicate parameter `{name}`")));
        }
        self.entries.insert(name, value);
        Ok(())
    }

    pub fn set(&mut self, name: &str, value: Matrix) -> Result<()> {
        let slot = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::KeyMismatch(format!("unknown parameter `{name}`")))?;
        if slot.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "param set",
                left: slot.shape(),
                right: value.shape(),
            });
        }
        *slot = value;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.entries.get_mut(name)
    }

    /// Like [`get`](Self::get) but an unknown name is an error.
    pub fn expect(&self, name: &str) -> Result<&Matrix> {
        self.get(name)
            .ok_or_else(|| Error::KeyMismatch(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar entries.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(Matrix::len).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Matrix::zeros(v.rows(), v.cols())))
                .collect(),
        }
    }

    /// Errors unless `other` has exactly the same names and shapes.
    pub fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        if self.entries.len() != other.entries.len()
            || self.entries.keys().zip(other.entries.keys()).any(|(a, b)| a != b)
        {
            let mine: Vec<_> = self.names().collect();
            let theirs: Vec<_> = other.names().collect();
            return Err(Error::KeyMismatch(format!("{mine:?} vs {theirs:?}")));
        }
        for ((name, a), b) in self.entries.iter().zip(other.entries.values()) {
            if a.shape() != b.shape() {
                return Err(Error::KeyMismatch(format!(
                    "`{name}` has shape {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    /// `self += s · other`, requiring identical layout.
    pub fn add_scaled(&mut self, other: &ParamStore, s: f64) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.entries.values_mut().zip(other.entries.values()) {
            a.add_scaled_assign(b, s);
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for m in self.entries.values_mut() {
            for v in m.data_mut() {
                *v *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(Matrix::is_finite)
    }

    pub fn max_abs_diff(&self, other: &ParamStore) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .entries
            .values()
            .zip(other.entries.values())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_is_sorted() {
        let mut p = ParamStore::new();
        p.insert("b", Matrix::zeros(1, 1)).unwrap();
        p.insert("a", Matrix::zeros(1, 1)).unwrap();
        assert_eq!(p.names().collect::<Vec<_>>(), vec!["a", "b"]);
    }

    #[test]
    fn duplicate_and_reshape_rejected() {
        let mut p = ParamStore::new();
        p.insert("w", Matrix::zeros(2, 2)).unwrap();
        assert!(p.insert("w", Matrix::zeros(2, 2)).is_err());
        assert!(p.set("w", Matrix::zeros(3, 2)).is_err());
        assert!(p.set("w", Matrix::filled(2, 2, 1.0)).is_ok());
    }

    #[test]
    fn compatibility_checks_names_and_shapes() {
        let mut a = ParamStore::new();
        a.insert("w", Matrix::zeros(2, 2)).unwrap();
        let mut b = ParamStore::new();
        b.insert("v", Matrix::zeros(2, 2)).unwrap();
        assert!(a.check_compatible(&b).is_err());
        let mut c = ParamStore::new();
        c.insert("w", Matrix::zeros(1, 2)).unwrap();
        assert!(a.check_compatible(&c).is_err());
        assert!(a.check_compatible(&a.zeros_like()).is_ok());
    }
}
