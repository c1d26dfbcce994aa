//! Per-index metric tables and their CSV form.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Values of named metrics along a sequence index (n, h or epsilon).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub name: String,
    pub index_label: String,
    pub index: Vec<f64>,
    series: Vec<(String, Vec<f64>)>,
    params: Vec<(String, String)>,
}

impl ConvergenceTrace {
    pub fn new(name: &str, index_label: &str, index: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            index_label: index_label.to_string(),
            index,
            series: Vec::new(),
            params: Vec::new(),
        }
    }

    /// Add a series. Values must be nonnegative and match the index length.
    pub fn insert(&mut self, tag: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.index.len() {
            return Err(Error::DimensionMismatch(format!(
                "series {tag} has {} values for {} indices",
                values.len(),
                self.index.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("series {tag} has value {v}")));
        }
        match self.series.iter_mut().find(|(t, _)| t == tag) {
            Some(slot) => slot.1 = values,
            None => self.series.push((tag.to_string(), values)),
        }
        Ok(())
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.params.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.params.push((key.to_string(), value)),
        }
    }

    pub fn params(&self) -> &[(String, String)] {
        &self.params
    }

    pub fn get(&self, tag: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, v)| v.as_slice())
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.series.iter().map(|(t, _)| t.as_str())
    }

    pub fn series(&self) -> &[(String, Vec<f64>)] {
        &self.series
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Short SHA-256 digest of the parameters, independent of insertion order.
    pub fn params_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        let mut sorted: Vec<&(String, String)> = self.params.iter().collect();
        sorted.sort();
        for (k, v) in sorted {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize()[..8])
    }

    /// CSV with columns `index, metric_tag, value, params_hash`.
    pub fn to_csv(&self) -> String {
        let hash = self.params_hash();
        let mut out = String::from("index,metric_tag,value,params_hash\n");
        for (i, x) in self.index.iter().enumerate() {
            for (tag, values) in &self.series {
                let _ = writeln!(out, "{},{},{},{}", fmt_index(*x), tag, fmt_value(values[i]), hash);
            }
        }
        out
    }
}

pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(2 * bytes.len());
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// 17 significant digits, locale independent.
pub fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_index(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.16e}")
    }
}

/// True when the sequence never increases.
pub fn nonincreasing(values: &[f64]) -> bool {
    values.windows(2).all(|p| p[1] <= p[0])
}

pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|p| p[1] < p[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = ConvergenceTrace::new("demo", "n", vec![1.0, 4.0]);
        t.insert("A", vec![0.5, 0.25]).unwrap();
        t.insert("B", vec![0.0, 1e-20]).unwrap();
        t.param("T", 1.0);
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "index,metric_tag,value,params_hash");
        assert!(lines[1].starts_with("1,A,5.0000000000000000e-1,"));
        assert_eq!(t.params_hash().len(), 16);
    }

    #[test]
    fn rejects_negative_and_ragged() {
        let mut t = ConvergenceTrace::new("demo", "n", vec![1.0]);
        assert!(t.insert("A", vec![-1.0]).is_err());
        assert!(t.insert("A", vec![1.0, 2.0]).is_err());
        assert!(t.insert("A", vec![f64::NAN]).is_err());
    }

    #[test]
    fn hash_tracks_params() {
        let mut a = ConvergenceTrace::new("x", "n", vec![]);
        let mut b = a.clone();
        a.param("seed", 1);
        b.param("seed", 2);
        assert_ne!(a.params_hash(), b.params_hash());
    }

    #[test]
    fn hash_ignores_param_order() {
        let mut a = ConvergenceTrace::new("x", "n", vec![]);
        let mut b = a.clone();
        a.param("a", 0.0);
        a.param("b", 0);
        b.param("b", 0);
        b.param("a", 0.0);
        assert_eq!(a.params_hash(), b.params_hash());
    }
}
