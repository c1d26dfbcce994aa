//! Seeded probe vectors standing in for "all f, g in H".
//!
//! Any finite probe set only gives a lower bound of an operator-topology
//! quantity; the seed and composition are recorded so values can be traced.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{c64, real, CMat, CVec};

pub const DEFAULT_RANDOM_PROBES: usize = 16;

pub fn random_complex_vector<R: Rng>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(re, im)
    })
}

pub fn random_complex_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(re, im)
    })
}

/// Random Hermitian positive semidefinite matrix with spectral norm `scale`.
pub fn random_hermitian_psd<R: Rng>(rng: &mut R, n: usize, scale: f64) -> CMat {
    let x = random_complex_matrix(rng, n, n);
    let h = &x * x.adjoint();
    let norm = crate::linalg::hermitian_eigh(&h).0.last().copied().unwrap_or(1.0);
    h * real(scale / norm)
}

/// Unit probe vectors: a canonical prefix `e_0 .. e_{k-1}` followed by seeded
/// random unit vectors. Growing `random` with the same seed only appends.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    vectors: Vec<CVec>,
    seed: u64,
    canonical: usize,
    support: Option<usize>,
}

impl ProbeSet {
    pub fn new(dim: usize, canonical: usize, random: usize, seed: u64) -> Result<Self> {
        Self::build(dim, canonical, random, seed, None)
    }

    /// Default composition: up to four canonical vectors and 16 random ones.
    pub fn standard(dim: usize, seed: u64) -> Result<Self> {
        Self::new(dim, dim.min(4), DEFAULT_RANDOM_PROBES, seed)
    }

    /// Probes supported in the first `support` coordinates.
    pub fn supported(dim: usize, support: usize, random: usize, seed: u64) -> Result<Self> {
        Self::build(dim, support, random, seed, Some(support))
    }

    fn build(
        dim: usize,
        canonical: usize,
        random: usize,
        seed: u64,
        support: Option<usize>,
    ) -> Result<Self> {
        let width = support.unwrap_or(dim);
        if width > dim || canonical > width {
            return Err(Error::InvalidArgument(format!(
                "probe layout canonical={canonical}, support={width} in dimension {dim}"
            )));
        }
        if canonical + random < 4 {
            return Err(Error::InvalidArgument("a probe set needs at least 4 vectors".into()));
        }
        let mut vectors = Vec::with_capacity(canonical + random);
        for i in 0..canonical {
            let mut e = CVec::zeros(dim);
            e[i] = real(1.0);
            vectors.push(e);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..random {
            let head = random_complex_vector(&mut rng, width);
            let mut v = CVec::zeros(dim);
            v.rows_mut(0, width).copy_from(&head);
            let n = v.norm();
            vectors.push(v / real(n));
        }
        Ok(Self {
            vectors,
            seed,
            canonical,
            support,
        })
    }

    /// Probe set made of given vectors, normalized.
    pub fn from_vectors(vectors: Vec<CVec>) -> Result<Self> {
        let mut out = Vec::with_capacity(vectors.len());
        for v in vectors {
            let n = v.norm();
            if n == 0.0 {
                return Err(Error::InvalidArgument("zero probe vector".into()));
            }
            out.push(v / real(n));
        }
        Ok(Self {
            vectors: out,
            seed: 0,
            canonical: 0,
            support: None,
        })
    }

    pub fn vectors(&self) -> &[CVec] {
        &self.vectors
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn count(&self) -> usize {
        self.vectors.len()
    }

    pub fn canonical(&self) -> usize {
        self.canonical
    }

    pub fn support(&self) -> Option<usize> {
        self.support
    }

    /// Human-readable provenance recorded next to results.
    pub fn describe(&self) -> String {
        match self.support {
            Some(s) => format!(
                "{} probes supported in first {s} coords ({} canonical, seed {})",
                self.count(),
                self.canonical,
                self.seed
            ),
            None => format!(
                "{} probes ({} canonical, seed {})",
                self.count(),
                self.canonical,
                self.seed
            ),
        }
    }
}

impl std::ops::Deref for ProbeSet {
    type Target = [CVec];

    fn deref(&self) -> &[CVec] {
        &self.vectors
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probes_are_unit_and_reproducible() {
        let a = ProbeSet::standard(7, 42).unwrap();
        let b = ProbeSet::standard(7, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count(), 20);
        for v in a.vectors() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn growing_the_set_appends() {
        let small = ProbeSet::new(5, 2, 3, 1).unwrap();
        let big = ProbeSet::new(5, 2, 8, 1).unwrap();
        assert_eq!(&big.vectors()[..5], small.vectors());
    }

    #[test]
    fn supported_probes_vanish_outside_support() {
        let p = ProbeSet::supported(10, 4, 6, 3).unwrap();
        for v in p.vectors() {
            for i in 4..10 {
                assert_eq!(v[i], real(0.0));
            }
        }
    }

    #[test]
    fn too_few_probes_rejected() {
        assert!(ProbeSet::new(5, 1, 2, 0).is_err());
    }
}
