//! Shared Gaussian noise table.
//!
//! All perturbations are slices of one deterministically generated block of
//! standard-normal draws, so a perturbation travels between coordinator and
//! workers as `(offset, dim, mirror)` instead of a full vector.

use crate::error::{Error, Result};
use crate::rng::{streams, SeededRng};
use crate::tensor::ParameterVector;

/// Default block length; far larger than any desk-scale policy so overlapping
/// slices are effectively independent.
pub const DEFAULT_TABLE_LEN: usize = 25_000_000;

/// Index-addressed view of one Gaussian perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerturbationRef {
    pub offset: usize,
    pub dim: usize,
    /// Sign flag for antithetic sampling: the slice is negated when set.
    pub mirror: bool,
}

/// Immutable block of i.i.d. N(0,1) draws, a pure function of
/// `(creation_seed, len)`.
#[derive(Debug)]
pub struct NoiseTable {
    block: Vec<f64>,
    creation_seed: u64,
}

impl NoiseTable {
    pub fn new(creation_seed: u64, len: usize) -> Self {
        let mut rng = SeededRng::new(creation_seed, streams::NOISE_TABLE);
        let block = (0..len).map(|_| rng.normal()).collect();
        NoiseTable {
            block,
            creation_seed,
        }
    }

    pub fn len(&self) -> usize {
        self.block.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block.is_empty()
    }

    pub fn creation_seed(&self) -> u64 {
        self.creation_seed
    }

    /// Uniformly random valid offset for a slice of `dim` entries.
    pub fn sample_ref(&self, rng: &mut SeededRng, dim: usize) -> Result<PerturbationRef> {
        if dim > self.block.len() {
            return Err(Error::SliceTooLong {
                dim,
                table_len: self.block.len(),
            });
        }
        let offset = rng.index(self.block.len() - dim + 1);
        Ok(PerturbationRef {
            offset,
            dim,
            mirror: false,
        })
    }

    /// Antithetic pair sharing one offset.
    pub fn sample_ref_pair(
        &self,
        rng: &mut SeededRng,
        dim: usize,
    ) -> Result<(PerturbationRef, PerturbationRef)> {
        let plus = self.sample_ref(rng, dim)?;
        let minus = PerturbationRef {
            mirror: true,
            ..plus
        };
        Ok((plus, minus))
    }

    /// Signed entry `j` of the referenced slice.
    #[inline]
    pub fn entry(&self, r: &PerturbationRef, j: usize) -> f64 {
        let v = self.block[r.offset + j];
        if r.mirror {
            -v
        } else {
            v
        }
    }

    /// Unsigned underlying slice (before the mirror flag).
    pub fn raw_slice(&self, r: &PerturbationRef) -> &[f64] {
        &self.block[r.offset..r.offset + r.dim]
    }

    /// `theta + sigma * (+-slice)`; the input is untouched.
    pub fn perturb(
        &self,
        theta: &ParameterVector,
        r: &PerturbationRef,
        sigma: f64,
    ) -> Result<ParameterVector> {
        if r.dim != theta.dim() {
            return Err(Error::DimMismatch {
                expected: theta.dim(),
                got: r.dim,
            });
        }
        if r.offset + r.dim > self.block.len() {
            return Err(Error::SliceTooLong {
                dim: r.offset + r.dim,
                table_len: self.block.len(),
            });
        }
        let out: Vec<f64> = theta
            .as_slice()
            .iter()
            .enumerate()
            .map(|(j, t)| t + sigma * self.entry(r, j))
            .collect();
        ParameterVector::new(out)
    }
}
