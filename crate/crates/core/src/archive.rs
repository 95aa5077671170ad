//! Behavior descriptors, their distance functions, and the append-only
//! archive with k-nearest-neighbor novelty queries.
//!
//! The archive is frozen while a generation's perturbations are scored;
//! exactly one descriptor is appended per generation afterwards. Queries are
//! an exact linear scan, which is plenty at desk scale.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{l2_distance, squared_l2_distance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    FinalPosition,
    Trajectory,
}

impl BcKind {
    fn name(self) -> &'static str {
        match self {
            BcKind::FinalPosition => "final_position",
            BcKind::Trajectory => "trajectory",
        }
    }
}

/// Domain-dependent summary of one episode's behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorDescriptor {
    /// Final 2-D location.
    FinalPosition { position: [f64; 2] },
    /// Per-timestep state vectors, flattened; `states.len()` is a multiple of
    /// `state_dim` and at least one state is present.
    Trajectory { state_dim: usize, states: Vec<f64> },
}

impl BehaviorDescriptor {
    pub fn final_position(x: f64, y: f64) -> Self {
        BehaviorDescriptor::FinalPosition { position: [x, y] }
    }

    pub fn trajectory(state_dim: usize, states: Vec<f64>) -> Result<Self> {
        if state_dim == 0 || states.is_empty() || !states.len().is_multiple_of(state_dim) {
            return Err(Error::Config(format!(
                "trajectory of {} values is not a positive multiple of state dim {}",
                states.len(),
                state_dim
            )));
        }
        Ok(BehaviorDescriptor::Trajectory { state_dim, states })
    }

    pub fn kind(&self) -> BcKind {
        match self {
            BehaviorDescriptor::FinalPosition { .. } => BcKind::FinalPosition,
            BehaviorDescriptor::Trajectory { .. } => BcKind::Trajectory,
        }
    }

    fn step_count(&self) -> usize {
        match self {
            BehaviorDescriptor::FinalPosition { .. } => 1,
            BehaviorDescriptor::Trajectory { state_dim, states } => states.len() / state_dim,
        }
    }

    fn state(&self, t: usize) -> &[f64] {
        match self {
            BehaviorDescriptor::FinalPosition { position } => position,
            BehaviorDescriptor::Trajectory { state_dim, states } => {
                &states[t * state_dim..(t + 1) * state_dim]
            }
        }
    }
}

/// Distance between two descriptors of the same kind.
///
/// Final positions use the squared Euclidean distance. Trajectories use the
/// sum of per-timestep L2 distances, with the shorter trajectory's last state
/// repeated until lengths match; the sum is deliberately not normalized by
/// length.
pub fn bc_distance(a: &BehaviorDescriptor, b: &BehaviorDescriptor) -> Result<f64> {
    match (a, b) {
        (
            BehaviorDescriptor::FinalPosition { position: pa },
            BehaviorDescriptor::FinalPosition { position: pb },
        ) => squared_l2_distance(pa, pb),
        (
            BehaviorDescriptor::Trajectory { state_dim: da, .. },
            BehaviorDescriptor::Trajectory { state_dim: db, .. },
        ) => {
            if da != db {
                return Err(Error::DimMismatch {
                    expected: *da,
                    got: *db,
                });
            }
            let steps = a.step_count().max(b.step_count());
            let mut total = 0.0;
            for t in 0..steps {
                let sa = a.state(t.min(a.step_count() - 1));
                let sb = b.state(t.min(b.step_count() - 1));
                total += l2_distance(sa, sb)?;
            }
            Ok(total)
        }
        _ => Err(Error::KindMismatch {
            expected: a.kind().name(),
            got: b.kind().name(),
        }),
    }
}

/// Append-only, kind-homogeneous set of descriptors with a fixed kNN `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    kind: BcKind,
    k: usize,
    entries: Vec<BehaviorDescriptor>,
}

impl Archive {
    pub fn new(kind: BcKind, k: usize) -> Self {
        Archive {
            kind,
            k,
            entries: Vec::new(),
        }
    }

    pub fn kind(&self) -> BcKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BehaviorDescriptor] {
        &self.entries
    }

    /// Append one descriptor; duplicates are allowed.
    pub fn add(&mut self, bc: BehaviorDescriptor) -> Result<()> {
        if bc.kind() != self.kind {
            return Err(Error::KindMismatch {
                expected: self.kind.name(),
                got: bc.kind().name(),
            });
        }
        self.entries.push(bc);
        Ok(())
    }

    /// Mean distance to the `min(k, |A|)` nearest entries; distance ties are
    /// broken by insertion order.
    pub fn novelty(&self, bc: &BehaviorDescriptor) -> Result<f64> {
        if self.entries.is_empty() {
            return Err(Error::EmptyArchive);
        }
        let mut dists: Vec<(f64, usize)> = Vec::with_capacity(self.entries.len());
        for (i, entry) in self.entries.iter().enumerate() {
            dists.push((bc_distance(bc, entry)?, i));
        }
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = self.k.min(dists.len());
        let sum: f64 = dists[..k].iter().map(|(d, _)| d).sum();
        Ok(sum / k as f64)
    }

    /// One JSON record per line: a header with `(kind, k)` followed by the
    /// entries in insertion order.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut out =
            std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        let header = serde_json::json!({ "kind": self.kind, "k": self.k });
        writeln!(out, "{header}").map_err(|e| Error::io(path, e))?;
        for entry in &self.entries {
            let line = serde_json::to_string(entry)?;
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Config(format!("{}: empty archive file", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        #[derive(Deserialize)]
        struct Header {
            kind: BcKind,
            k: usize,
        }
        let header: Header = serde_json::from_str(&header_line)?;
        let mut archive = Archive::new(header.kind, header.k);
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            archive.add(serde_json::from_str(&line)?)?;
        }
        Ok(archive)
    }
}
