use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::cascade::CascadeChannel;
use crate::error::{invalid, Error, Result};
use crate::probcore::JointTable;
use crate::rng::{categorical, sample_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub u: usize,
    pub s: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub seed: u64,
    pub m: usize,
    pub cascade_hash: String,
    /// Fields that only auditors may read.
    pub oracle_only: Vec<String>,
}

/// `m` i.i.d. triples `(u, s, y)`. Learners get [`Dataset::observed`]; the
/// latent `u` column is for audits only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub header: DatasetHeader,
    samples: Vec<Sample>,
}

/// The part of a dataset a learner is allowed to see: `(y, s)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observed {
    pub pairs: Vec<(usize, usize)>,
}

impl Observed {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn observed(&self) -> Observed {
        Observed { pairs: self.samples.iter().map(|r| (r.y, r.s)).collect() }
    }

    /// Latent values; auditing only.
    pub fn latent_oracle_only(&self) -> Vec<usize> {
        self.samples.iter().map(|r| r.u).collect()
    }

    pub fn samples_oracle_only(&self) -> &[Sample] {
        &self.samples
    }

    /// Header line followed by one `{"u","s","y"}` record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        writeln!(w)?;
        for r in &self.samples {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header: DatasetHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => return Err(Error::Empty),
        };
        let mut samples = Vec::with_capacity(header.m);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            samples.push(serde_json::from_str(&line)?);
        }
        if samples.len() != header.m {
            return Err(invalid(format!("header declares m={} but {} records follow", header.m, samples.len())));
        }
        Ok(Self { header, samples })
    }
}

/// Draws `m` i.i.d. samples: `(u, s)` from `source`, then `h` and `y` through
/// the cascade. Sample `i` uses its own generator seeded with `seed ^ i`.
pub fn sample_dataset(source: &JointTable, cascade: &CascadeChannel, m: usize, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return Err(invalid("dataset size m must be at least 1"));
    }
    let us = source.marginal(&["U", "S"])?;
    if us.sizes() != [cascade.u_size(), cascade.contexts()] {
        return Err(invalid("source alphabet does not match the cascade"));
    }
    let contexts = cascade.contexts();
    let samples = (0..m)
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let cell = categorical(&mut rng, us.masses());
            let (u, s) = (cell / contexts, cell % contexts);
            let h = categorical(&mut rng, cascade.cog(s).row(u));
            let y = categorical(&mut rng, cascade.art(s).row(h));
            Sample { u, s, y }
        })
        .collect();
    Ok(Dataset {
        header: DatasetHeader { seed, m, cascade_hash: cascade.hash(), oracle_only: vec!["u".into()] },
        samples,
    })
}
