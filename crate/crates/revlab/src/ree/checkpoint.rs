//! Versioned JSON checkpoint so long fixed-point runs can resume.

use super::{PosteriorTable, ReeSolution};
use crate::numerics::logit;
use crate::{Error, Real, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub u_nodes: Vec<Real>,
    pub p_logits: Vec<Real>,
    /// Posterior tables as probabilities, one per agent, indexed [iu][ip].
    pub mu_tables: Vec<Vec<Vec<Real>>>,
    pub tensor_logits: Vec<Real>,
    pub iterations: usize,
    pub residual_history: Vec<Real>,
    pub band: Real,
}

impl Checkpoint {
    pub fn from_solution(sol: &ReeSolution) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            u_nodes: sol.tables[0].u_nodes.clone(),
            p_logits: sol.tables[0].p_logits.clone(),
            mu_tables: sol
                .tables
                .iter()
                .map(|t| {
                    (0..t.u_nodes.len())
                        .map(|iu| (0..t.p_logits.len()).map(|ip| t.mu(iu, ip)).collect())
                        .collect()
                })
                .collect(),
            tensor_logits: sol.tensor.p.iter().map(|&p| logit(p)).collect(),
            iterations: sol.iterations,
            residual_history: sol.residual_history.clone(),
            band: sol.band,
        }
    }

    pub fn tables(&self) -> Vec<PosteriorTable> {
        self.mu_tables
            .iter()
            .map(|tab| PosteriorTable {
                u_nodes: self.u_nodes.clone(),
                p_logits: self.p_logits.clone(),
                logit_mu: tab
                    .iter()
                    .map(|row| row.iter().map(|&m| logit(m)).collect())
                    .collect(),
                active: vec![vec![true; self.p_logits.len()]; self.u_nodes.len()],
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let ck: Checkpoint = serde_json::from_reader(std::io::BufReader::new(f))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidInput(format!(
                "checkpoint version {} unsupported (expected {})",
                ck.version, CHECKPOINT_VERSION
            )));
        }
        Ok(ck)
    }
}
