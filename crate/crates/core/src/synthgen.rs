//! Synthetic long-tail embedding datasets.
//!
//! In-distribution data is a mixture of `K` isotropic Gaussian modes. A fraction
//! `ρ` of each mode is drawn with an inflated standard deviation `τσ`, so a few
//! ID samples sit far from the bulk. OOD samples are drawn around a mode
//! center shifted by `δ` in a random direction; with `δ` between the core and
//! tail radii the far ID samples land among the anomalies.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{split_dataset, DatasetSplit, EmbeddingDataset, ID, OOD};
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTailConfig {
    pub dims: usize,
    pub modes: usize,
    pub per_mode_id: usize,
    /// Standard deviation of the mode centers around the origin.
    pub mode_spread: f64,
    pub core_sigma: f64,
    pub tail_fraction: f64,
    /// Tail standard deviation as a multiple of `core_sigma`.
    pub tail_scale: f64,
    pub ood_count: usize,
    /// Absolute shift of OOD means away from their mode center.
    pub ood_offset: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl LongTailConfig {
    /// The reference instance used by the acceptance suite and the CLI preset.
    pub fn reference() -> Self {
        Self {
            dims: 8,
            modes: 3,
            per_mode_id: 150,
            mode_spread: 0.5,
            core_sigma: 1.0,
            tail_fraction: 0.08,
            tail_scale: 6.0,
            ood_count: 150,
            ood_offset: 4.0,
            val_fraction: 0.25,
            test_fraction: 0.25,
            seed: 7,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "longtail-ref" => Some(Self::reference()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.dims == 0 || self.modes == 0 || self.per_mode_id == 0 {
            return fail("dims, modes and per_mode_id must be >= 1".into());
        }
        if self.ood_count == 0 {
            return fail("ood_count must be >= 1: validation and test need OOD samples".into());
        }
        if !(0.0..1.0).contains(&self.tail_fraction) {
            return fail(format!("tail_fraction must lie in [0,1), got {}", self.tail_fraction));
        }
        if self.tail_scale.is_nan() || self.tail_scale <= 1.0 {
            return fail(format!("tail_scale must be > 1, got {}", self.tail_scale));
        }
        for (name, v) in [
            ("core_sigma", self.core_sigma),
            ("mode_spread", self.mode_spread),
            ("ood_offset", self.ood_offset),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Unsplit generated data: rows are all ID samples (mode by mode, core rows
/// before tail rows) followed by the OOD samples.
pub fn generate_longtail_dataset(cfg: &LongTailConfig) -> Result<EmbeddingDataset> {
    cfg.validate()?;
    let mut rng = rng::derive(cfg.seed, &[rng::tag::SYNTH]);
    let d = cfg.dims;
    let spread = Normal::new(0.0, cfg.mode_spread).expect("validated");
    let centers: Vec<Vec<f64>> = (0..cfg.modes)
        .map(|_| (0..d).map(|_| spread.sample(&mut rng)).collect())
        .collect();

    let core = Normal::new(0.0, cfg.core_sigma).expect("validated");
    let tail = Normal::new(0.0, cfg.core_sigma * cfg.tail_scale).expect("validated");
    let n_tail = (cfg.per_mode_id as f64 * cfg.tail_fraction).round() as usize;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for (m, c) in centers.iter().enumerate() {
        for i in 0..cfg.per_mode_id {
            let is_tail = i >= cfg.per_mode_id - n_tail;
            let noise = if is_tail { &tail } else { &core };
            values.extend(c.iter().map(|x| x + noise.sample(&mut rng)));
            labels.push(ID);
            ids.push(format!("id-m{m}-{}-{i:04}", if is_tail { "tail" } else { "core" }));
        }
    }
    for i in 0..cfg.ood_count {
        let m = rng.random_range(0..cfg.modes);
        let mut u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        u.iter_mut().for_each(|x| *x /= norm);
        values.extend(
            centers[m]
                .iter()
                .zip(&u)
                .map(|(c, dir)| c + cfg.ood_offset * dir + core.sample(&mut rng)),
        );
        labels.push(OOD);
        ids.push(format!("ood-m{m}-{i:04}"));
    }

    // round through f32 so the in-memory dataset equals its EMB1 encoding
    let values = values.into_iter().map(|v| v as f32 as f64).collect::<Vec<_>>();
    let n = labels.len();
    EmbeddingDataset::new(RowMatrix::new(n, d, values)?, Some(labels), Some(ids))
}

pub fn generate_longtail(cfg: &LongTailConfig) -> Result<DatasetSplit> {
    let ds = generate_longtail_dataset(cfg)?;
    split_dataset(&ds, cfg.val_fraction, cfg.test_fraction, cfg.seed)
}
