//! Deterministic synthetic SPD datasets: exp-map perturbations around class
//! centers, either fully isotropic or with class information confined to a
//! leading block so that downstream reductions have a recoverable target
//! subspace.

use dplm::dplm::LabeledSample;
use dplm::error::{Error, Result};
use dplm::linalg::{spd_exp, spd_sqrt, SpdMatrix, SymMatrix};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    Isotropic,
    #[default]
    #[value(name = "block")]
    BlockDiscriminative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SynthConfig {
    pub classes: u32,
    pub per_class: usize,
    /// Extra held-out samples per class, written as a second dataset.
    pub test_per_class: usize,
    pub dim: usize,
    pub structure: Structure,
    /// Size of the class-informative leading block (block structure only).
    pub block_dim: usize,
    /// Scale of the tangent offsets separating class centers.
    pub separation: f64,
    /// Scale of the per-sample tangent noise (in the block, for block
    /// structure).
    pub noise: f64,
    /// Scale of the unstructured noise outside the block.
    pub background_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            per_class: 30,
            test_per_class: 0,
            dim: 10,
            structure: Structure::BlockDiscriminative,
            block_dim: 4,
            separation: 1.0,
            noise: 0.3,
            background_noise: 0.01,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.per_class == 0 {
            return Err(Error::InvalidConfig(
                "classes and per_class must be >= 1".into(),
            ));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if self.structure == Structure::BlockDiscriminative
            && !(self.block_dim >= 1 && self.block_dim <= self.dim)
        {
            return Err(Error::InvalidConfig(format!(
                "block_dim must be in [1, {}], got {}",
                self.dim, self.block_dim
            )));
        }
        if self.separation < 0.0 || self.noise < 0.0 || self.background_noise < 0.0 {
            return Err(Error::InvalidConfig("scales must be nonnegative".into()));
        }
        Ok(())
    }
}

fn random_sym(dim: usize, sigma: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    (&g + g.transpose()) * (0.5 * sigma)
}

/// Generates `(train, test)` sample sets; both draws come from one seeded
/// stream, so the whole dataset is a pure function of the config.
pub fn generate(cfg: &SynthConfig) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();

    // Shared remainder block for the block-discriminative structure.
    let rest_dim = cfg.dim.saturating_sub(cfg.block_dim);
    let shared_rest = (cfg.structure == Structure::BlockDiscriminative && rest_dim > 0)
        .then(|| spd_exp(&SymMatrix::new(random_sym(rest_dim, 0.3, &mut rng)).unwrap()));

    for label in 0..cfg.classes {
        let center = match cfg.structure {
            Structure::Isotropic => {
                spd_exp(&SymMatrix::new(random_sym(cfg.dim, cfg.separation, &mut rng)).unwrap())
            }
            Structure::BlockDiscriminative => {
                let block = spd_exp(
                    &SymMatrix::new(random_sym(cfg.block_dim, cfg.separation, &mut rng)).unwrap(),
                );
                let mut m = DMatrix::<f64>::zeros(cfg.dim, cfg.dim);
                m.view_mut((0, 0), (cfg.block_dim, cfg.block_dim))
                    .copy_from(block.matrix());
                if let Some(rest) = &shared_rest {
                    m.view_mut((cfg.block_dim, cfg.block_dim), (rest_dim, rest_dim))
                        .copy_from(rest.matrix());
                }
                SpdMatrix::new(m)?
            }
        };
        let sqrt = spd_sqrt(&center);
        let draw = |rng: &mut ChaCha8Rng| -> Result<SpdMatrix> {
            let silent = match cfg.structure {
                Structure::Isotropic => cfg.noise == 0.0,
                Structure::BlockDiscriminative => cfg.noise == 0.0 && cfg.background_noise == 0.0,
            };
            if silent {
                return Ok(center.clone());
            }
            let tangent = match cfg.structure {
                Structure::Isotropic => random_sym(cfg.dim, cfg.noise, rng),
                Structure::BlockDiscriminative => {
                    let mut t = DMatrix::<f64>::zeros(cfg.dim, cfg.dim);
                    t.view_mut((0, 0), (cfg.block_dim, cfg.block_dim))
                        .copy_from(&random_sym(cfg.block_dim, cfg.noise, rng));
                    t += random_sym(cfg.dim, cfg.background_noise, rng);
                    t
                }
            };
            let e = spd_exp(&SymMatrix::new(tangent)?);
            SpdMatrix::new(sqrt.matrix() * e.matrix() * sqrt.matrix())
        };
        for _ in 0..cfg.per_class {
            train.push(LabeledSample::new(draw(&mut rng)?, label));
        }
        for _ in 0..cfg.test_per_class {
            test.push(LabeledSample::new(draw(&mut rng)?, label));
        }
    }
    Ok((train, test))
}
