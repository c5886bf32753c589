//! Planted (exactly factorizable) instances with density control and
//! random missing-entry masks.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binmat::{bool_product, BinaryMatrix, FactorPair};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub rho: f64,
    pub rho_tol: f64,
    pub miss_ratio: f64,
    pub seed: u64,
    pub max_resamples: usize,
}

impl GeneratorConfig {
    pub fn new(rows: usize, cols: usize, rank: usize, rho: f64) -> Self {
        Self {
            rows,
            cols,
            rank,
            rho,
            rho_tol: 0.01,
            miss_ratio: 0.0,
            seed: 0,
            max_resamples: 100_000,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn miss_ratio(mut self, miss: f64) -> Self {
        self.miss_ratio = miss;
        self
    }

    pub fn rho_tol(mut self, tol: f64) -> Self {
        self.rho_tol = tol;
        self
    }

    pub fn max_resamples(mut self, n: usize) -> Self {
        self.max_resamples = n;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(0.0..1.0).contains(&self.miss_ratio) {
            return Err(Error::Config(format!(
                "miss ratio must lie in [0, 1), got {}",
                self.miss_ratio
            )));
        }
        if self.rho_tol < 0.0 {
            return Err(Error::Config("rho tolerance must be nonnegative".into()));
        }
        if self.rows == 0 || self.cols == 0 || self.rank == 0 {
            return Err(Error::Config("M, N and K must all be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedInstance {
    /// Target seen by the solver, with the missing mask applied.
    pub v: BinaryMatrix,
    pub planted: FactorPair,
    /// Unmasked `W∘H`, kept for evaluation.
    pub true_v: BinaryMatrix,
}

/// Entry rate `p` with `1 − (1 − p²)^K = ρ`, so that a product of
/// Bernoulli(p) factors has expected density ρ.
pub fn bernoulli_rate_for(rho: f64, rank: usize) -> f64 {
    (1.0 - (1.0 - rho).powf(1.0 / rank as f64)).sqrt()
}

fn sample_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> BinaryMatrix {
    let bits = (0..rows * cols).map(|_| rng.gen_bool(p) as u8).collect();
    BinaryMatrix::from_bits(rows, cols, bits).expect("sampled bits are binary")
}

/// Samples Bernoulli factors until the product density lands within
/// `rho ± rho_tol`, then masks `round(miss·M·N)` cells.
pub fn generate(config: &GeneratorConfig) -> Result<PlantedInstance> {
    config.validate()?;
    let GeneratorConfig {
        rows: m,
        cols: n,
        rank: k,
        rho,
        rho_tol,
        ..
    } = *config;
    let p = bernoulli_rate_for(rho, k);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.max_resamples {
        let w = sample_matrix(&mut rng, m, k, p);
        let h = sample_matrix(&mut rng, k, n, p);
        let planted = FactorPair::new(w, h)?;
        let true_v = bool_product(&planted);
        if (true_v.density() - rho).abs() <= rho_tol + 1e-12 {
            let v = apply_mask(&true_v, config.miss_ratio, rng.next_u64())?;
            return Ok(PlantedInstance { v, planted, true_v });
        }
    }
    Err(Error::Generation {
        rho,
        rows: m,
        cols: n,
        rank: k,
        attempts: config.max_resamples,
    })
}

/// Number of masked cells, rounding half up.
pub fn mask_count(miss_ratio: f64, cells: usize) -> usize {
    (miss_ratio * cells as f64 + 0.5).floor() as usize
}

/// Hides exactly `round(miss·M·N)` uniformly chosen cells.
pub fn apply_mask(v: &BinaryMatrix, miss_ratio: f64, seed: u64) -> Result<BinaryMatrix> {
    if v.mask().is_some() {
        return Err(Error::InvalidInput("matrix is already masked".into()));
    }
    if !(0.0..1.0).contains(&miss_ratio) {
        return Err(Error::Config(format!(
            "miss ratio must lie in [0, 1), got {miss_ratio}"
        )));
    }
    let hidden = mask_count(miss_ratio, v.len());
    if hidden == 0 {
        return Ok(v.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![true; v.len()];
    for idx in index::sample(&mut rng, v.len(), hidden) {
        mask[idx] = false;
    }
    v.clone().with_mask(mask)
}

/// Writes `v.txt`, `true_v.txt`, `w.txt`, `h.txt` and `meta.txt` into `dir`.
pub fn write_instance(dir: &Path, inst: &PlantedInstance, config: &GeneratorConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    inst.v.write_file(dir.join("v.txt"))?;
    inst.true_v.write_file(dir.join("true_v.txt"))?;
    inst.planted.w.write_file(dir.join("w.txt"))?;
    inst.planted.h.write_file(dir.join("h.txt"))?;
    let meta = format!(
        "M={}\nN={}\nK={}\nrho={}\nseed={}\nmiss={}\n",
        config.rows, config.cols, config.rank, config.rho, config.seed, config.miss_ratio
    );
    fs::write(dir.join("meta.txt"), meta)?;
    Ok(())
}

pub fn read_instance(dir: &Path) -> Result<PlantedInstance> {
    let v = BinaryMatrix::read_file(dir.join("v.txt"))?;
    let true_v = BinaryMatrix::read_file(dir.join("true_v.txt"))?;
    let planted = FactorPair::new(
        BinaryMatrix::read_file(dir.join("w.txt"))?,
        BinaryMatrix::read_file(dir.join("h.txt"))?,
    )?;
    Ok(PlantedInstance { v, planted, true_v })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_closed_form() {
        assert!((bernoulli_rate_for(0.25, 1) - 0.5).abs() < 1e-12);
        assert!(bernoulli_rate_for(1e-9, 4) < 1e-4);
        let p = bernoulli_rate_for(0.1, 8);
        assert!((p - 0.114384).abs() < 1e-6, "{p}");
        for (rho, k) in [(0.1, 8), (0.5, 6), (0.8, 12)] {
            let p = bernoulli_rate_for(rho, k);
            assert!((1.0 - (1.0 - p * p).powi(k as i32) - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_reproduces_density_empirically() {
        // 1,000 unconstrained draws: mean density should sit on rho
        for (rho, k) in [(0.1, 8usize), (0.8, 12)] {
            let p = bernoulli_rate_for(rho, k);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut total = 0.0;
            for _ in 0..1000 {
                let f = FactorPair::new(
                    sample_matrix(&mut rng, 30, k, p),
                    sample_matrix(&mut rng, k, 30, p),
                )
                .unwrap();
                total += bool_product(&f).density();
            }
            let mean = total / 1000.0;
            assert!((mean - rho).abs() < 0.01, "rho={rho} mean={mean}");
        }
    }

    #[test]
    fn generated_density_window() {
        let inst = generate(&GeneratorConfig::new(30, 30, 8, 0.1).seed(1)).unwrap();
        let d = inst.true_v.density();
        assert!((0.09..=0.11).contains(&d), "{d}");
        assert!(inst.v.mask().is_none());
        assert_eq!(bool_product(&inst.planted), inst.true_v);
    }

    #[test]
    fn deterministic_by_seed() {
        let c = GeneratorConfig::new(20, 20, 6, 0.5).seed(42).miss_ratio(0.1);
        assert_eq!(generate(&c).unwrap(), generate(&c).unwrap());
        assert_ne!(generate(&c).unwrap(), generate(&c.clone().seed(43)).unwrap());
    }

    #[test]
    fn mask_counts() {
        let v = BinaryMatrix::ones(30, 30);
        assert_eq!(apply_mask(&v, 0.0, 1).unwrap(), v);
        let m = apply_mask(&v, 0.1, 1).unwrap();
        assert_eq!(m.missing_count(), 90);
        assert_eq!(m, apply_mask(&v, 0.1, 1).unwrap());
        assert!(apply_mask(&v, 1.0, 1).is_err());
        assert!(apply_mask(&m, 0.1, 1).is_err());
        assert_eq!(mask_count(0.5, 5), 3);
    }

    #[test]
    fn infeasible_config_reports_failure() {
        let c = GeneratorConfig::new(4, 4, 1, 0.37).rho_tol(0.0).max_resamples(50);
        match generate(&c) {
            Err(Error::Generation { attempts, .. }) => assert_eq!(attempts, 50),
            other => panic!("expected generation failure, got {other:?}"),
        }
        assert!(generate(&GeneratorConfig::new(4, 4, 1, 1.0)).is_err());
    }

    #[test]
    fn instance_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = GeneratorConfig::new(10, 12, 3, 0.5).seed(3).miss_ratio(0.2);
        let inst = generate(&c).unwrap();
        write_instance(dir.path(), &inst, &c).unwrap();
        assert_eq!(read_instance(dir.path()).unwrap(), inst);
        let meta = fs::read_to_string(dir.path().join("meta.txt")).unwrap();
        assert!(meta.contains("K=3") && meta.contains("miss=0.2"));
    }
}
