//! Energy as a function of Hamming distance from a planted solution.

use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binmat::{bool_product, integer_product, BinaryMatrix, FactorPair};
use crate::energy::{bc_energy, rl_energy, PenaltyField};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeRow {
    pub distance: usize,
    pub bc_energy: u64,
    pub rl_energy: f64,
    pub sample_index: usize,
}

/// Perturbs the planted factors by `d` distinct uniformly chosen bit flips
/// (over the concatenated W and H bits) and records both energies, for
/// every requested distance and `samples` draws each. RL energies use a
/// uniform weight `lambda`.
pub fn landscape_probe(
    planted: &FactorPair,
    v: &BinaryMatrix,
    distances: &[usize],
    samples: usize,
    lambda: f64,
    seed: u64,
) -> Result<Vec<ProbeRow>> {
    if bool_product(planted) != v.clone().without_mask() {
        return Err(Error::InvalidInput(
            "probe target must equal the planted Boolean product".into(),
        ));
    }
    let total = planted.bit_count();
    if let Some(&d) = distances.iter().find(|&&d| d > total) {
        return Err(Error::InvalidInput(format!(
            "distance {d} exceeds the {total} factor bits"
        )));
    }
    let penalty = PenaltyField::uniform(v.rows(), v.cols(), lambda, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(distances.len() * samples);
    for &d in distances {
        for s in 0..samples {
            let mut f = planted.clone();
            for idx in index::sample(&mut rng, total, d) {
                f.toggle_flat(idx);
            }
            let counts = integer_product(&f);
            rows.push(ProbeRow {
                distance: d,
                bc_energy: bc_energy(v, &counts)?,
                rl_energy: rl_energy(v, &counts, &penalty)?,
                sample_index: s,
            });
        }
    }
    Ok(rows)
}

pub fn write_probe_csv<W: Write>(out: W, rows: &[ProbeRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["distance", "bc_energy", "rl_energy", "sample_index"])?;
    for r in rows {
        w.write_record([
            r.distance.to_string(),
            r.bc_energy.to_string(),
            r.rl_energy.to_string(),
            r.sample_index.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            r[o] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman inputs differ in length");
    pearson(&ranks(x), &ranks(y))
}

/// Spearman correlations of distance against (BC energy, RL energy).
pub fn probe_correlations(rows: &[ProbeRow]) -> (f64, f64) {
    let d: Vec<f64> = rows.iter().map(|r| r.distance as f64).collect();
    let bc: Vec<f64> = rows.iter().map(|r| r.bc_energy as f64).collect();
    let rl: Vec<f64> = rows.iter().map(|r| r.rl_energy).collect();
    (spearman(&d, &bc), spearman(&d, &rl))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::{generate, GeneratorConfig};

    #[test]
    fn ranks_handle_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), 0.0);
    }

    #[test]
    fn probe_basics() {
        let inst = generate(&GeneratorConfig::new(12, 12, 3, 0.3).seed(5)).unwrap();
        let rows = landscape_probe(&inst.planted, &inst.true_v, &[0, 1, 4], 40, 1.0, 1).unwrap();
        assert_eq!(rows.len(), 120);
        for r in &rows {
            if r.distance == 0 {
                assert_eq!(r.bc_energy, 0);
                assert_eq!(r.rl_energy, 0.0);
            }
            assert_eq!(r.bc_energy > 0, r.rl_energy > 0.0);
        }
        let total = inst.planted.bit_count();
        assert!(landscape_probe(&inst.planted, &inst.true_v, &[total + 1], 1, 1.0, 1).is_err());
        let mut other = inst.true_v.clone();
        other.toggle(0, 0);
        assert!(landscape_probe(&inst.planted, &other, &[0], 1, 1.0, 1).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = [ProbeRow {
            distance: 2,
            bc_energy: 3,
            rl_energy: 4.5,
            sample_index: 0,
        }];
        let mut buf = Vec::new();
        write_probe_csv(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "distance,bc_energy,rl_energy,sample_index\n2,3,4.5,0\n"
        );
    }
}
