//! Dense binary matrices, AND/OR products and the plain-text matrix format.
//!
//! The text format is a header line `M N` followed by `M` lines of exactly
//! `N` characters drawn from `0`, `1` and `?` (`?` marks a missing entry).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major 0/1 matrix with an optional observation mask.
///
/// `mask[i]` is `true` when the entry is observed. Missing entries always
/// store a 0 bit so that equality is well defined.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
    mask: Option<Vec<bool>>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![0; rows * cols],
            mask: None,
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![1; rows * cols],
            mask: None,
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                bits.len()
            )));
        }
        if let Some(bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidInput(format!("non-binary value {bad}")));
        }
        Ok(Self {
            rows,
            cols,
            bits,
            mask: None,
        })
    }

    /// Builds a matrix from nested rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut bits = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            bits.extend_from_slice(r);
        }
        Self::from_bits(rows.len(), cols, bits)
    }

    /// Attaches an observation mask (`true` = observed). Bits under missing
    /// entries are cleared; a mask with nothing missing is dropped.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.bits.len() {
            return Err(Error::Dimension(format!(
                "mask has {} entries, matrix has {}",
                mask.len(),
                self.bits.len()
            )));
        }
        for (b, &m) in self.bits.iter_mut().zip(&mask) {
            if !m {
                *b = 0;
            }
        }
        self.mask = if mask.iter().all(|&m| m) { None } else { Some(mask) };
        Ok(self)
    }

    pub fn without_mask(mut self) -> Self {
        self.mask = None;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn has_missing(&self) -> bool {
        self.mask.as_ref().is_some_and(|m| m.iter().any(|&o| !o))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.bits[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, bit: bool) {
        self.bits[i * self.cols + j] = bit as u8;
    }

    pub fn toggle(&mut self, i: usize, j: usize) {
        self.bits[i * self.cols + j] ^= 1;
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.is_observed_flat(i * self.cols + j)
    }

    #[inline]
    pub fn is_observed_flat(&self, idx: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[idx])
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.bits[i * self.cols..(i + 1) * self.cols]
    }

    pub fn observed_count(&self) -> usize {
        match &self.mask {
            None => self.bits.len(),
            Some(m) => m.iter().filter(|&&o| o).count(),
        }
    }

    pub fn missing_count(&self) -> usize {
        self.bits.len() - self.observed_count()
    }

    /// Fraction of ones among observed entries; 0 for a matrix with no
    /// observed entries.
    pub fn density(&self) -> f64 {
        let observed = self.observed_count();
        if observed == 0 {
            return 0.0;
        }
        let ones = (0..self.bits.len())
            .filter(|&idx| self.is_observed_flat(idx) && self.bits[idx] == 1)
            .count();
        ones as f64 / observed as f64
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.bits[j * self.rows + i] = self.bits[i * self.cols + j];
            }
        }
        if let Some(m) = &self.mask {
            let mut tm = vec![true; m.len()];
            for i in 0..self.rows {
                for j in 0..self.cols {
                    tm[j * self.rows + i] = m[i * self.cols + j];
                }
            }
            out.mask = Some(tm);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.bits.len() + self.rows + 16);
        let _ = writeln!(s, "{} {}", self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let c = if !self.is_observed(i, j) {
                    '?'
                } else if self.get(i, j) == 1 {
                    '1'
                } else {
                    '0'
                };
                s.push(c);
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        let parse_dim = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line: 1,
                msg: format!("bad dimension {s:?}"),
            })
        };
        if dims.len() != 2 {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected \"M N\", got {header:?}"),
            });
        }
        let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);

        let mut bits = Vec::with_capacity(rows * cols);
        let mut mask = Vec::with_capacity(rows * cols);
        let mut seen = 0;
        for (n, line) in lines {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if seen == rows {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: "more rows than declared".into(),
                });
            }
            if line.len() != cols {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("expected {cols} columns, found {}", line.len()),
                });
            }
            for c in line.chars() {
                let (b, m) = match c {
                    '0' => (0, true),
                    '1' => (1, true),
                    '?' => (0, false),
                    other => {
                        return Err(Error::Parse {
                            line: n + 1,
                            msg: format!("unexpected character {other:?}"),
                        })
                    }
                };
                bits.push(b);
                mask.push(m);
            }
            seen += 1;
        }
        if seen != rows {
            return Err(Error::Parse {
                line: seen + 2,
                msg: format!("expected {rows} rows, found {seen}"),
            });
        }
        let m = Self::from_bits(rows, cols, bits)?;
        if mask.iter().all(|&o| o) {
            Ok(m)
        } else {
            m.with_mask(mask)
        }
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_text(&fs::read_to_string(path)?)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Candidate factors `W` (M×K) and `H` (K×N).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorPair {
    pub w: BinaryMatrix,
    pub h: BinaryMatrix,
}

impl FactorPair {
    pub fn new(w: BinaryMatrix, h: BinaryMatrix) -> Result<Self> {
        if w.cols() != h.rows() {
            return Err(Error::Dimension(format!(
                "W has {} columns but H has {} rows",
                w.cols(),
                h.rows()
            )));
        }
        if w.cols() < 1 {
            return Err(Error::InvalidInput("rank K must be at least 1".into()));
        }
        if w.mask().is_some() || h.mask().is_some() {
            return Err(Error::InvalidInput("factors may not carry a mask".into()));
        }
        Ok(Self { w, h })
    }

    pub fn zeros(rows: usize, rank: usize, cols: usize) -> Self {
        Self {
            w: BinaryMatrix::zeros(rows, rank),
            h: BinaryMatrix::zeros(rank, cols),
        }
    }

    pub fn rank(&self) -> usize {
        self.w.cols()
    }

    pub fn rows(&self) -> usize {
        self.w.rows()
    }

    pub fn cols(&self) -> usize {
        self.h.cols()
    }

    /// Number of bits in the concatenated (W, H) string.
    pub fn bit_count(&self) -> usize {
        self.w.len() + self.h.len()
    }

    /// Flips one bit of the concatenated (W, H) string: indices below
    /// `W.len()` address W row-major, the rest address H row-major.
    pub fn toggle_flat(&mut self, idx: usize) {
        let wl = self.w.len();
        if idx < wl {
            self.w.bits[idx] ^= 1;
        } else {
            self.h.bits[idx - wl] ^= 1;
        }
    }
}

/// Integer product counts `V̂_ij = Σ_k W_ik·H_kj`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductCounts {
    rows: usize,
    cols: usize,
    counts: Vec<u32>,
}

impl ProductCounts {
    pub fn from_counts(rows: usize, cols: usize, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} counts for a {rows}x{cols} matrix",
                counts.len()
            )));
        }
        Ok(Self { rows, cols, counts })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub(crate) fn counts_mut(&mut self) -> &mut [u32] {
        &mut self.counts
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.cols + j]
    }

    /// `logical(V̂)`: 1 wherever the count is nonzero.
    pub fn logical(&self) -> BinaryMatrix {
        BinaryMatrix {
            rows: self.rows,
            cols: self.cols,
            bits: self.counts.iter().map(|&c| (c != 0) as u8).collect(),
            mask: None,
        }
    }
}

/// `(W∘H)_ij = OR_k (W_ik AND H_kj)`.
pub fn bool_product(f: &FactorPair) -> BinaryMatrix {
    let (m, k, n) = (f.rows(), f.rank(), f.cols());
    let mut out = BinaryMatrix::zeros(m, n);
    for i in 0..m {
        let wrow = f.w.row(i);
        let orow = &mut out.bits[i * n..(i + 1) * n];
        for (kk, &wb) in wrow.iter().enumerate().take(k) {
            if wb == 1 {
                for (o, &hb) in orow.iter_mut().zip(f.h.row(kk)) {
                    *o |= hb;
                }
            }
        }
    }
    out
}

pub fn integer_product(f: &FactorPair) -> ProductCounts {
    let (m, n) = (f.rows(), f.cols());
    let mut counts = vec![0u32; m * n];
    for i in 0..m {
        let crow = &mut counts[i * n..(i + 1) * n];
        for (kk, &wb) in f.w.row(i).iter().enumerate() {
            if wb == 1 {
                for (c, &hb) in crow.iter_mut().zip(f.h.row(kk)) {
                    *c += hb as u32;
                }
            }
        }
    }
    ProductCounts {
        rows: m,
        cols: n,
        counts,
    }
}

/// Pairwise Hamming distances between the rows of a fully observed matrix.
pub fn hamming_rows(m: &BinaryMatrix) -> Result<Vec<Vec<usize>>> {
    if m.has_missing() {
        return Err(Error::InvalidInput(
            "hamming distances need a matrix without missing entries".into(),
        ));
    }
    let r = m.rows();
    let mut d = vec![vec![0usize; r]; r];
    for u in 0..r {
        for v in (u + 1)..r {
            let dist = m
                .row(u)
                .iter()
                .zip(m.row(v))
                .filter(|(a, b)| a != b)
                .count();
            d[u][v] = dist;
            d[v][u] = dist;
        }
    }
    Ok(d)
}

/// Swaps column `k1`/`k2` of W together with row `k1`/`k2` of H. The Boolean
/// product is unchanged.
pub fn swap_symmetry(f: &FactorPair, k1: usize, k2: usize) -> Result<FactorPair> {
    let k = f.rank();
    if k1 >= k || k2 >= k {
        return Err(Error::Index(format!("swap ({k1}, {k2}) with rank {k}")));
    }
    let mut out = f.clone();
    if k1 == k2 {
        return Ok(out);
    }
    for i in 0..f.rows() {
        out.w.bits.swap(i * k + k1, i * k + k2);
    }
    let n = f.cols();
    for j in 0..n {
        out.h.bits.swap(k1 * n + j, k2 * n + j);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> BinaryMatrix {
        let bits = (0..rows * cols).map(|_| rng.gen_range(0..=1)).collect();
        BinaryMatrix::from_bits(rows, cols, bits).unwrap()
    }

    fn random_pair(rng: &mut ChaCha8Rng, m: usize, k: usize, n: usize) -> FactorPair {
        FactorPair::new(random_matrix(rng, m, k), random_matrix(rng, k, n)).unwrap()
    }

    #[test]
    fn bool_product_identity_like() {
        let w = BinaryMatrix::from_rows(&[[1, 0], [0, 1]]).unwrap();
        let h = BinaryMatrix::from_rows(&[[1, 1], [0, 1]]).unwrap();
        let p = bool_product(&FactorPair::new(w, h).unwrap());
        assert_eq!(p, BinaryMatrix::from_rows(&[[1, 1], [0, 1]]).unwrap());
    }

    #[test]
    fn bool_product_zero_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = FactorPair::new(BinaryMatrix::zeros(3, 2), random_matrix(&mut rng, 2, 3)).unwrap();
        assert_eq!(bool_product(&f), BinaryMatrix::zeros(3, 3));
    }

    #[test]
    fn bool_product_matches_thresholded_integer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let f = random_pair(&mut rng, 5, 3, 5);
            let p = bool_product(&f);
            // naive triple loop
            for i in 0..5 {
                for j in 0..5 {
                    let mut s = 0;
                    for k in 0..3 {
                        s += f.w.get(i, k) as u32 * f.h.get(k, j) as u32;
                    }
                    assert_eq!(p.get(i, j), (s != 0) as u8);
                }
            }
        }
    }

    #[test]
    fn integer_product_examples() {
        let f = FactorPair::new(
            BinaryMatrix::from_rows(&[[1, 1]]).unwrap(),
            BinaryMatrix::from_rows(&[[1], [1]]).unwrap(),
        )
        .unwrap();
        assert_eq!(integer_product(&f).counts(), &[2]);
        assert!(integer_product(&FactorPair::zeros(3, 2, 4))
            .counts()
            .iter()
            .all(|&c| c == 0));
    }

    #[test]
    fn integer_product_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let f = random_pair(&mut rng, 6, 4, 6);
            let c = integer_product(&f);
            for i in 0..6 {
                for j in 0..6 {
                    let s: u32 = (0..4).map(|k| (f.w.get(i, k) & f.h.get(k, j)) as u32).sum();
                    assert_eq!(c.get(i, j), s);
                }
            }
            assert_eq!(c.logical(), bool_product(&f));
        }
    }

    #[test]
    fn hamming_examples() {
        let m = BinaryMatrix::from_rows(&[[1, 0, 1], [1, 1, 1], [1, 0, 1]]).unwrap();
        let d = hamming_rows(&m).unwrap();
        assert_eq!(d[0][1], 1);
        assert_eq!(d[0][2], 0);
        assert_eq!(d[1][1], 0);
    }

    #[test]
    fn hamming_matches_xor_popcount() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(&mut rng, 10, 8);
        let d = hamming_rows(&m).unwrap();
        let packed: Vec<u32> = (0..10)
            .map(|i| m.row(i).iter().fold(0u32, |acc, &b| (acc << 1) | b as u32))
            .collect();
        for u in 0..10 {
            for v in 0..10 {
                assert_eq!(d[u][v], (packed[u] ^ packed[v]).count_ones() as usize);
            }
        }
    }

    #[test]
    fn hamming_rejects_missing() {
        let m = BinaryMatrix::zeros(2, 2)
            .with_mask(vec![true, false, true, true])
            .unwrap();
        assert!(hamming_rows(&m).is_err());
    }

    #[test]
    fn swap_symmetry_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_pair(&mut rng, 4, 2, 4);
        assert_eq!(swap_symmetry(&f, 1, 1).unwrap(), f);
        assert_eq!(bool_product(&swap_symmetry(&f, 0, 1).unwrap()), bool_product(&f));
        assert!(swap_symmetry(&f, 0, 2).is_err());

        let g = random_pair(&mut rng, 7, 4, 6);
        for a in 0..4 {
            for b in (a + 1)..4 {
                let s = swap_symmetry(&g, a, b).unwrap();
                assert_ne!(s, g);
                assert_eq!(bool_product(&s), bool_product(&g));
            }
        }
    }

    #[test]
    fn text_format() {
        let m = BinaryMatrix::from_rows(&[[1, 0, 1], [0, 1, 1]])
            .unwrap()
            .with_mask(vec![true, true, false, true, true, true])
            .unwrap();
        let text = m.to_text();
        assert_eq!(text, "2 3\n10?\n011\n");
        assert_eq!(BinaryMatrix::parse_text(&text).unwrap(), m);
        assert!(BinaryMatrix::parse_text("2 2\n01\n").is_err());
        assert!(BinaryMatrix::parse_text("1 2\n0x\n").is_err());
        assert!(BinaryMatrix::parse_text("1 2\n011\n").is_err());
        assert!(BinaryMatrix::parse_text("").is_err());
    }

    #[test]
    fn rejects_bad_factors() {
        assert!(FactorPair::new(BinaryMatrix::zeros(2, 3), BinaryMatrix::zeros(2, 2)).is_err());
        assert!(FactorPair::new(BinaryMatrix::zeros(2, 0), BinaryMatrix::zeros(0, 2)).is_err());
        assert!(BinaryMatrix::from_bits(1, 2, vec![0, 2]).is_err());
    }
}
