//! Mismatch-count and rectified-linear energies, per-cell penalty weights,
//! and exact single-bit-flip energy deltas.

use crate::binmat::{integer_product, BinaryMatrix, FactorPair, ProductCounts};
use crate::error::{Error, Result};

/// Which energy the chain minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostKind {
    /// `Σ |logical(V̂_ij) − V_ij|`.
    Binary,
    /// `Σ λ_ij · max(0, (1 − V_ij)·V̂_ij + V_ij·(1 − V̂_ij))`.
    Rectified,
}

/// Energy of a state under one of the two costs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnergyValue {
    Count(u64),
    Weighted(f64),
}

impl EnergyValue {
    pub fn as_f64(self) -> f64 {
        match self {
            EnergyValue::Count(c) => c as f64,
            EnergyValue::Weighted(w) => w,
        }
    }

    pub fn is_zero(self) -> bool {
        self.as_f64() == 0.0
    }
}

/// Per-cell penalty weights λ_ij with their starting value and growth rate.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyField {
    rows: usize,
    cols: usize,
    lambdas: Vec<f64>,
    lambda0: f64,
    growth: f64,
    cap: Option<f64>,
}

impl PenaltyField {
    pub fn uniform(rows: usize, cols: usize, lambda0: f64, growth: f64) -> Result<Self> {
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::Config(format!("lambda0 must be positive, got {lambda0}")));
        }
        if !(growth >= 0.0 && growth.is_finite()) {
            return Err(Error::Config(format!(
                "lambda growth rate must be nonnegative, got {growth}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            lambdas: vec![lambda0; rows * cols],
            lambda0,
            growth,
            cap: None,
        })
    }

    /// Upper bound applied by [`PenaltyField::grow`].
    pub fn with_cap(mut self, cap: Option<f64>) -> Self {
        self.cap = cap;
        self
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lambdas[i * self.cols + j]
    }

    pub fn max(&self) -> f64 {
        self.lambdas.iter().copied().fold(0.0, f64::max)
    }

    /// `λ ← λ·(1 + λ_p)`, clamped to the cap when one is set.
    pub fn grow(&mut self, idx: usize) {
        let l = &mut self.lambdas[idx];
        *l *= 1.0 + self.growth;
        if let Some(cap) = self.cap {
            if *l > cap {
                *l = cap;
            }
        }
    }

    fn check_dims(&self, rows: usize, cols: usize) -> Result<()> {
        if (self.rows, self.cols) != (rows, cols) {
            return Err(Error::Dimension(format!(
                "penalty field is {}x{}, matrix is {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

fn check_counts(v: &BinaryMatrix, counts: &ProductCounts) -> Result<()> {
    if (v.rows(), v.cols()) != (counts.rows(), counts.cols()) {
        return Err(Error::Dimension(format!(
            "V is {}x{}, product is {}x{}",
            v.rows(),
            v.cols(),
            counts.rows(),
            counts.cols()
        )));
    }
    Ok(())
}

/// Number of observed cells where `logical(V̂_ij) != V_ij`.
pub fn bc_energy(v: &BinaryMatrix, counts: &ProductCounts) -> Result<u64> {
    check_counts(v, counts)?;
    Ok(v.bits()
        .iter()
        .zip(counts.counts())
        .enumerate()
        .filter(|&(idx, (&b, &c))| v.is_observed_flat(idx) && bc_cell(b, c) != 0)
        .count() as u64)
}

#[inline]
pub(crate) fn bc_cell(vij: u8, vhat: u32) -> u32 {
    ((vhat != 0) != (vij != 0)) as u32
}

#[inline]
pub(crate) fn rl_cell_unchecked(vij: u8, vhat: u32, lambda: f64) -> f64 {
    if vij == 0 {
        lambda * vhat as f64
    } else if vhat == 0 {
        lambda
    } else {
        0.0
    }
}

/// One rectified-linear penalty term `G_ij`.
pub fn rl_cell(vij: u8, vhat: i64, lambda: f64) -> Result<f64> {
    if vhat < 0 {
        return Err(Error::InvalidInput(format!("negative product count {vhat}")));
    }
    if vij > 1 {
        return Err(Error::InvalidInput(format!("non-binary target {vij}")));
    }
    let v = vij as f64;
    let x = vhat as f64;
    Ok(lambda * f64::max(0.0, (1.0 - v) * x + v * (1.0 - x)))
}

/// `Σ G_ij` over observed cells.
pub fn rl_energy(v: &BinaryMatrix, counts: &ProductCounts, p: &PenaltyField) -> Result<f64> {
    check_counts(v, counts)?;
    p.check_dims(v.rows(), v.cols())?;
    Ok(v.bits()
        .iter()
        .zip(counts.counts())
        .zip(p.lambdas())
        .enumerate()
        .filter(|&(idx, _)| v.is_observed_flat(idx))
        .map(|(_, ((&b, &c), &l))| rl_cell_unchecked(b, c, l))
        .sum())
}

/// A single factor bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flip {
    W { row: usize, rank: usize },
    H { rank: usize, col: usize },
}

/// Change of one product count caused by a flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CountUpdate {
    pub cell: usize,
    pub step: i32,
}

/// Result of evaluating a flip without applying it.
#[derive(Clone, Debug, PartialEq)]
pub struct FlipDelta {
    pub flip: Flip,
    pub delta_energy: f64,
    pub delta_mismatches: i64,
    pub updates: Vec<CountUpdate>,
}

/// Incrementally maintained factorization state: target, factors, product
/// counts, penalty weights and the current energy.
#[derive(Clone, Debug)]
pub struct FactorState {
    v: BinaryMatrix,
    factors: FactorPair,
    counts: ProductCounts,
    penalty: PenaltyField,
    cost: CostKind,
    energy: f64,
    mismatches: u64,
    observed: Vec<bool>,
    // set-bit masks of H's rows and W's columns, one row per rank index
    h_rows: BitRows,
    w_cols: BitRows,
    // observed ones / observed zeros of V, and cells whose count is 0 / 1
    ones: CellSets,
    zeros: CellSets,
    count0: CellSets,
    count1: CellSets,
    // the common weight while every λ_ij is equal
    uniform_lambda: Option<f64>,
    sites: Vec<Site>,
}

/// Decoded flat bit index: which set row it spans and which product line
/// (row of V for a W bit, column for an H bit) it touches.
#[derive(Clone, Copy, Debug)]
struct Site {
    w_flip: bool,
    rank: u32,
    line: u32,
}

/// Equal-length bit sets packed row after row into one word buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
struct BitRows {
    words: usize,
    data: Vec<u64>,
}

impl BitRows {
    fn from_fn(rows: usize, len: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let words = len.div_ceil(64).max(1);
        let mut data = vec![0u64; rows * words];
        for r in 0..rows {
            for i in 0..len {
                if f(r, i) {
                    data[r * words + i / 64] |= 1 << (i % 64);
                }
            }
        }
        Self { words, data }
    }

    #[inline]
    fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }

    #[inline]
    fn toggle(&mut self, r: usize, i: usize) {
        self.data[r * self.words + i / 64] ^= 1 << (i % 64);
    }
}

#[inline]
fn for_each_one(words: &[u64], mut f: impl FnMut(usize)) {
    for (w, &word) in words.iter().enumerate() {
        let mut rest = word;
        while rest != 0 {
            f(w * 64 + rest.trailing_zeros() as usize);
            rest &= rest - 1;
        }
    }
}

#[inline]
fn count2(a: &[u64], b: &[u64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as i64).sum()
}

#[inline]
fn count3(a: &[u64], b: &[u64], c: &[u64]) -> i64 {
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((x, y), z)| (x & y & z).count_ones() as i64)
        .sum()
}

/// A set of matrix cells viewed both row-wise and column-wise.
#[derive(Clone, Debug, PartialEq, Eq)]
struct CellSets {
    by_row: BitRows,
    by_col: BitRows,
}

impl CellSets {
    fn from_fn(m: usize, n: usize, f: impl Fn(usize) -> bool) -> Self {
        Self {
            by_row: BitRows::from_fn(m, n, |i, j| f(i * n + j)),
            by_col: BitRows::from_fn(n, m, |j, i| f(i * n + j)),
        }
    }

    #[inline]
    fn toggle(&mut self, i: usize, j: usize) {
        self.by_row.toggle(i, j);
        self.by_col.toggle(j, i);
    }

    #[inline]
    fn line(&self, w_flip: bool, line: usize) -> &[u64] {
        if w_flip {
            self.by_row.row(line)
        } else {
            self.by_col.row(line)
        }
    }
}

/// Moves one product count by `step`, keeping the count-0/1 sets in sync.
#[inline]
fn bump(
    counts: &mut [u32],
    count0: &mut CellSets,
    count1: &mut CellSets,
    n: usize,
    (i, j): (usize, usize),
    step: i32,
) {
    let c = i * n + j;
    let old = counts[c];
    let new = (old as i64 + step as i64) as u32;
    counts[c] = new;
    if old == 0 || new == 0 {
        count0.toggle(i, j);
    }
    if old == 1 || new == 1 {
        count1.toggle(i, j);
    }
}

impl FactorState {
    pub fn new(
        v: BinaryMatrix,
        factors: FactorPair,
        cost: CostKind,
        penalty: PenaltyField,
    ) -> Result<Self> {
        if (factors.rows(), factors.cols()) != (v.rows(), v.cols()) {
            return Err(Error::Dimension(format!(
                "factors produce {}x{}, V is {}x{}",
                factors.rows(),
                factors.cols(),
                v.rows(),
                v.cols()
            )));
        }
        penalty.check_dims(v.rows(), v.cols())?;
        let counts = integer_product(&factors);
        let observed: Vec<bool> = (0..v.len()).map(|idx| v.is_observed_flat(idx)).collect();
        let (m, k, n) = (factors.rows(), factors.rank(), factors.cols());
        let h_rows = BitRows::from_fn(k, n, |kk, j| factors.h.get(kk, j) == 1);
        let w_cols = BitRows::from_fn(k, m, |kk, i| factors.w.get(i, kk) == 1);
        let bits = v.bits();
        let c = counts.counts();
        let ones = CellSets::from_fn(m, n, |idx| observed[idx] && bits[idx] == 1);
        let zeros = CellSets::from_fn(m, n, |idx| observed[idx] && bits[idx] == 0);
        let count0 = CellSets::from_fn(m, n, |idx| c[idx] == 0);
        let count1 = CellSets::from_fn(m, n, |idx| c[idx] == 1);
        let uniform_lambda = match penalty.lambdas().first() {
            Some(&l) if penalty.lambdas().iter().all(|&x| x == l) => Some(l),
            _ => None,
        };
        let sites = (0..m * k + k * n)
            .map(|idx| {
                if idx < m * k {
                    Site { w_flip: true, rank: (idx % k) as u32, line: (idx / k) as u32 }
                } else {
                    let h = idx - m * k;
                    Site { w_flip: false, rank: (h / n) as u32, line: (h % n) as u32 }
                }
            })
            .collect();
        let mut s = Self {
            v,
            factors,
            counts,
            penalty,
            cost,
            energy: 0.0,
            mismatches: 0,
            observed,
            h_rows,
            w_cols,
            ones,
            zeros,
            count0,
            count1,
            uniform_lambda,
            sites,
        };
        s.refresh();
        Ok(s)
    }

    pub fn target(&self) -> &BinaryMatrix {
        &self.v
    }

    pub fn factors(&self) -> &FactorPair {
        &self.factors
    }

    pub fn counts(&self) -> &ProductCounts {
        &self.counts
    }

    pub fn penalty(&self) -> &PenaltyField {
        &self.penalty
    }

    pub fn cost(&self) -> CostKind {
        self.cost
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn energy_value(&self) -> EnergyValue {
        match self.cost {
            CostKind::Binary => EnergyValue::Count(self.mismatches),
            CostKind::Rectified => EnergyValue::Weighted(self.energy),
        }
    }

    /// Observed cells where the Boolean product disagrees with V. Equals the
    /// binary-cost energy whatever cost is active.
    pub fn mismatches(&self) -> u64 {
        self.mismatches
    }

    pub fn bit_count(&self) -> usize {
        self.factors.bit_count()
    }

    /// Recomputes the energy and mismatch count from the current counts.
    pub fn refresh(&mut self) {
        let mut mism = 0u64;
        let mut rl = 0.0;
        for (idx, (&b, &c)) in self.v.bits().iter().zip(self.counts.counts()).enumerate() {
            if !self.observed[idx] {
                continue;
            }
            mism += bc_cell(b, c) as u64;
            if self.cost == CostKind::Rectified {
                rl += rl_cell_unchecked(b, c, self.penalty.lambdas[idx]);
            }
        }
        self.mismatches = mism;
        self.energy = match self.cost {
            CostKind::Binary => mism as f64,
            CostKind::Rectified => rl,
        };
    }

    pub fn flat_index(&self, flip: Flip) -> Result<usize> {
        let (m, k, n) = (self.factors.rows(), self.factors.rank(), self.factors.cols());
        match flip {
            Flip::W { row, rank } if row < m && rank < k => Ok(row * k + rank),
            Flip::H { rank, col } if rank < k && col < n => Ok(m * k + rank * n + col),
            _ => Err(Error::Index(format!("{flip:?} outside a {m}x{k} / {k}x{n} pair"))),
        }
    }

    pub fn flip_at(&self, idx: usize) -> Flip {
        let (m, k, n) = (self.factors.rows(), self.factors.rank(), self.factors.cols());
        if idx < m * k {
            Flip::W {
                row: idx / k,
                rank: idx % k,
            }
        } else {
            let h = idx - m * k;
            Flip::H {
                rank: h / n,
                col: h % n,
            }
        }
    }

    /// Evaluates flipping one factor bit without changing the state.
    pub fn flip_delta(&self, flip: Flip) -> Result<FlipDelta> {
        let idx = self.flat_index(flip)?;
        let mut updates = Vec::new();
        let (de, dm) = self.scan_flip(idx, |cell, step| updates.push(CountUpdate { cell, step }));
        Ok(FlipDelta {
            flip,
            delta_energy: de,
            delta_mismatches: dm,
            updates,
        })
    }

    /// Applies a delta previously returned by [`FactorState::flip_delta`] on
    /// this same state.
    pub fn commit(&mut self, d: &FlipDelta) -> Result<()> {
        let idx = self.flat_index(d.flip)?;
        self.toggle_bit(idx);
        let n = self.factors.cols();
        let counts = self.counts.counts_mut();
        for u in &d.updates {
            bump(counts, &mut self.count0, &mut self.count1, n, (u.cell / n, u.cell % n), u.step);
        }
        self.energy += d.delta_energy;
        self.mismatches = (self.mismatches as i64 + d.delta_mismatches) as u64;
        Ok(())
    }

    /// Energy and mismatch change of flipping bit `idx` of the concatenated
    /// (W, H) string.
    #[inline]
    pub fn delta_flat(&self, idx: usize) -> (f64, i64) {
        match (self.cost, self.uniform_lambda) {
            (CostKind::Binary, _) => {
                let (dm, _) = self.count_flip(idx);
                (dm as f64, dm)
            }
            (CostKind::Rectified, Some(l)) => {
                let (dm, units) = self.count_flip(idx);
                (l * units as f64, dm)
            }
            (CostKind::Rectified, None) => self.scan_flip(idx, |_, _| {}),
        }
    }

    /// Mismatch change of flipping bit `idx`, and the rectified-cost change
    /// in units of a uniform λ, from set intersections alone.
    #[inline]
    fn count_flip(&self, idx: usize) -> (i64, i64) {
        let up = self.bit_flat(idx) == 0;
        let Site { w_flip, rank, line } = self.sites[idx];
        let (rank, line) = (rank as usize, line as usize);
        let set = if w_flip {
            self.h_rows.row(rank)
        } else {
            self.w_cols.row(rank)
        };
        if set.len() == 1 {
            // every set fits one word (both dimensions ≤ 64)
            let set = set[0];
            let word = |c: &CellSets| c.line(w_flip, line)[0];
            let (ones, zeros) = (word(&self.ones), word(&self.zeros));
            let edge = set & word(if up { &self.count0 } else { &self.count1 });
            let edge_zeros = (edge & zeros).count_ones() as i64;
            let edge_ones = (edge & ones).count_ones() as i64;
            let touched_zeros = (set & zeros).count_ones() as i64;
            return Self::combine(up, edge_zeros, edge_ones, touched_zeros);
        }
        let ones = self.ones.line(w_flip, line);
        let zeros = self.zeros.line(w_flip, line);
        // cells whose logical value changes: count 0 → 1 going up, 1 → 0 going down
        let edge = if up {
            self.count0.line(w_flip, line)
        } else {
            self.count1.line(w_flip, line)
        };
        let edge_zeros = count3(set, edge, zeros);
        let edge_ones = count3(set, edge, ones);
        let touched_zeros = count2(set, zeros);
        Self::combine(up, edge_zeros, edge_ones, touched_zeros)
    }

    #[inline(always)]
    fn combine(up: bool, edge_zeros: i64, edge_ones: i64, touched_zeros: i64) -> (i64, i64) {
        if up {
            (edge_zeros - edge_ones, touched_zeros - edge_ones)
        } else {
            (edge_ones - edge_zeros, edge_ones - touched_zeros)
        }
    }

    /// Flips bit `idx` and applies a delta computed by
    /// [`FactorState::delta_flat`].
    pub fn apply_flat(&mut self, idx: usize, delta_energy: f64, delta_mismatches: i64) {
        let n = self.factors.cols();
        let step = if self.bit_flat(idx) == 0 { 1 } else { -1 };
        self.toggle_bit(idx);
        let Site { w_flip, rank, line } = self.sites[idx];
        let (rank, line) = (rank as usize, line as usize);
        let counts = self.counts.counts_mut();
        let (count0, count1) = (&mut self.count0, &mut self.count1);
        if w_flip {
            for_each_one(self.h_rows.row(rank), |j| bump(counts, count0, count1, n, (line, j), step));
        } else {
            for_each_one(self.w_cols.row(rank), |i| bump(counts, count0, count1, n, (i, line), step));
        }
        self.energy += delta_energy;
        self.mismatches = (self.mismatches as i64 + delta_mismatches) as u64;
    }

    fn toggle_bit(&mut self, idx: usize) {
        let Site { w_flip, rank, line } = self.sites[idx];
        if w_flip {
            self.w_cols.toggle(rank as usize, line as usize);
        } else {
            self.h_rows.toggle(rank as usize, line as usize);
        }
        self.factors.toggle_flat(idx);
    }

    fn bit_flat(&self, idx: usize) -> u8 {
        let wl = self.factors.w.len();
        if idx < wl {
            self.factors.w.bits()[idx]
        } else {
            self.factors.h.bits()[idx - wl]
        }
    }

    #[inline]
    fn scan_flip(&self, idx: usize, visit: impl FnMut(usize, i32)) -> (f64, i64) {
        match self.cost {
            CostKind::Binary => {
                let dm = self.scan_cells(idx, visit, |_, b, old, new| {
                    bc_cell(b, new) as i64 - bc_cell(b, old) as i64
                });
                (dm as f64, dm)
            }
            CostKind::Rectified => {
                let mut de = 0.0;
                let lambdas = self.penalty.lambdas();
                let dm = self.scan_cells(idx, visit, |c, b, old, new| {
                    let l = lambdas[c];
                    de += rl_cell_unchecked(b, new, l) - rl_cell_unchecked(b, old, l);
                    bc_cell(b, new) as i64 - bc_cell(b, old) as i64
                });
                (de, dm)
            }
        }
    }

    /// Visits every product cell touched by flipping bit `idx`, passing
    /// observed ones to `cell` as (index, target bit, old count, new count).
    /// Returns the summed mismatch change reported by `cell`.
    #[inline(always)]
    fn scan_cells(
        &self,
        idx: usize,
        mut visit: impl FnMut(usize, i32),
        mut cell: impl FnMut(usize, u8, u32, u32) -> i64,
    ) -> i64 {
        let (m, k, n) = (self.factors.rows(), self.factors.rank(), self.factors.cols());
        let step: i32 = if self.bit_flat(idx) == 0 { 1 } else { -1 };
        let counts = self.counts.counts();
        let bits = self.v.bits();
        let mut dm = 0;
        let mut touch = |c: usize| {
            visit(c, step);
            if self.observed[c] {
                let old = counts[c];
                let new = (old as i32 + step) as u32;
                dm += cell(c, bits[c], old, new);
            }
        };
        if idx < m * k {
            let (i, kk) = (idx / k, idx % k);
            for_each_one(self.h_rows.row(kk), |j| touch(i * n + j));
        } else {
            let h = idx - m * k;
            let (kk, j) = (h / n, h % n);
            for_each_one(self.w_cols.row(kk), |i| touch(i * n + j));
        }
        dm
    }

    /// Multiplies λ_ij by `1 + λ_p` on every observed cell with a nonzero
    /// penalty term, then recomputes the energy.
    pub fn grow_violated(&mut self) {
        for idx in 0..self.v.len() {
            if self.observed[idx]
                && bc_cell(self.v.bits()[idx], self.counts.counts()[idx]) != 0
            {
                self.penalty.grow(idx);
                if self.penalty.growth() != 0.0 {
                    self.uniform_lambda = None;
                }
            }
        }
        self.refresh();
    }

    pub fn into_factors(self) -> FactorPair {
        self.factors
    }
}
