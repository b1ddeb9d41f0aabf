//! Seed-indexed families of binary linear codes, their syndromes, and a
//! nearest-coset decoder.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::ops::ControlFlow;

use rand::Rng;

use super::{BitString, Gf2Error};
use crate::rng::stream_rng;

/// Block lengths up to this size decode through a precomputed coset table.
pub const TABLE_MAX_LEN: usize = 20;
/// Largest kernel dimension decoded by full coset enumeration.
pub const COSET_MAX_DIM: usize = 24;
/// Kernel dimension that [`SyndromeFamily::for_block`] aims for.
const FAMILY_KERNEL_DIM: usize = 12;
/// Extra syndrome bits beyond the sphere-packing estimate.
const FAMILY_MARGIN_BITS: usize = 8;
/// Candidate budget for pattern search.
const SEARCH_BUDGET: u64 = 1 << 26;
const MAX_RESAMPLES: usize = 64;

/// A family `{H_j}` of `syndrome_len x block_len` parity-check matrices,
/// one per index `j < index_count`, all derived from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyndromeFamily {
    pub block_len: usize,
    pub syndrome_len: usize,
    pub tau: f64,
    pub delta_bound: f64,
    pub index_count: u64,
    pub seed: u64,
}

impl SyndromeFamily {
    pub fn new(
        block_len: usize,
        syndrome_len: usize,
        tau: f64,
        delta_bound: f64,
        index_count: u64,
        seed: u64,
    ) -> Result<Self, Gf2Error> {
        if block_len == 0 || syndrome_len == 0 || syndrome_len > block_len {
            return Err(Gf2Error::Parameter(format!(
                "syndrome length {syndrome_len} must be in 1..={block_len}"
            )));
        }
        if !(0.0..0.5).contains(&tau) {
            return Err(Gf2Error::Parameter(format!("tau {tau} must lie in [0, 1/2)")));
        }
        if index_count == 0 {
            return Err(Gf2Error::Parameter("index set must be nonempty".into()));
        }
        Ok(Self { block_len, syndrome_len, tau, delta_bound, index_count, seed })
    }

    /// Family sized for the protocol: enough syndrome bits that a random
    /// member uniquely decodes `tau * block_len` errors, and a kernel small
    /// enough for exact coset decoding. `delta_bound` records `2^(-beta l/2)`.
    pub fn for_block(block_len: usize, tau: f64, beta: f64, seed: u64) -> Result<Self, Gf2Error> {
        let radius = decoding_radius(tau, block_len);
        let packing = log2_ball_volume(block_len, 2 * radius).ceil() as usize + FAMILY_MARGIN_BITS;
        let syndrome_len = packing.max(block_len.saturating_sub(FAMILY_KERNEL_DIM)).clamp(1, block_len.max(1));
        let delta_bound = (-beta * block_len as f64 / 2.0).exp2();
        Self::new(block_len, syndrome_len, tau, delta_bound, 1 << 32, seed)
    }

    pub fn radius(&self) -> usize {
        decoding_radius(self.tau, self.block_len)
    }

    /// The parity-check matrix `H_j`. Rows are redrawn from the index's own
    /// stream until `H_j` has full row rank and, when the kernel is small
    /// enough to check, minimum distance above twice the radius.
    pub fn code(&self, j: u64) -> Result<ParityCheck, Gf2Error> {
        if j >= self.index_count {
            return Err(Gf2Error::Parameter(format!("code index {j} outside family of {}", self.index_count)));
        }
        let mut rng = stream_rng(self.seed, j);
        let radius = self.radius();
        let mut last = None;
        for _ in 0..MAX_RESAMPLES {
            let rows: Vec<BitString> =
                (0..self.syndrome_len).map(|_| BitString::random(&mut rng, self.block_len)).collect();
            let pc = ParityCheck::from_rows(rows, radius)?;
            if pc.rank() < self.syndrome_len {
                continue;
            }
            let checkable = pc.kernel_dim() <= 16 && radius > 0;
            if !checkable || pc.kernel_min_distance() > 2 * radius {
                return Ok(pc);
            }
            last = Some(pc);
        }
        last.ok_or_else(|| Gf2Error::Parameter("could not draw a full-rank parity-check matrix".into()))
    }

    /// Exact square bias of the members `indices`: the largest fraction of
    /// members whose row space contains a given nonzero vector. The bias
    /// `delta` is its square root. Exhaustive, so limited to short blocks.
    pub fn measured_bias(&self, indices: &[u64]) -> Result<BiasMeasurement, Gf2Error> {
        if self.block_len > TABLE_MAX_LEN {
            return Err(Gf2Error::Unsupported(format!("bias measurement needs block length <= {TABLE_MAX_LEN}")));
        }
        let mut hits = vec![0u64; 1 << self.block_len];
        for &j in indices {
            let code = self.code(j)?;
            let rows: Vec<u64> = code.rows().iter().map(BitString::to_u64).collect();
            for combo in 1u64..(1 << rows.len()) {
                let v = rows.iter().enumerate().filter(|(i, _)| combo >> i & 1 == 1).fold(0, |acc, (_, r)| acc ^ r);
                hits[v as usize] += 1;
            }
        }
        let max_hits = hits.iter().skip(1).copied().max().unwrap_or(0);
        Ok(BiasMeasurement { max_hits, codes: indices.len() as u64 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiasMeasurement {
    pub max_hits: u64,
    pub codes: u64,
}

impl BiasMeasurement {
    pub fn square_bias(&self) -> f64 {
        self.max_hits as f64 / self.codes as f64
    }

    pub fn delta(&self) -> f64 {
        self.square_bias().sqrt()
    }
}

pub fn decoding_radius(tau: f64, block_len: usize) -> usize {
    (tau * block_len as f64 + 1e-9).floor() as usize
}

/// `log2` of the number of strings within distance `radius` of a point.
pub fn log2_ball_volume(len: usize, radius: usize) -> f64 {
    let mut total = 0f64;
    let mut binom = 1f64;
    for w in 0..=radius.min(len) {
        if w > 0 {
            binom *= (len - w + 1) as f64 / w as f64;
        }
        total += binom;
    }
    total.log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStrategy {
    Table,
    Coset,
    Search,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Echelon {
    /// Reduced rows with their pivot column.
    rows: Vec<(usize, BitString)>,
    /// For each reduced row, which original rows were summed to obtain it.
    combos: Vec<BitString>,
    /// Combinations that reduce to the zero row: consistency checks.
    null_combos: Vec<BitString>,
    kernel: Vec<BitString>,
}

impl Echelon {
    fn new(rows: &[BitString], block_len: usize) -> Self {
        let r = rows.len();
        let mut work: Vec<(BitString, BitString)> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut combo = BitString::zeros(r);
                combo.set(i, true);
                (row.clone(), combo)
            })
            .collect();
        let mut pivots: Vec<(usize, BitString, BitString)> = Vec::new();
        let mut col = 0;
        while col < block_len && !work.is_empty() {
            if let Some(pos) = work.iter().position(|(row, _)| row.get(col)) {
                let (prow, pcombo) = work.swap_remove(pos);
                for (row, combo) in work.iter_mut() {
                    if row.get(col) {
                        row.xor_assign(&prow);
                        combo.xor_assign(&pcombo);
                    }
                }
                for (_, row, combo) in pivots.iter_mut() {
                    if row.get(col) {
                        row.xor_assign(&prow);
                        combo.xor_assign(&pcombo);
                    }
                }
                pivots.push((col, prow, pcombo));
            }
            col += 1;
        }
        let null_combos = work.into_iter().map(|(_, combo)| combo).collect();
        let pivot_cols: Vec<usize> = pivots.iter().map(|(c, _, _)| *c).collect();
        let kernel = (0..block_len)
            .filter(|c| !pivot_cols.contains(c))
            .map(|free| {
                let mut v = BitString::zeros(block_len);
                v.set(free, true);
                for (pc, row, _) in &pivots {
                    if row.get(free) {
                        v.set(*pc, true);
                    }
                }
                v
            })
            .collect();
        let (rows, combos) = pivots.into_iter().map(|(c, row, combo)| ((c, row), combo)).unzip();
        Self { rows, combos, null_combos, kernel }
    }

    /// Some `e` with `H e = target`, or `None` when `target` is outside the
    /// column space.
    fn particular(&self, target: &BitString, block_len: usize) -> Option<BitString> {
        if self.null_combos.iter().any(|c| c.dot(target)) {
            return None;
        }
        let mut e = BitString::zeros(block_len);
        for ((col, _), combo) in self.rows.iter().zip(&self.combos) {
            if combo.dot(target) {
                e.set(*col, true);
            }
        }
        Some(e)
    }
}

/// A parity-check matrix with its decoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheck {
    block_len: usize,
    rows: Vec<BitString>,
    columns: Vec<BitString>,
    radius: usize,
    echelon: Echelon,
    table: Option<HashMap<BitString, BitString>>,
}

impl ParityCheck {
    pub fn from_rows(rows: Vec<BitString>, radius: usize) -> Result<Self, Gf2Error> {
        let block_len = rows.first().map(BitString::len).unwrap_or(0);
        if rows.is_empty() || block_len == 0 {
            return Err(Gf2Error::Parameter("parity-check matrix must be nonempty".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != block_len) {
            return Err(Gf2Error::LengthMismatch { expected: block_len, found: bad.len() });
        }
        let columns = (0..block_len).map(|c| BitString::from_bits(rows.iter().map(|r| r.get(c)))).collect();
        let echelon = Echelon::new(&rows, block_len);
        let mut pc = Self { block_len, rows, columns, radius, echelon, table: None };
        if block_len <= TABLE_MAX_LEN {
            pc.table = Some(pc.build_table());
        }
        Ok(pc)
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn syndrome_len(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[BitString] {
        &self.rows
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn rank(&self) -> usize {
        self.echelon.rows.len()
    }

    pub fn kernel_dim(&self) -> usize {
        self.echelon.kernel.len()
    }

    /// Basis of the code `{x : H x = 0}`.
    pub fn kernel_basis(&self) -> &[BitString] {
        &self.echelon.kernel
    }

    /// Minimum weight of a nonzero codeword; `block_len + 1` for the zero
    /// code. Enumerates the whole kernel.
    pub fn kernel_min_distance(&self) -> usize {
        let basis = &self.echelon.kernel;
        let mut best = self.block_len + 1;
        let mut word = BitString::zeros(self.block_len);
        for step in 1u64..(1u64 << basis.len()) {
            word.xor_assign(&basis[step.trailing_zeros() as usize]);
            best = best.min(word.weight());
        }
        best
    }

    pub fn syndrome(&self, x: &BitString) -> Result<BitString, Gf2Error> {
        if x.len() != self.block_len {
            return Err(Gf2Error::LengthMismatch { expected: self.block_len, found: x.len() });
        }
        Ok(BitString::from_bits(self.rows.iter().map(|r| r.dot(x))))
    }

    pub fn default_strategy(&self) -> DecodeStrategy {
        if self.table.is_some() {
            DecodeStrategy::Table
        } else if self.kernel_dim() <= COSET_MAX_DIM {
            DecodeStrategy::Coset
        } else {
            DecodeStrategy::Search
        }
    }

    /// Returns the string closest to `x_hat` whose syndrome is `s`, provided
    /// it lies within the decoding radius. Equal-distance candidates resolve
    /// to the error pattern whose sorted position list is smallest.
    pub fn decode(&self, s: &BitString, x_hat: &BitString) -> Result<BitString, Gf2Error> {
        self.decode_with(self.default_strategy(), s, x_hat)
    }

    pub fn decode_with(&self, strategy: DecodeStrategy, s: &BitString, x_hat: &BitString) -> Result<BitString, Gf2Error> {
        if s.len() != self.rows.len() {
            return Err(Gf2Error::LengthMismatch { expected: self.rows.len(), found: s.len() });
        }
        let target = self.syndrome(x_hat)?.xor(s);
        let error = match strategy {
            DecodeStrategy::Table => {
                let table = self.table.as_ref().ok_or_else(|| {
                    Gf2Error::Unsupported(format!("coset table needs block length <= {TABLE_MAX_LEN}"))
                })?;
                table.get(&target).cloned()
            }
            DecodeStrategy::Coset => self.coset_leader(&target)?,
            DecodeStrategy::Search => self.search_leader(&target)?,
        };
        match error {
            Some(e) => Ok(x_hat.xor(&e)),
            None => Err(Gf2Error::DecodeFailure { radius: self.radius }),
        }
    }

    fn build_table(&self) -> HashMap<BitString, BitString> {
        let mut table = HashMap::new();
        for_each_pattern(self.block_len, self.radius, |positions| {
            let mut syn = BitString::zeros(self.rows.len());
            for &p in positions {
                syn.xor_assign(&self.columns[p]);
            }
            table.entry(syn).or_insert_with(|| pattern(self.block_len, positions));
            ControlFlow::Continue(())
        });
        table
    }

    fn coset_leader(&self, target: &BitString) -> Result<Option<BitString>, Gf2Error> {
        let basis = &self.echelon.kernel;
        if basis.len() > COSET_MAX_DIM {
            return Err(Gf2Error::Unsupported(format!("coset enumeration needs kernel dimension <= {COSET_MAX_DIM}")));
        }
        let Some(mut current) = self.echelon.particular(target, self.block_len) else {
            return Ok(None);
        };
        let mut best = current.clone();
        let mut best_weight = best.weight();
        for step in 1u64..(1u64 << basis.len()) {
            current.xor_assign(&basis[step.trailing_zeros() as usize]);
            let w = current.weight();
            if w < best_weight || (w == best_weight && current.position_order(&best) == Ordering::Less) {
                best.clone_from(&current);
                best_weight = w;
            }
        }
        Ok((best_weight <= self.radius).then_some(best))
    }

    fn search_leader(&self, target: &BitString) -> Result<Option<BitString>, Gf2Error> {
        let mut found = None;
        let mut spent = 0u64;
        let mut exhausted = false;
        for_each_pattern(self.block_len, self.radius, |positions| {
            spent += 1;
            if spent > SEARCH_BUDGET {
                exhausted = true;
                return ControlFlow::Break(());
            }
            let mut syn = BitString::zeros(self.rows.len());
            for &p in positions {
                syn.xor_assign(&self.columns[p]);
            }
            if &syn == target {
                found = Some(pattern(self.block_len, positions));
                return ControlFlow::Break(());
            }
            ControlFlow::Continue(())
        });
        if exhausted {
            return Err(Gf2Error::Unsupported("pattern search budget exhausted".into()));
        }
        Ok(found)
    }
}

fn pattern(len: usize, positions: &[usize]) -> BitString {
    let mut e = BitString::zeros(len);
    for &p in positions {
        e.set(p, true);
    }
    e
}

/// Visits every position set of size `0..=max_weight` over `0..len`, by
/// increasing size and lexicographically within a size.
pub fn for_each_pattern<F: FnMut(&[usize]) -> ControlFlow<()>>(len: usize, max_weight: usize, mut f: F) {
    for w in 0..=max_weight.min(len) {
        let mut idx: Vec<usize> = (0..w).collect();
        loop {
            if f(&idx).is_break() {
                return;
            }
            // advance to the next combination in lexicographic order
            let mut i = w;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if idx[i] < len - w + i {
                    idx[i] += 1;
                    for k in i + 1..w {
                        idx[k] = idx[k - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    i = usize::MAX;
                    break;
                }
            }
            if w == 0 || i == usize::MAX {
                break;
            }
        }
    }
}

pub fn syndrome_compute(family: &SyndromeFamily, j: u64, x: &BitString) -> Result<BitString, Gf2Error> {
    family.code(j)?.syndrome(x)
}

pub fn syndrome_decode(
    family: &SyndromeFamily,
    j: u64,
    s: &BitString,
    x_hat: &BitString,
) -> Result<BitString, Gf2Error> {
    family.code(j)?.decode(s, x_hat)
}

/// Draws an index uniformly from the family's index set.
pub fn sample_index<R: Rng + ?Sized>(family: &SyndromeFamily, rng: &mut R) -> u64 {
    rng.gen_range(0..family.index_count)
}
