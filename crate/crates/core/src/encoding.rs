//! Multi-level time-bin encoding.
//!
//! Each level of a `d`-ary tree encodes one qudit (a qubit for the binary
//! trees used here). Levels are ordered from the outermost (largest time-bin
//! separation) to the innermost, and the outermost level is the most
//! significant digit of the bin index. A bin's arrival time is the sum of
//! `digit × shift` over the levels, which keeps the separation between
//! partner bins identical for every branch of the tree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::{ModeGrid, Photon};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub name: String,
    /// Separation between the bins this level's beam splitter must bridge.
    pub shift_ps: f64,
    /// Modulation tone that produces that separation.
    pub rf_ghz: f64,
}

impl Level {
    pub fn new(name: impl Into<String>, shift_ps: f64, rf_ghz: f64) -> Self {
        Level { name: name.into(), shift_ps, rf_ghz }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    levels: Vec<Level>,
    #[serde(default = "binary")]
    arity: u32,
}

fn binary() -> u32 {
    2
}

impl Default for LevelSpec {
    fn default() -> Self {
        LevelSpec {
            levels: vec![Level::new("T", 300.0, 3.75), Level::new("t", 100.0, 1.25)],
            arity: 2,
        }
    }
}

impl LevelSpec {
    pub fn new(mut levels: Vec<Level>, arity: u32) -> Result<Self> {
        if arity < 2 {
            return Err(Error::InvalidParameter(format!("arity must be at least 2, got {arity}")));
        }
        if levels.is_empty() {
            return Err(Error::InvalidParameter("at least one level is required".into()));
        }
        for (k, level) in levels.iter().enumerate() {
            if !(level.shift_ps > 0.0) || !(level.rf_ghz > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "level {:?} needs positive shift and tone",
                    level.name
                )));
            }
            if levels[..k].iter().any(|l| l.name == level.name) {
                return Err(Error::InvalidParameter(format!("duplicate level {:?}", level.name)));
            }
        }
        levels.sort_by(|a, b| b.shift_ps.total_cmp(&a.shift_ps));
        let spec = LevelSpec { levels, arity };
        spec.default_layout()?;
        Ok(spec)
    }

    /// Single-level spec with one time-bin pair.
    pub fn single(name: impl Into<String>, shift_ps: f64, rf_ghz: f64) -> Result<Self> {
        Self::new(vec![Level::new(name, shift_ps, rf_ghz)], 2)
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn arity(&self) -> u32 {
        self.arity
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn bin_count(&self) -> usize {
        (self.arity as usize).pow(self.levels.len() as u32)
    }

    pub fn level_index(&self, name: &str) -> Result<usize> {
        self.levels
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLevel(name.to_string()))
    }

    pub fn level(&self, name: &str) -> Result<&Level> {
        self.level_index(name).map(|k| &self.levels[k])
    }

    /// Checks every shift against the time quantum of `grid`.
    pub fn check_grid(&self, grid: &ModeGrid) -> Result<()> {
        for level in &self.levels {
            grid.time_steps(level.shift_ps).map_err(|_| {
                Error::IncompatibleShift(format!(
                    "level {:?} shift {} ps is not a multiple of {} ps",
                    level.name, level.shift_ps, grid.time_quantum_ps
                ))
            })?;
        }
        Ok(())
    }

    /// Layout with arrival time `Σ digit_k · shift_k`.
    pub fn default_layout(&self) -> Result<BinLayout> {
        let n = self.levels.len();
        let positions = (0..self.bin_count())
            .map(|bin| {
                let digits = index_to_digits(bin, self.arity, n);
                digits.iter().zip(&self.levels).map(|(&d, l)| d as f64 * l.shift_ps).sum()
            })
            .collect();
        BinLayout::with_arity(positions, self.arity)
            .map_err(|e| Error::IncompatibleShift(format!("shifts do not nest into a tree: {e}")))
    }

    /// Adds a level and returns the enlarged spec.
    pub fn extend_levels(&self, new_level: Level, grid: &ModeGrid) -> Result<LevelSpec> {
        grid.time_steps(new_level.shift_ps).map_err(|_| {
            Error::IncompatibleShift(format!(
                "shift {} ps is not a multiple of the {} ps time quantum",
                new_level.shift_ps, grid.time_quantum_ps
            ))
        })?;
        let mut levels = self.levels.clone();
        levels.push(new_level);
        match Self::new(levels, self.arity) {
            Err(Error::InvalidParameter(msg)) => Err(Error::IncompatibleShift(msg)),
            other => other,
        }
    }
}

fn index_to_digits(mut index: usize, arity: u32, len: usize) -> Vec<u8> {
    let mut digits = vec![0u8; len];
    for k in (0..len).rev() {
        digits[k] = (index % arity as usize) as u8;
        index /= arity as usize;
    }
    digits
}

/// Physical arrival times of the time bins, indexed by bin number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinLayout {
    positions_ps: Vec<f64>,
    #[serde(default = "binary")]
    arity: u32,
}

impl Default for BinLayout {
    fn default() -> Self {
        BinLayout { positions_ps: vec![0.0, 100.0, 300.0, 400.0], arity: 2 }
    }
}

impl BinLayout {
    pub fn new(positions_ps: Vec<f64>) -> Result<Self> {
        Self::with_arity(positions_ps, 2)
    }

    pub fn with_arity(positions_ps: Vec<f64>, arity: u32) -> Result<Self> {
        if arity < 2 {
            return Err(Error::InvalidParameter(format!("arity must be at least 2, got {arity}")));
        }
        let mut count = 1usize;
        while count < positions_ps.len() {
            count *= arity as usize;
        }
        if count != positions_ps.len() || positions_ps.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} bins is not a power of {arity}",
                positions_ps.len()
            )));
        }
        if positions_ps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("bin positions must be strictly increasing".into()));
        }
        Ok(BinLayout { positions_ps, arity })
    }

    pub fn positions_ps(&self) -> &[f64] {
        &self.positions_ps
    }

    pub fn arity(&self) -> u32 {
        self.arity
    }

    pub fn count(&self) -> usize {
        self.positions_ps.len()
    }

    pub fn num_levels(&self) -> usize {
        let mut n = 0;
        let mut c = 1;
        while c < self.count() {
            c *= self.arity as usize;
            n += 1;
        }
        n
    }

    /// Digits of `bin_index`, outermost level first.
    pub fn bin_to_digits(&self, bin_index: usize) -> Result<Vec<u8>> {
        if bin_index >= self.count() {
            return Err(Error::OutOfRange { index: bin_index, count: self.count() });
        }
        Ok(index_to_digits(bin_index, self.arity, self.num_levels()))
    }

    pub fn digits_to_bin(&self, digits: &[u8]) -> Result<usize> {
        if digits.len() != self.num_levels() {
            return Err(Error::LengthMismatch { expected: self.num_levels(), got: digits.len() });
        }
        let mut index = 0usize;
        for &d in digits {
            if d as u32 >= self.arity {
                return Err(Error::InvalidParameter(format!("digit {d} exceeds arity {}", self.arity)));
            }
            index = index * self.arity as usize + d as usize;
        }
        Ok(index)
    }

    pub fn bin_to_bits(&self, bin_index: usize) -> Result<Vec<u8>> {
        self.bin_to_digits(bin_index)
    }

    pub fn bits_to_bin(&self, bits: &[u8]) -> Result<usize> {
        self.digits_to_bin(bits)
    }

    /// Per-level separation between partner bins, if it is the same for
    /// every branch of the tree.
    pub fn uniform_shifts(&self) -> Option<Vec<f64>> {
        let n = self.num_levels();
        let mut shifts = Vec::with_capacity(n);
        for level in 0..n {
            let mut shift: Option<f64> = None;
            for bin in 0..self.count() {
                let digits = index_to_digits(bin, self.arity, n);
                if digits[level] as u32 + 1 >= self.arity {
                    continue;
                }
                let mut partner = digits.clone();
                partner[level] += 1;
                let p = self.digits_to_bin(&partner).ok()?;
                let d = self.positions_ps[p] - self.positions_ps[bin];
                match shift {
                    None => shift = Some(d),
                    Some(s) if (s - d).abs() <= 1e-9 * s.abs().max(1.0) => {}
                    Some(_) => return None,
                }
            }
            shifts.push(shift?);
        }
        Some(shifts)
    }

    /// Grid time indices of every bin.
    pub fn time_indices(&self, grid: &ModeGrid) -> Result<Vec<i64>> {
        self.positions_ps.iter().map(|&p| grid.time_index(p)).collect()
    }
}

/// One qubit of the encoded state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitAddress {
    pub photon: Photon,
    pub level: String,
}

impl QubitAddress {
    pub fn new(photon: Photon, level: &str, spec: &LevelSpec) -> Result<Self> {
        spec.level_index(level)?;
        Ok(QubitAddress { photon, level: level.to_string() })
    }
}
