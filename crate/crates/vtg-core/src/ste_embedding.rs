//! Sequence-time embedding: visual tokens get two additive signals, a
//! sequence row selected by frame order and an absolute-time row selected by
//! the frame's timestamp in seconds. The time table starts at exactly zero so
//! the mechanism is a no-op until trained, and test-time lookups linearly
//! interpolate between the nearest trained timestamps.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Matrix;

/// Default number of absolute-time rows (seconds of addressable video).
pub const DEFAULT_TIME_ROWS: usize = 8192;

#[derive(Debug, Error, PartialEq)]
pub enum SteError {
    #[error("timestamp {t}s rounds outside the time table [0, {t_rows})")]
    TimeOutOfRange { t: f64, t_rows: usize },
    #[error("grid has {frames} frames but the sequence table holds {n_max} rows")]
    TooManyFrames { frames: usize, n_max: usize },
    #[error("grid embedding dim {grid} does not match table dim {table}")]
    DimMismatch { grid: usize, table: usize },
    #[error("values matrix is {rows}x{cols}, expected {frames} frames x {tokens} tokens rows")]
    ValuesShape { rows: usize, cols: usize, frames: usize, tokens: usize },
    #[error("{times} frame times for {frames} frames")]
    TimesLength { times: usize, frames: usize },
    #[error("frame times decrease at index {pos}")]
    TimesNotSorted { pos: usize },
    #[error("frame time at index {pos} is not finite")]
    TimeNotFinite { pos: usize },
    #[error("upstream gradient shape {gf}x{gt} does not match grid {f}x{t}")]
    UpstreamShape { gf: usize, gt: usize, f: usize, t: usize },
}

/// Whether an application records trained timestamps or interpolates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SteMode {
    /// Store-and-mark: rows are read directly and their integer timestamps
    /// join the trained set.
    Train,
    /// Read-only: untrained timestamps interpolate between trained ones.
    Test,
}

/// Visual tokens for one video: `frames x tokens_per_frame` rows of width
/// `d`, frame-major, with one timestamp in seconds per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenGrid {
    frames: usize,
    tokens_per_frame: usize,
    values: Matrix,
    frame_times: Vec<f64>,
}

impl TokenGrid {
    /// `values` must be `(frames * tokens_per_frame) x d`; `frame_times`
    /// must be non-decreasing with one entry per frame.
    pub fn new(
        frames: usize,
        tokens_per_frame: usize,
        values: Matrix,
        frame_times: Vec<f64>,
    ) -> Result<Self, SteError> {
        if values.rows() != frames * tokens_per_frame {
            return Err(SteError::ValuesShape {
                rows: values.rows(),
                cols: values.cols(),
                frames,
                tokens: tokens_per_frame,
            });
        }
        if frame_times.len() != frames {
            return Err(SteError::TimesLength { times: frame_times.len(), frames });
        }
        for (pos, t) in frame_times.iter().enumerate() {
            if !t.is_finite() {
                return Err(SteError::TimeNotFinite { pos });
            }
            if pos > 0 && *t < frame_times[pos - 1] {
                return Err(SteError::TimesNotSorted { pos });
            }
        }
        Ok(TokenGrid { frames, tokens_per_frame, values, frame_times })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.tokens_per_frame
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn frame_times(&self) -> &[f64] {
        &self.frame_times
    }

    /// Token `j` of frame `i` as a row slice.
    pub fn token(&self, i: usize, j: usize) -> &[f64] {
        self.values.row(i * self.tokens_per_frame + j)
    }
}

/// Sparse row gradients produced by [`SteTable::grad_rows`]: row index to
/// accumulated gradient vector, for the sequence and time tables separately.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SteGrads {
    pub w_s: BTreeMap<usize, Vec<f64>>,
    pub w_t: BTreeMap<usize, Vec<f64>>,
}

/// Sequence and absolute-time embedding tables plus the set of integer
/// timestamps whose time rows have been written during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteTable {
    w_s: Matrix,
    w_t: Matrix,
    trained: BTreeSet<usize>,
}

impl SteTable {
    /// Takes sequence rows as given (callers pick their init) and creates an
    /// all-zero time table of `t_rows` rows, so a fresh table adds nothing
    /// beyond the sequence embedding.
    pub fn new(w_s: Matrix, t_rows: usize) -> Self {
        let d = w_s.cols();
        SteTable { w_s, w_t: Matrix::zeros(t_rows, d), trained: BTreeSet::new() }
    }

    pub fn dim(&self) -> usize {
        self.w_s.cols()
    }

    pub fn n_max(&self) -> usize {
        self.w_s.rows()
    }

    pub fn t_rows(&self) -> usize {
        self.w_t.rows()
    }

    pub fn w_s(&self) -> &Matrix {
        &self.w_s
    }

    pub fn w_t(&self) -> &Matrix {
        &self.w_t
    }

    pub fn trained(&self) -> &BTreeSet<usize> {
        &self.trained
    }

    /// Integer row index for a timestamp: round to nearest second.
    pub fn time_row(&self, t: f64) -> Result<usize, SteError> {
        let r = t.round_ties_even();
        if !(t.is_finite() && r >= 0.0 && (r as usize) < self.t_rows()) {
            return Err(SteError::TimeOutOfRange { t, t_rows: self.t_rows() });
        }
        Ok(r as usize)
    }

    /// Adds `W_s[i] + TE(frame_times[i])` to every token of frame `i`.
    ///
    /// Train mode reads time rows directly and marks their integer
    /// timestamps trained; test mode interpolates via [`SteTable::lookup_time`]
    /// and leaves the table untouched.
    pub fn apply(&mut self, grid: &TokenGrid, mode: SteMode) -> Result<TokenGrid, SteError> {
        if mode == SteMode::Train {
            for &t in grid.frame_times() {
                let row = self.time_row(t)?;
                self.trained.insert(row);
            }
        }
        self.apply_readonly(grid, mode)
    }

    /// Test-mode application from a shared reference (checkpoint serving).
    pub fn apply_test(&self, grid: &TokenGrid) -> Result<TokenGrid, SteError> {
        self.apply_readonly(grid, SteMode::Test)
    }

    fn apply_readonly(&self, grid: &TokenGrid, mode: SteMode) -> Result<TokenGrid, SteError> {
        if grid.frames() > self.n_max() {
            return Err(SteError::TooManyFrames { frames: grid.frames(), n_max: self.n_max() });
        }
        if grid.dim() != self.dim() {
            return Err(SteError::DimMismatch { grid: grid.dim(), table: self.dim() });
        }
        let mut out = grid.clone();
        let m = grid.tokens_per_frame();
        for i in 0..grid.frames() {
            let time_vec = match mode {
                SteMode::Train => self.w_t.row(self.time_row(grid.frame_times()[i])?).to_vec(),
                SteMode::Test => self.lookup_time(grid.frame_times()[i])?,
            };
            let seq_row = self.w_s.row(i);
            for j in 0..m {
                let token = out.values.row_mut(i * m + j);
                for k in 0..token.len() {
                    token[k] += seq_row[k] + time_vec[k];
                }
            }
        }
        Ok(out)
    }

    /// Time embedding for an arbitrary timestamp.
    ///
    /// A timestamp whose rounded second is trained returns that row exactly.
    /// Otherwise the nearest trained seconds below and above bracket it and
    /// the result is the linear interpolation weighted `(t_r - t)/(t_r - t_l)`
    /// on the left row and `(t - t_l)/(t_r - t_l)` on the right. With trained
    /// timestamps on one side only, the nearest trained row is returned
    /// unweighted; with none at all, the zero vector.
    pub fn lookup_time(&self, t: f64) -> Result<Vec<f64>, SteError> {
        let rounded = self.time_row(t)?;
        if self.trained.contains(&rounded) {
            return Ok(self.w_t.row(rounded).to_vec());
        }
        let left = self.trained.range(..=rounded).next_back().copied();
        let right = self.trained.range(rounded..).next().copied();
        match (left, right) {
            (Some(l), Some(r)) => {
                let (tl, tr) = (l as f64, r as f64);
                let w_right = (t - tl) / (tr - tl);
                let w_left = (tr - t) / (tr - tl);
                let row_l = self.w_t.row(l);
                let row_r = self.w_t.row(r);
                Ok((0..self.dim()).map(|k| w_left * row_l[k] + w_right * row_r[k]).collect())
            }
            (Some(l), None) => Ok(self.w_t.row(l).to_vec()),
            (None, Some(r)) => Ok(self.w_t.row(r).to_vec()),
            (None, None) => Ok(vec![0.0; self.dim()]),
        }
    }

    /// Backward pass of the addition for a train-mode application: each
    /// token's upstream gradient flows unchanged into its frame's sequence
    /// row and rounded-time row, summing over tokens that share a row.
    pub fn grad_rows(&self, grid: &TokenGrid, upstream: &TokenGrid) -> Result<SteGrads, SteError> {
        if upstream.frames() != grid.frames()
            || upstream.tokens_per_frame() != grid.tokens_per_frame()
            || upstream.dim() != grid.dim()
        {
            return Err(SteError::UpstreamShape {
                gf: upstream.frames(),
                gt: upstream.tokens_per_frame(),
                f: grid.frames(),
                t: grid.tokens_per_frame(),
            });
        }
        let d = grid.dim();
        let m = grid.tokens_per_frame();
        let mut w_s: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut w_t: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for i in 0..grid.frames() {
            let t_row = self.time_row(grid.frame_times()[i])?;
            let gs = w_s.entry(i).or_insert_with(|| vec![0.0; d]);
            for j in 0..m {
                let u = upstream.token(i, j);
                for k in 0..d {
                    gs[k] += u[k];
                }
            }
            let gt = w_t.entry(t_row).or_insert_with(|| vec![0.0; d]);
            for j in 0..m {
                let u = upstream.token(i, j);
                for k in 0..d {
                    gt[k] += u[k];
                }
            }
        }
        Ok(SteGrads { w_s, w_t })
    }

    /// One SGD step over sparse row gradients.
    pub fn apply_grads(&mut self, grads: &SteGrads, lr: f64) {
        for (&i, g) in &grads.w_s {
            let row = self.w_s.row_mut(i);
            for k in 0..row.len() {
                row[k] -= lr * g[k];
            }
        }
        for (&r, g) in &grads.w_t {
            let row = self.w_t.row_mut(r);
            for k in 0..row.len() {
                row[k] -= lr * g[k];
            }
        }
    }

    /// Direct access for tests and hand-set fixtures.
    pub fn w_t_row_mut(&mut self, r: usize) -> &mut [f64] {
        self.w_t.row_mut(r)
    }

    pub fn w_s_row_mut(&mut self, i: usize) -> &mut [f64] {
        self.w_s.row_mut(i)
    }

    pub fn mark_trained(&mut self, second: usize) {
        assert!(second < self.t_rows());
        self.trained.insert(second);
    }
}
