//! Deterministic excerpt samplers.
//!
//! Every batch is a pure function of (corpus, rng state): each excerpt draws
//! a track uniformly, then a start frame uniformly over the positions where
//! the window fits, then — for solo excerpts only — a loudness factor. The
//! cutting itself is exposed separately ([`cut_paired_excerpt`],
//! [`cut_source_excerpt`]) so tests can pin down excerpts without an rng.

use ndarray::{Array2, Array3, Axis};
use rand::Rng;

use crate::audio::{self, cut_input_window, cut_target_window, ExcerptGeometry};
use crate::data::{DataCorpus, PairedTrack};
use crate::error::{Error, Result};

/// Loudness factors for solo excerpts are drawn uniformly from this range.
pub const LOUDNESS_RANGE: (f64, f64) = (0.2, 1.2);

/// A batch of log-normalized excerpts. `inputs` is
/// `[size, frames, bins]`; `targets` holds one grid per source for paired
/// batches and is empty otherwise.
#[derive(Clone, Debug)]
pub struct Batch {
    pub inputs: Array3<f64>,
    pub targets: Vec<Array3<f64>>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.inputs.shape()[0]
    }
}

/// Cuts one paired excerpt: the mixture input window at `start` and the
/// matching target window from every source, all log-normalized.
pub fn cut_paired_excerpt(
    track: &PairedTrack,
    geom: &ExcerptGeometry,
    start: usize,
) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
    let input = audio::log_normalize(&cut_input_window(&track.mixture, geom, start as isize))?;
    let targets = track
        .sources
        .iter()
        .map(|s| audio::log_normalize(&cut_target_window(s, geom, start as isize)))
        .collect::<Result<Vec<_>>>()?;
    Ok((input, targets))
}

/// Cuts one solo excerpt on the output grid: `out_frames` frames from
/// `start`, the bottom `out_bins` bins, linear magnitudes scaled by
/// `factor`, then log-normalized.
pub fn cut_source_excerpt(
    grid: &Array2<f64>,
    geom: &ExcerptGeometry,
    start: usize,
    factor: f64,
) -> Result<Array2<f64>> {
    if start + geom.out_frames > grid.nrows() || geom.out_bins > grid.ncols() {
        return Err(Error::Dataset(format!(
            "solo excerpt [{start}, {}) x {} bins exceeds a {} x {} grid",
            start + geom.out_frames,
            geom.out_bins,
            grid.nrows(),
            grid.ncols()
        )));
    }
    let window = grid
        .slice(ndarray::s![start..start + geom.out_frames, ..geom.out_bins])
        .to_owned();
    audio::log_normalize(&audio::loudness_scale(&window, factor))
}

pub(crate) fn stack(grids: &[Array2<f64>]) -> Array3<f64> {
    let (f, b) = grids[0].dim();
    let mut out = Array3::zeros((grids.len(), f, b));
    for (i, g) in grids.iter().enumerate() {
        out.index_axis_mut(Axis(0), i).assign(g);
    }
    out
}

/// The largest valid start frame, or an error naming the short track.
fn max_start(frames: usize, need: usize, pool: &str, track: usize) -> Result<usize> {
    frames.checked_sub(need).ok_or_else(|| {
        Error::Dataset(format!(
            "{pool} track {track} has {frames} frames but excerpts need {need}"
        ))
    })
}

/// Draws `size` paired excerpts: mixture inputs plus one target grid per
/// source, cut on the same target frame range.
pub fn sample_paired_batch(
    corpus: &DataCorpus,
    geom: &ExcerptGeometry,
    size: usize,
    rng: &mut impl Rng,
) -> Result<Batch> {
    if corpus.paired.is_empty() {
        return Err(Error::Dataset("paired pool is empty".into()));
    }
    let mut inputs = Vec::with_capacity(size);
    let mut targets: Vec<Vec<Array2<f64>>> = vec![Vec::with_capacity(size); corpus.sources];
    for _ in 0..size {
        let t = rng.random_range(0..corpus.paired.len());
        let track = &corpus.paired[t];
        let hi = max_start(track.mixture.nrows(), geom.input_frames, "paired", t)?;
        let start = rng.random_range(0..=hi);
        let (input, tgts) = cut_paired_excerpt(track, geom, start)?;
        inputs.push(input);
        for (k, g) in tgts.into_iter().enumerate() {
            targets[k].push(g);
        }
    }
    Ok(Batch {
        inputs: stack(&inputs),
        targets: targets.iter().map(|g| stack(g)).collect(),
    })
}

/// Draws `size` unlabelled mixture inputs. No loudness scaling is applied:
/// these excerpts feed the separator, where scaling would detach the input
/// from anything the supervised pairing taught it.
pub fn sample_unlabelled_batch(
    corpus: &DataCorpus,
    geom: &ExcerptGeometry,
    size: usize,
    rng: &mut impl Rng,
) -> Result<Batch> {
    if corpus.unlabelled.is_empty() {
        return Err(Error::Dataset("unlabelled pool is empty".into()));
    }
    let mut inputs = Vec::with_capacity(size);
    for _ in 0..size {
        let t = rng.random_range(0..corpus.unlabelled.len());
        let grid = &corpus.unlabelled[t];
        let hi = max_start(grid.nrows(), geom.input_frames, "unlabelled", t)?;
        let start = rng.random_range(0..=hi);
        inputs.push(audio::log_normalize(&cut_input_window(
            grid,
            geom,
            start as isize,
        ))?);
    }
    Ok(Batch {
        inputs: stack(&inputs),
        targets: Vec::new(),
    })
}

/// Draws `size` real excerpts of source `k` (0-based) on the output grid,
/// each loudness-scaled by an independent uniform factor before
/// log-normalization.
pub fn sample_source_batch(
    corpus: &DataCorpus,
    k: usize,
    geom: &ExcerptGeometry,
    size: usize,
    rng: &mut impl Rng,
) -> Result<Batch> {
    let pool = corpus.solo.get(k).ok_or_else(|| {
        Error::Dataset(format!(
            "source index {k} out of range ({} sources)",
            corpus.sources
        ))
    })?;
    if pool.is_empty() {
        return Err(Error::Dataset(format!("solo pool for source {k} is empty")));
    }
    let mut inputs = Vec::with_capacity(size);
    for _ in 0..size {
        let t = rng.random_range(0..pool.len());
        let grid = &pool[t];
        let hi = max_start(grid.nrows(), geom.out_frames, "solo", t)?;
        let start = rng.random_range(0..=hi);
        let factor = rng.random_range(LOUDNESS_RANGE.0..LOUDNESS_RANGE.1);
        inputs.push(cut_source_excerpt(grid, geom, start, factor)?);
    }
    Ok(Batch {
        inputs: stack(&inputs),
        targets: Vec::new(),
    })
}
