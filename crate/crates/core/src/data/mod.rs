//! Data pools and batch assembly.
//!
//! A corpus lives on disk as WAV files plus a plain-text manifest; in memory
//! it holds linear magnitude spectrograms, one grid per track, split into
//! three pools with no track shared between them:
//!
//! * paired — mixtures with their isolated sources, for the supervised term,
//! * unlabelled — mixtures alone, fed to the separator for the adversarial
//!   and additivity terms,
//! * solo — per-source recordings supplying the critics' real examples.
//!
//! Grids stay linear until an excerpt is cut: loudness augmentation (solo
//! excerpts only) multiplies linear magnitudes, and log-normalization is the
//! last step before a batch leaves this module.

mod sampler;
mod toy;

pub use sampler::{
    cut_paired_excerpt, cut_source_excerpt, sample_paired_batch, sample_source_batch,
    sample_unlabelled_batch, Batch, LOUDNESS_RANGE,
};
pub(crate) use sampler::stack;
pub use toy::{draw_track_params, generate_toy_corpus, synthesize_track, ToyConfig, ToyTrack, TrackParams};

use ndarray::Array2;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::audio;
use crate::error::{Error, Result};

/// Name of the manifest file at a corpus root.
pub const MANIFEST_NAME: &str = "manifest.txt";

/// Which pool a manifest line belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pool {
    Paired,
    Unlabelled,
    Solo,
}

impl fmt::Display for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pool::Paired => "paired",
            Pool::Unlabelled => "unlabelled",
            Pool::Solo => "solo",
        })
    }
}

/// One parsed manifest line: `<pool>,<source_index|->,<relative wav path>`.
/// Source indices are 1-based in the file and converted on parse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub pool: Pool,
    /// `None` for mixtures, `Some(k)` (0-based) for source stems.
    pub source: Option<usize>,
    pub path: PathBuf,
}

/// Parses manifest text. Blank lines are ignored; anything else malformed is
/// an error naming the line.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let bad = |what: &str| {
            Error::Dataset(format!("manifest line {}: {what}: {line:?}", lineno + 1))
        };
        let pool = match parts.next().map(str::trim) {
            Some("paired") => Pool::Paired,
            Some("unlabelled") => Pool::Unlabelled,
            Some("solo") => Pool::Solo,
            _ => return Err(bad("unknown pool")),
        };
        let source = match parts.next().map(str::trim) {
            Some("-") => None,
            Some(s) => {
                let k: usize = s
                    .parse()
                    .map_err(|_| bad("source index must be a number or '-'"))?;
                if k == 0 {
                    return Err(bad("source indices are 1-based"));
                }
                Some(k - 1)
            }
            None => return Err(bad("missing source field")),
        };
        let path = match parts.next().map(str::trim) {
            Some(p) if !p.is_empty() => PathBuf::from(p),
            _ => return Err(bad("missing path field")),
        };
        match (pool, source) {
            (Pool::Unlabelled, Some(_)) => {
                return Err(bad("unlabelled entries must use '-' for the source"))
            }
            (Pool::Solo, None) => return Err(bad("solo entries need a source index")),
            _ => {}
        }
        entries.push(ManifestEntry { pool, source, path });
    }
    Ok(entries)
}

/// One paired track: the mixture grid and its isolated source grids, all
/// linear magnitudes of shape `[frames, N_BINS]`.
#[derive(Clone, Debug)]
pub struct PairedTrack {
    pub mixture: Array2<f64>,
    pub sources: Vec<Array2<f64>>,
}

/// The three data pools as linear magnitude grids.
#[derive(Clone, Debug, Default)]
pub struct DataCorpus {
    /// Number of sources `K`.
    pub sources: usize,
    pub paired: Vec<PairedTrack>,
    pub unlabelled: Vec<Array2<f64>>,
    /// `solo[k]` lists the solo grids for source `k`.
    pub solo: Vec<Vec<Array2<f64>>>,
}

impl DataCorpus {
    /// Loads a corpus from `root/manifest.txt`. `sources` is the expected
    /// source count; every paired track must supply exactly one stem per
    /// source, grouped in the manifest as a mixture line followed by its
    /// stem lines.
    pub fn load(root: &Path, sources: usize) -> Result<Self> {
        let manifest_path = root.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|e| Error::io(&manifest_path, e))?;
        let entries = parse_manifest(&text)?;
        Self::from_entries(root, sources, &entries)
    }

    fn from_entries(root: &Path, sources: usize, entries: &[ManifestEntry]) -> Result<Self> {
        if sources < 2 {
            return Err(Error::Dataset("a corpus needs at least two sources".into()));
        }
        let mut corpus = DataCorpus {
            sources,
            solo: vec![Vec::new(); sources],
            ..Default::default()
        };
        let mut open_pair: Option<(PairedTrack, Vec<bool>)> = None;
        let close_pair = |pair: Option<(PairedTrack, Vec<bool>)>,
                              out: &mut Vec<PairedTrack>|
         -> Result<()> {
            if let Some((track, seen)) = pair {
                if let Some(k) = seen.iter().position(|s| !s) {
                    return Err(Error::Dataset(format!(
                        "paired track {} is missing source {}",
                        out.len() + 1,
                        k + 1
                    )));
                }
                out.push(track);
            }
            Ok(())
        };

        for entry in entries {
            let grid = load_grid(&root.join(&entry.path))?;
            match (entry.pool, entry.source) {
                (Pool::Paired, None) => {
                    close_pair(open_pair.take(), &mut corpus.paired)?;
                    open_pair = Some((
                        PairedTrack {
                            mixture: grid,
                            sources: vec![Array2::zeros((0, 0)); sources],
                        },
                        vec![false; sources],
                    ));
                }
                (Pool::Paired, Some(k)) => {
                    let (track, seen) = open_pair.as_mut().ok_or_else(|| {
                        Error::Dataset(format!(
                            "stem {:?} appears before its mixture line",
                            entry.path
                        ))
                    })?;
                    if k >= sources {
                        return Err(Error::Dataset(format!(
                            "stem {:?} names source {} but the corpus has {}",
                            entry.path,
                            k + 1,
                            sources
                        )));
                    }
                    if seen[k] {
                        return Err(Error::Dataset(format!(
                            "duplicate stem for source {} at {:?}",
                            k + 1,
                            entry.path
                        )));
                    }
                    if grid.nrows() != track.mixture.nrows() {
                        return Err(Error::Dataset(format!(
                            "stem {:?} has {} frames but its mixture has {}",
                            entry.path,
                            grid.nrows(),
                            track.mixture.nrows()
                        )));
                    }
                    track.sources[k] = grid;
                    seen[k] = true;
                }
                (Pool::Unlabelled, _) => corpus.unlabelled.push(grid),
                (Pool::Solo, Some(k)) => {
                    if k >= sources {
                        return Err(Error::Dataset(format!(
                            "solo track {:?} names source {} but the corpus has {}",
                            entry.path,
                            k + 1,
                            sources
                        )));
                    }
                    corpus.solo[k].push(grid);
                }
                (Pool::Solo, None) => unreachable!("rejected at parse"),
            }
        }
        close_pair(open_pair.take(), &mut corpus.paired)?;
        Ok(corpus)
    }

    /// A corpus containing only the given slice of this corpus's paired
    /// tracks (and nothing else). Used to carve supervised, validation, and
    /// test splits out of one deterministic pool.
    pub fn paired_slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.paired.len() {
            return Err(Error::Dataset(format!(
                "paired slice {}..{} out of range ({} tracks)",
                start,
                start + len,
                self.paired.len()
            )));
        }
        Ok(DataCorpus {
            sources: self.sources,
            paired: self.paired[start..start + len].to_vec(),
            unlabelled: Vec::new(),
            solo: vec![Vec::new(); self.sources],
        })
    }
}

/// Reads a WAV into a linear magnitude grid `[frames, N_BINS]`.
fn load_grid(path: &Path) -> Result<Array2<f64>> {
    let wave = audio::ingest(path)?;
    let spec = audio::stft(&wave)?;
    Ok(spec.magnitude())
}
