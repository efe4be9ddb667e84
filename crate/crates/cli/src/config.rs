//! Input files: chain descriptions and experiment configurations.

use std::fs;
use std::path::{Path, PathBuf};

use psimix::codesim::{CodesimParams, MemorylessChannel};
use psimix::process::ChainFile;
use psimix::ratedist::DistortionMeasure;
use psimix::{Error, MarkovSource, Result};
use serde::{Deserialize, Serialize};

/// A parsed chain file with its distortion measure.
pub struct LoadedChain {
    pub source: MarkovSource,
    pub measure: DistortionMeasure,
}

impl LoadedChain {
    pub fn from_file(file: ChainFile, cap: usize) -> Result<Self> {
        let source = file.to_source()?.with_cap(cap);
        let measure = match &file.distortion {
            Some(table) => DistortionMeasure::new(table.clone())?,
            None => DistortionMeasure::hamming(source.alphabet_size()),
        };
        if measure.input_size() != source.alphabet_size() {
            return Err(Error::InvalidDistortion(format!(
                "distortion table has {} rows for {} states",
                measure.input_size(),
                source.alphabet_size()
            )));
        }
        Ok(Self { source, measure })
    }

    pub fn load(path: &Path, cap: usize) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_file(ChainFile::from_json(&text)?, cap)
    }
}

/// A chain given inline or by path (relative to the experiment file).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceSpec {
    Path(PathBuf),
    Inline(ChainFile),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSpec {
    /// Binary symmetric channel with this crossover probability.
    Bsc(f64),
    /// Rows `c(· | x)`.
    Matrix(Vec<Vec<f64>>),
    /// Noiseless channel on the source alphabet.
    Identity,
}

/// Excess-distortion check run before the coding experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirectSpec {
    pub n: usize,
    pub trials: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub source: SourceSpec,
    pub channel: ChannelSpec,
    #[serde(flatten)]
    pub params: CodesimParams,
    pub k_list: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_check: Option<DirectSpec>,
}

impl ExperimentFile {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn chain(&self, base: &Path, cap: usize) -> Result<LoadedChain> {
        match &self.source {
            SourceSpec::Inline(file) => LoadedChain::from_file(file.clone(), cap),
            SourceSpec::Path(p) => {
                let path = if p.is_absolute() {
                    p.clone()
                } else {
                    base.parent().unwrap_or(Path::new(".")).join(p)
                };
                LoadedChain::load(&path, cap)
            }
        }
    }

    pub fn channel(&self, alphabet: usize) -> Result<MemorylessChannel> {
        match &self.channel {
            ChannelSpec::Bsc(q) => MemorylessChannel::bsc(*q),
            ChannelSpec::Matrix(rows) => MemorylessChannel::new(rows.clone()),
            ChannelSpec::Identity => MemorylessChannel::identity(alphabet),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_inline_experiment() {
        let text = r#"{
            "source": {"states": ["0", "1"], "transition": [[0.5, 0.5], [0.5, 0.5]]},
            "channel": {"bsc": 0.02},
            "T": 8, "tau": 0, "beta": 0.1, "D": 0.05, "rate": 0.5,
            "k_list": [32, 64], "trials": 100, "seed": 7
        }"#;
        let e: ExperimentFile = serde_json::from_str(text).unwrap();
        assert_eq!(e.params.block_len, 8);
        assert_eq!(e.params.batch_size, 100);
        assert!(matches!(e.source, SourceSpec::Inline(_)));
        assert!(matches!(e.channel, ChannelSpec::Bsc(q) if q == 0.02));
    }

    #[test]
    fn parses_path_source_and_matrix_channel() {
        let text = r#"{
            "source": "chain.json",
            "channel": {"matrix": [[1.0, 0.0], [0.0, 1.0]]},
            "T": 2, "tau": 1, "beta": 0.05, "D": 0.1, "rate": 0.2,
            "k_list": [4], "trials": 10, "seed": 1, "decoder": "min_distortion"
        }"#;
        let e: ExperimentFile = serde_json::from_str(text).unwrap();
        assert!(matches!(e.source, SourceSpec::Path(_)));
        assert_eq!(
            e.channel(2).unwrap(),
            MemorylessChannel::identity(2).unwrap()
        );
    }
}
