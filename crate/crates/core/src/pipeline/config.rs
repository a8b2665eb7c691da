use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::prompting::{InstrumentCombo, PromptMode};
use crate::score::SegmentConfig;
use crate::seqmodel::{GenerationConfig, DEFAULT_LAMBDA, DEFAULT_ORDER};
use crate::stats::WilcoxonMode;
use crate::token::GenreId;

pub const PAPER_SCALE_INSTRUMENT: usize = 150;
pub const PAPER_SCALE_GENRE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_dir: PathBuf,
    pub output_dir: PathBuf,
    pub rng_seed: u64,
    /// Raises per-cell counts to 150 (instrument) and 20 (genre).
    pub paper_scale: bool,
    pub model: ModelSection,
    pub generation: GenerationSection,
    pub experiment: ExperimentSection,
    pub metrics: MetricsSection,
    pub stats: StatsSection,
    pub preprocess: PreprocessSection,
    pub classifier: ClassifierSection,
    pub segment: SegmentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_dir: PathBuf::from("corpus"),
            output_dir: PathBuf::from("out"),
            rng_seed: 0,
            paper_scale: false,
            model: ModelSection::default(),
            generation: GenerationSection::default(),
            experiment: ExperimentSection::default(),
            metrics: MetricsSection::default(),
            stats: StatsSection::default(),
            preprocess: PreprocessSection::default(),
            classifier: ClassifierSection::default(),
            segment: SegmentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub order: usize,
    pub smoothing: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { order: DEFAULT_ORDER, smoothing: DEFAULT_LAMBDA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub max_tokens: usize,
    pub temperature: f64,
    pub top_k: usize,
    /// Generation attempts per song before it is recorded as failed.
    pub max_attempts: usize,
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection { max_tokens: 1024, temperature: 1.0, top_k: 5, max_attempts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub per_cell_instrument: usize,
    pub per_cell_genre: usize,
    /// Distinct two-measure prompts drawn per genre; songs cycle through them.
    pub snippets_per_genre: usize,
    pub combos: Vec<InstrumentCombo>,
    pub genres: Vec<GenreId>,
    pub modes: Vec<PromptMode>,
    /// Which experiment supplies the prompt-mode groups of the baseline analysis.
    pub baseline_source: ExperimentKind,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            per_cell_instrument: 10,
            per_cell_genre: 10,
            snippets_per_genre: 5,
            combos: InstrumentCombo::ALL.to_vec(),
            genres: GenreId::experiment_genres(),
            modes: PromptMode::ALL.to_vec(),
            baseline_source: ExperimentKind::Genre,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Instrument,
    Genre,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Instrument => "instrument",
            ExperimentKind::Genre => "genre",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "instrument" | "inst" => Ok(ExperimentKind::Instrument),
            "genre" => Ok(ExperimentKind::Genre),
            _ => Err(PipelineError::Config(format!("unknown experiment kind {s}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub gc_resolution: u32,
    /// Count the prompt's own measures in PIP and UIP.
    pub include_prompt: bool,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { gc_resolution: crate::metrics::DEFAULT_GROOVE_RESOLUTION, include_prompt: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub alpha: f64,
    pub continuity_correction: bool,
    pub wilcoxon_mode: WilcoxonMode,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection { alpha: 0.05, continuity_correction: true, wilcoxon_mode: WilcoxonMode::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    /// Relative to the corpus directory. CSV `path,genre` or a JSON object.
    pub manifest: PathBuf,
    /// Genres need strictly more songs than this to be admitted.
    pub min_genre_count: usize,
    pub max_unparseable_fraction: f64,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            manifest: PathBuf::from("manifest.csv"),
            min_genre_count: 200,
            max_unparseable_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub smoothing: f64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection { smoothing: 1.0 }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative directories resolve against the
    /// file's own directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = PipelineConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for dir in [&mut cfg.corpus_dir, &mut cfg.output_dir] {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: &str| Err(PipelineError::Config(msg.to_string()));
        if self.model.order == 0 {
            return fail("model.order must be at least 1");
        }
        if self.model.smoothing.is_nan() || self.model.smoothing <= 0.0 {
            return fail("model.smoothing must be positive");
        }
        if self.generation.max_tokens == 0 || self.generation.top_k == 0 || self.generation.max_attempts == 0 {
            return fail("generation.max_tokens, top_k and max_attempts must be at least 1");
        }
        if !(self.generation.temperature > 0.0 && self.generation.temperature.is_finite()) {
            return fail("generation.temperature must be positive");
        }
        if self.experiment.per_cell_instrument == 0 || self.experiment.per_cell_genre == 0 {
            return fail("per-cell counts must be at least 1");
        }
        if self.experiment.snippets_per_genre == 0 {
            return fail("experiment.snippets_per_genre must be at least 1");
        }
        if self.experiment.modes.is_empty() {
            return fail("experiment.modes must not be empty");
        }
        if self.metrics.gc_resolution == 0 {
            return fail("metrics.gc_resolution must be at least 1");
        }
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) {
            return fail("stats.alpha must be in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.preprocess.max_unparseable_fraction) {
            return fail("preprocess.max_unparseable_fraction must be in [0, 1]");
        }
        if self.classifier.smoothing.is_nan() || self.classifier.smoothing <= 0.0 {
            return fail("classifier.smoothing must be positive");
        }
        self.segment.measure_length_ticks()?;
        Ok(())
    }

    pub fn per_cell_instrument(&self) -> usize {
        if self.paper_scale {
            PAPER_SCALE_INSTRUMENT
        } else {
            self.experiment.per_cell_instrument
        }
    }

    pub fn per_cell_genre(&self) -> usize {
        if self.paper_scale {
            PAPER_SCALE_GENRE
        } else {
            self.experiment.per_cell_genre
        }
    }

    /// Hash of every setting except the two directories, so relocating a
    /// run does not change it.
    pub fn generation_config(&self, rng_seed: u64) -> GenerationConfig {
        GenerationConfig {
            max_tokens: self.generation.max_tokens,
            temperature: self.generation.temperature,
            top_k: self.generation.top_k,
            rng_seed,
        }
    }

    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.corpus_dir = PathBuf::new();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

/// Seed for one labelled unit of work, independent of scheduling.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = PipelineConfig::from_toml("rng_seed = 7\n[generation]\ntop_k = 3\n").unwrap();
        assert_eq!((partial.rng_seed, partial.generation.top_k, partial.generation.max_tokens), (7, 3, 1024));
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
        assert!(PipelineConfig::from_toml("[stats]\nalpha = 2.0").is_err());
    }

    #[test]
    fn hash_ignores_directories() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.output_dir = "/elsewhere".into();
        assert_eq!(a.config_hash(), b.config_hash());
        b.rng_seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn paper_scale_counts() {
        let mut cfg = PipelineConfig::default();
        assert_eq!((cfg.per_cell_instrument(), cfg.per_cell_genre()), (10, 10));
        cfg.paper_scale = true;
        assert_eq!((cfg.per_cell_instrument(), cfg.per_cell_genre()), (150, 20));
    }

    #[test]
    fn seeds_depend_on_label() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    }
}
