//! Bag-of-tokens genre classifier used to score genre-conditioned output.
//!
//! A multinomial naive Bayes model over body-token unigrams plus
//! pitch-class bigrams of consecutive pitched notes. Header and control
//! tokens never reach the features, so a genre token in the input cannot
//! leak its label.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::PromptMode;
use crate::score::Tuning;
use crate::song::Song;
use crate::token::{GenreId, Token};

pub const MIN_SONGS_PER_CLASS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifierError {
    #[error("insufficient class data: {0}")]
    InsufficientClassData(String),
    #[error("song body has no tokens after stripping header and control tokens")]
    EmptyBody,
    #[error("empty batch")]
    EmptyBatch,
    #[error("song {song_id}: {source}")]
    Song {
        song_id: String,
        #[source]
        source: Box<ClassifierError>,
    },
    #[error("classifier file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub lambda: f64,
    pub split_seed: u64,
    pub tuning: Tuning,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { lambda: 1.0, split_seed: 0, tuning: Tuning::default() }
    }
}

/// Feature strings of a song: body-token unigrams plus `pc:a>b` bigrams.
pub fn features(song: &Song, tuning: &Tuning) -> Vec<String> {
    let mut out = Vec::new();
    let mut previous: Option<i32> = None;
    for token in &song.body {
        if token.is_control() || token.is_header() {
            continue;
        }
        out.push(token.to_string());
        if let Token::Note { instrument, string, fret } = token {
            let pc = tuning.pitch(instrument, *string, *fret, song.header.downtune).rem_euclid(12);
            if let Some(prev) = previous {
                out.push(format!("pc:{prev}>{pc}"));
            }
            previous = Some(pc);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreClassifier {
    pub classes: Vec<GenreId>,
    log_priors: Vec<f64>,
    log_likelihoods: BTreeMap<String, Vec<f64>>,
    tuning: Tuning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub split_seed: u64,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
}

struct Split<'a> {
    train: Vec<(&'a Song, usize)>,
    validation: Vec<(&'a Song, usize)>,
    test: Vec<(&'a Song, usize)>,
}

/// Stratified 80/10/10 split, shuffled per class with `seed`.
fn split<'a>(corpus: &'a [(Song, GenreId)], classes: &[GenreId], seed: u64) -> Split<'a> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Split { train: Vec::new(), validation: Vec::new(), test: Vec::new() };
    for (class, genre) in classes.iter().enumerate() {
        let mut members: Vec<&Song> = corpus.iter().filter(|(_, g)| g == genre).map(|(s, _)| s).collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = (n as f64 * 0.8).round() as usize;
        let n_val = (n as f64 * 0.1).round() as usize;
        for (i, song) in members.into_iter().enumerate() {
            let bucket = if i < n_train {
                &mut out.train
            } else if i < n_train + n_val {
                &mut out.validation
            } else {
                &mut out.test
            };
            bucket.push((song, class));
        }
    }
    out
}

pub fn train_classifier(
    corpus: &[(Song, GenreId)],
    cfg: &ClassifierConfig,
) -> Result<(GenreClassifier, ClassifierReport), ClassifierError> {
    let classes: Vec<GenreId> = corpus.iter().map(|(_, g)| g.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(ClassifierError::InsufficientClassData(format!("{} class(es), need at least 2", classes.len())));
    }
    for genre in &classes {
        let n = corpus.iter().filter(|(_, g)| g == genre).count();
        if n < MIN_SONGS_PER_CLASS {
            return Err(ClassifierError::InsufficientClassData(format!(
                "{genre} has {n} songs, need {MIN_SONGS_PER_CLASS}"
            )));
        }
    }
    let parts = split(corpus, &classes, cfg.split_seed);

    let k = classes.len();
    let mut class_docs = vec![0usize; k];
    let mut class_totals = vec![0u64; k];
    let mut counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for &(song, class) in &parts.train {
        class_docs[class] += 1;
        for feature in features(song, &cfg.tuning) {
            counts.entry(feature).or_insert_with(|| vec![0; k])[class] += 1;
            class_totals[class] += 1;
        }
    }
    let vocab = counts.len() as f64;
    let log_likelihoods = counts
        .into_iter()
        .map(|(feature, per_class)| {
            let logs = per_class
                .iter()
                .zip(&class_totals)
                .map(|(&c, &total)| ((c as f64 + cfg.lambda) / (total as f64 + cfg.lambda * vocab)).ln())
                .collect();
            (feature, logs)
        })
        .collect();
    let n_train = parts.train.len() as f64;
    let model = GenreClassifier {
        log_priors: class_docs.iter().map(|&d| (d as f64 / n_train).ln()).collect(),
        classes,
        log_likelihoods,
        tuning: cfg.tuning.clone(),
    };

    let accuracy = |set: &[(&Song, usize)]| -> f64 {
        if set.is_empty() {
            return f64::NAN;
        }
        let hits = set
            .iter()
            .filter(|(song, class)| model.predict(song).ok() == Some(*class))
            .count();
        hits as f64 / set.len() as f64
    };
    let report = ClassifierReport {
        split_seed: cfg.split_seed,
        train_size: parts.train.len(),
        validation_size: parts.validation.len(),
        test_size: parts.test.len(),
        validation_accuracy: accuracy(&parts.validation),
        test_accuracy: accuracy(&parts.test),
    };
    Ok((model, report))
}

impl GenreClassifier {
    /// Softmax posterior over [`GenreClassifier::classes`]. Features never
    /// seen in training carry no evidence.
    pub fn classify(&self, song: &Song) -> Result<Vec<f64>, ClassifierError> {
        let feats = features(song, &self.tuning);
        if feats.is_empty() {
            return Err(ClassifierError::EmptyBody);
        }
        let mut logits = self.log_priors.clone();
        for feature in feats {
            if let Some(logs) = self.log_likelihoods.get(&feature) {
                for (l, x) in logits.iter_mut().zip(logs) {
                    *l += x;
                }
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / total).collect())
    }

    /// Index of the most probable class.
    pub fn predict(&self, song: &Song) -> Result<usize, ClassifierError> {
        let scores = self.classify(song)?;
        Ok(argmax(&scores))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Stored { format: "tabcond-genre-nb".into(), version: 1, model: self.clone() })
            .expect("classifier serializes")
    }

    pub fn from_json(text: &str) -> Result<GenreClassifier, ClassifierError> {
        let stored: Stored = serde_json::from_str(text).map_err(|e| ClassifierError::Format(e.to_string()))?;
        if stored.version != 1 {
            return Err(ClassifierError::Format(format!("unsupported version {}", stored.version)));
        }
        Ok(stored.model)
    }
}

#[derive(Serialize, Deserialize)]
struct Stored {
    format: String,
    version: u32,
    model: GenreClassifier,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub struct BatchItem<'a> {
    pub song_id: &'a str,
    pub genre: &'a GenreId,
    pub mode: PromptMode,
    pub song: &'a Song,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub genre: GenreId,
    pub mode: PromptMode,
    pub songs: usize,
    pub mean_scores: Vec<f64>,
}

impl ScoreRow {
    /// Whether the intended genre holds the largest mean score.
    pub fn intended_is_max(&self, classes: &[GenreId]) -> bool {
        classes
            .iter()
            .position(|c| *c == self.genre)
            .is_some_and(|i| self.mean_scores.iter().all(|&s| s <= self.mean_scores[i]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub classes: Vec<GenreId>,
    pub rows: Vec<ScoreRow>,
}

impl ScoreMatrix {
    pub fn row(&self, genre: &GenreId, mode: PromptMode) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.genre == *genre && r.mode == mode)
    }

    /// Rows are intended genre by prompt mode, columns are class scores.
    pub fn to_csv(&self, provenance: &[(&str, String)]) -> String {
        let mut out = String::from("intended_genre,prompt_mode,songs");
        for class in &self.classes {
            write!(out, ",{class}").unwrap();
        }
        for (key, _) in provenance {
            write!(out, ",{key}").unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            write!(out, "{},{},{}", row.genre, row.mode, row.songs).unwrap();
            for s in &row.mean_scores {
                write!(out, ",{s:.6}").unwrap();
            }
            for (_, value) in provenance {
                write!(out, ",{value}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Mean softmax score per (intended genre, prompt mode). Independent of
/// batch order: each row's vectors are sorted before summation.
pub fn score_generation_batch(
    model: &GenreClassifier,
    batch: &[BatchItem<'_>],
) -> Result<ScoreMatrix, ClassifierError> {
    if batch.is_empty() {
        return Err(ClassifierError::EmptyBatch);
    }
    let mut cells: BTreeMap<(GenreId, PromptMode), Vec<Vec<f64>>> = BTreeMap::new();
    for item in batch {
        let scores = model.classify(item.song).map_err(|e| ClassifierError::Song {
            song_id: item.song_id.to_string(),
            source: Box::new(e),
        })?;
        cells.entry((item.genre.clone(), item.mode)).or_default().push(scores);
    }
    let k = model.classes.len();
    let rows = cells
        .into_iter()
        .map(|((genre, mode), mut vectors)| {
            vectors.sort_by(|a, b| {
                a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
            });
            let n = vectors.len();
            let mut mean = vec![0.0; k];
            for v in &vectors {
                for (m, x) in mean.iter_mut().zip(v) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            ScoreRow { genre, mode, songs: n, mean_scores: mean }
        })
        .collect();
    Ok(ScoreMatrix { classes: model.classes.clone(), rows })
}
