use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    corpus_files, corpus_path, fresh_dir, load_corpus, model_path, read_file, song_name, write_file, write_json,
    PipelineConfig, PipelineError, Provenance,
};
use crate::conditioning::{admit_genres, inject_genre_token, inject_instrument_tokens, CorpusStats};
use crate::genre_clf::{train_classifier, ClassifierConfig, ClassifierReport};
use crate::seqmodel::{train, NGramModel};
use crate::song::{parse_song, serialize_song, Song};
use crate::token::GenreId;

#[derive(Debug, Clone, Serialize)]
pub struct PreprocessSummary {
    #[serde(flatten)]
    provenance: Provenance,
    pub files: usize,
    pub parsed: usize,
    pub failed: usize,
    pub stats: CorpusStats,
    pub admitted_genres: BTreeSet<GenreId>,
    pub diagnostics: usize,
}

struct Diagnostic {
    song: String,
    stage: &'static str,
    reason: String,
}

/// First genre of a `;` or `|` separated label list.
fn primary_label(label: &str) -> &str {
    label.split([';', '|']).next().unwrap_or("").trim()
}

fn manifest_key(path: &str) -> String {
    song_name(Path::new(path.trim()))
}

/// Raw labels keyed by song name. A missing manifest file means no labels.
fn read_manifest(path: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = read_file(path)?;
    let bad = |msg: String| PipelineError::Data(format!("{}: {msg}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Manifest {
            Map(BTreeMap<String, String>),
            List(Vec<Entry>),
        }
        #[derive(Deserialize)]
        struct Entry {
            path: String,
            genre: String,
        }
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let pairs: Vec<(String, String)> = match manifest {
            Manifest::Map(map) => map.into_iter().collect(),
            Manifest::List(list) => list.into_iter().map(|e| (e.path, e.genre)).collect(),
        };
        return Ok(pairs.into_iter().map(|(p, g)| (manifest_key(&p), g)).collect());
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let column = |name: &str, fallback: usize| headers.iter().position(|h| h == name).unwrap_or(fallback);
    let (path_col, genre_col) = (column("path", 0), column("genre", 1));
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let (Some(p), Some(g)) = (record.get(path_col), record.get(genre_col)) else {
            return Err(bad(format!("short row {:?}", record)));
        };
        out.insert(manifest_key(p), g.to_string());
    }
    Ok(out)
}

/// Parses the raw corpus, writes the plain, instrument-conditioned and
/// genre-conditioned corpora, the corpus statistics and a diagnostics list.
/// Fails when too many files are unparseable, after writing diagnostics.
pub fn run_preprocess(cfg: &PipelineConfig) -> Result<PreprocessSummary, PipelineError> {
    cfg.validate()?;
    if !cfg.corpus_dir.is_dir() {
        return Err(PipelineError::Data(format!("corpus directory {} does not exist", cfg.corpus_dir.display())));
    }
    let manifest = read_manifest(&cfg.corpus_dir.join(&cfg.preprocess.manifest))?;
    let files = corpus_files(&cfg.corpus_dir)?;
    if files.is_empty() {
        return Err(PipelineError::Data(format!("no .txt token files in {}", cfg.corpus_dir.display())));
    }
    let parsed: Vec<(String, Result<Song, String>)> = files
        .par_iter()
        .map(|path| {
            let result = read_file(path).map_err(|e| e.to_string()).and_then(|text| parse_song(&text).map_err(|e| e.to_string()));
            (song_name(path), result)
        })
        .collect();

    let mut diagnostics = Vec::new();
    let mut songs: Vec<(String, Song, Option<GenreId>)> = Vec::new();
    for (name, result) in parsed {
        match result {
            Ok(song) => {
                let label = match manifest.get(&name) {
                    Some(raw) => match GenreId::normalize(primary_label(raw)) {
                        Ok(g) => Some(g),
                        Err(e) => {
                            diagnostics.push(Diagnostic { song: name.clone(), stage: "label", reason: e.to_string() });
                            None
                        }
                    },
                    None => song.control.genre.clone(),
                };
                songs.push((name, song.without_control(), label));
            }
            Err(reason) => diagnostics.push(Diagnostic { song: name, stage: "parse", reason }),
        }
    }
    let failed = files.len() - songs.len();

    let mut stats = CorpusStats::default();
    for (_, song, label) in &songs {
        stats.record(song, label.as_ref());
    }
    let admitted = admit_genres(&stats, cfg.preprocess.min_genre_count);

    let mut plain = Vec::new();
    let mut inst = Vec::new();
    let mut genre = Vec::new();
    let mut labels = String::from("song,genre,admitted\n");
    for (name, song, label) in &songs {
        plain.push((name, song.clone()));
        inst.push((
            name,
            inject_instrument_tokens(song).unwrap_or_else(|e| {
                diagnostics.push(Diagnostic { song: name.clone(), stage: "instruments", reason: e.to_string() });
                song.clone()
            }),
        ));
        genre.push((
            name,
            match label {
                Some(g) => inject_genre_token(song, g, &admitted).unwrap_or_else(|_| song.clone()),
                None => song.clone(),
            },
        ));
        if let Some(g) = label {
            writeln!(labels, "{name},{g},{}", admitted.contains(g)).unwrap();
        }
    }
    for (variant, corpus) in [("plain", &plain), ("inst", &inst), ("genre", &genre)] {
        let dir = corpus_path(cfg, variant);
        fresh_dir(&dir)?;
        for (name, song) in corpus {
            write_file(&dir.join(format!("{name}.txt")), &serialize_song(song))?;
        }
    }

    let pre = cfg.output_dir.join("preprocess");
    write_file(&pre.join("labels.csv"), &labels)?;
    let mut diag = String::from("song,stage,reason\n");
    for d in &diagnostics {
        writeln!(diag, "{},{},\"{}\"", d.song, d.stage, d.reason.replace('"', "'")).unwrap();
    }
    write_file(&pre.join("diagnostics.csv"), &diag)?;
    let summary = PreprocessSummary {
        provenance: Provenance::of(cfg),
        files: files.len(),
        parsed: songs.len(),
        failed,
        stats,
        admitted_genres: admitted,
        diagnostics: diagnostics.len(),
    };
    write_json(&pre.join("stats.json"), &summary)?;

    let fraction = failed as f64 / files.len() as f64;
    if fraction > cfg.preprocess.max_unparseable_fraction {
        return Err(PipelineError::Data(format!(
            "{failed} of {} files unparseable ({:.1}% > {:.1}%), see {}",
            files.len(),
            100.0 * fraction,
            100.0 * cfg.preprocess.max_unparseable_fraction,
            pre.join("diagnostics.csv").display()
        )));
    }
    Ok(summary)
}

/// Admitted genre labels written by preprocessing.
pub fn read_labels(cfg: &PipelineConfig) -> Result<BTreeMap<String, GenreId>, PipelineError> {
    let path = cfg.output_dir.join("preprocess").join("labels.csv");
    let text = read_file(&path)?;
    let mut out = BTreeMap::new();
    for line in text.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if let [song, genre, "true"] = parts[..] {
            let genre = GenreId::new(genre).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
            out.insert(song.to_string(), genre);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    #[serde(flatten)]
    provenance: Provenance,
    pub models: BTreeMap<String, ModelInfo>,
    pub classifier: Result<ClassifierReport, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub songs: usize,
    pub vocabulary: usize,
    pub order: usize,
}

pub fn train_model_on(dir: &Path, cfg: &PipelineConfig) -> Result<(NGramModel, usize), PipelineError> {
    let corpus = load_corpus(dir)?;
    let sequences: Vec<_> = corpus.iter().map(|(_, s)| s.tokens()).collect();
    Ok((train(&sequences, cfg.model.order, cfg.model.smoothing)?, corpus.len()))
}

/// Trains the unconditional, instrument and genre models plus the genre
/// classifier. A classifier that cannot be trained is reported, not fatal.
pub fn run_train(cfg: &PipelineConfig) -> Result<TrainSummary, PipelineError> {
    cfg.validate()?;
    let variants = [("unconditional", "plain"), ("instrument", "inst"), ("genre", "genre")];
    let trained: Vec<(NGramModel, usize)> = variants
        .par_iter()
        .map(|(_, corpus)| train_model_on(&corpus_path(cfg, corpus), cfg))
        .collect::<Result<_, _>>()?;
    let models_dir = cfg.output_dir.join("models");
    std::fs::create_dir_all(&models_dir).map_err(|e| PipelineError::io(&models_dir, e))?;
    let mut models = BTreeMap::new();
    for ((name, _), (model, songs)) in variants.iter().zip(&trained) {
        model.save(&model_path(cfg, name))?;
        models.insert(
            name.to_string(),
            ModelInfo { songs: *songs, vocabulary: crate::seqmodel::LanguageModel::vocabulary(model).len(), order: model.order() },
        );
    }

    let labels = read_labels(cfg)?;
    let wanted: BTreeSet<&GenreId> = cfg.experiment.genres.iter().collect();
    let labelled: Vec<(Song, GenreId)> = load_corpus(&corpus_path(cfg, "plain"))?
        .into_iter()
        .filter_map(|(name, song)| labels.get(&name).filter(|g| wanted.contains(g)).map(|g| (song, g.clone())))
        .collect();
    let clf_cfg = ClassifierConfig {
        lambda: cfg.classifier.smoothing,
        split_seed: super::derive_seed(cfg.rng_seed, "classifier/split"),
        tuning: cfg.segment.tuning.clone(),
    };
    let classifier = match train_classifier(&labelled, &clf_cfg) {
        Ok((model, report)) => {
            write_file(&model_path(cfg, "classifier"), &model.to_json())?;
            Ok(report)
        }
        Err(e) => {
            let path = model_path(cfg, "classifier");
            if path.exists() {
                std::fs::remove_file(&path).map_err(|e| PipelineError::io(&path, e))?;
            }
            Err(e.to_string())
        }
    };
    let summary = TrainSummary { provenance: Provenance::of(cfg), models, classifier };
    write_json(&cfg.output_dir.join("models").join("train.json"), &summary)?;
    Ok(summary)
}
