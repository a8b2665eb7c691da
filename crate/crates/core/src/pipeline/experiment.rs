use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    corpus_path, derive_seed, fresh_dir, load_corpus, model_path, read_file, read_labels, write_file, write_json,
    ExperimentKind, PipelineConfig, PipelineError, Provenance,
};
use crate::genre_clf::{score_generation_batch, BatchItem, ClassifierError, GenreClassifier, ScoreMatrix};
use crate::metrics::{groove_consistency, pip_score, pitch_class_entropy, uip_score, PresenceInput};
use crate::prompting::{
    build_genre_prompt, build_instrument_prompt, sample_seed_snippets, GenrePrompt, InstrumentCombo,
    InstrumentPrompt, PromptMode, Snippet,
};
use crate::score::{segment_body, segment_measures};
use crate::seqmodel::{sample, ModelError, NGramModel};
use crate::song::{parse_song, serialize_song, song_from_tokens, Song};
use crate::stats::{analyze, boxplot_csv, MetricGroups, StatsReport, WilcoxonOptions};
use crate::token::{GenreId, InstrumentId, Token};

/// One generated song and its metrics. Missing values are metrics that do
/// not apply (no pitched notes, a single measure, no prompted instruments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub song_id: String,
    /// Experiment kind.
    pub group: String,
    pub prompt_mode: PromptMode,
    pub combo_or_genre: String,
    pub pce: Option<f64>,
    pub gc: Option<f64>,
    pub pip: Option<f64>,
    pub uip: Option<f64>,
    pub status: String,
    pub generated_tokens: usize,
    pub song_seed: u64,
    pub config_hash: String,
    pub rng_seed: u64,
}

impl MetricRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "pce" => self.pce,
            "gc" => self.gc,
            "pip" => self.pip,
            "uip" => self.uip,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    #[serde(flatten)]
    provenance: Provenance,
    pub experiment: ExperimentKind,
    pub per_cell: usize,
    pub cells: BTreeMap<String, usize>,
    pub songs: usize,
    pub failed: usize,
    pub max_generated_tokens: usize,
    #[serde(skip)]
    pub rows: Vec<MetricRow>,
    #[serde(skip)]
    pub scores: Option<ScoreMatrix>,
}

struct Job {
    cell: String,
    song_id: String,
    mode: PromptMode,
    condition: String,
    prompt: Vec<Token>,
    prompted: BTreeSet<InstrumentId>,
    unconditional: bool,
    seed_label: String,
}

struct Outcome {
    row: MetricRow,
    song: Option<Song>,
    attempts: usize,
    failed_attempts: usize,
}

pub(crate) struct SongMetrics {
    pub pce: Option<f64>,
    pub gc: Option<f64>,
    pub pip: Option<f64>,
    pub uip: Option<f64>,
}

/// PCE and GC over the whole song; PIP and UIP over the continuation
/// unless the prompt is included.
pub(crate) fn song_metrics(
    song: &Song,
    prompt_body_len: usize,
    prompted: &BTreeSet<InstrumentId>,
    cfg: &PipelineConfig,
) -> Result<SongMetrics, PipelineError> {
    let view = segment_measures(song, &cfg.segment)?;
    let (pip, uip) = if prompted.is_empty() {
        (None, None)
    } else {
        let presence_view = if cfg.metrics.include_prompt {
            view.clone()
        } else {
            let skip = prompt_body_len.min(song.body.len());
            segment_body(&song.body[skip..], song.header.downtune, [], &cfg.segment)?
        };
        let input = PresenceInput::from_score(&presence_view, prompted);
        (pip_score(&input).ok(), uip_score(&input).ok())
    };
    Ok(SongMetrics {
        pce: pitch_class_entropy(&view).ok(),
        gc: groove_consistency(&view, cfg.metrics.gc_resolution).ok(),
        pip,
        uip,
    })
}

fn run_job(job: &Job, model: &NGramModel, cfg: &PipelineConfig, kind: &str) -> Result<Outcome, PipelineError> {
    let provenance = Provenance::of(cfg);
    let mut failed_attempts = 0;
    for attempt in 0..cfg.generation.max_attempts {
        let seed = derive_seed(cfg.rng_seed, &format!("{}/{attempt}", job.seed_label));
        let tokens = sample(model, &job.prompt, &cfg.generation_config(seed))?;
        let generated = tokens.len() - job.prompt.len();
        let song = song_from_tokens(tokens).map_err(ModelError::InvalidPrompt)?;
        // generated text must survive a round trip
        if parse_song(&serialize_song(&song)).ok().as_ref() != Some(&song) {
            failed_attempts += 1;
            continue;
        }
        let prompt_body = job.prompt.iter().position(|t| *t == Token::Start).map_or(0, |s| job.prompt.len() - s - 1);
        let m = song_metrics(&song, prompt_body, &job.prompted, cfg)?;
        let row = MetricRow {
            song_id: job.song_id.clone(),
            group: kind.to_string(),
            prompt_mode: job.mode,
            combo_or_genre: job.condition.clone(),
            status: "ok".into(),
            generated_tokens: generated,
            pce: m.pce,
            gc: m.gc,
            pip: m.pip,
            uip: m.uip,
            song_seed: seed,
            config_hash: provenance.config_hash.clone(),
            rng_seed: provenance.rng_seed,
        };
        return Ok(Outcome { row, song: Some(song), attempts: attempt + 1, failed_attempts });
    }
    let row = MetricRow {
        song_id: job.song_id.clone(),
        group: kind.to_string(),
        prompt_mode: job.mode,
        combo_or_genre: job.condition.clone(),
        status: "failed".into(),
        generated_tokens: 0,
        pce: None,
        gc: None,
        pip: None,
        uip: None,
        song_seed: derive_seed(cfg.rng_seed, &job.seed_label),
        config_hash: provenance.config_hash,
        rng_seed: provenance.rng_seed,
    };
    Ok(Outcome { row, song: None, attempts: cfg.generation.max_attempts, failed_attempts })
}

fn load_model(cfg: &PipelineConfig, name: &str) -> Result<NGramModel, PipelineError> {
    let path = model_path(cfg, name);
    if !path.exists() {
        return Err(PipelineError::Data(format!("model {} not found, run train first", path.display())));
    }
    Ok(NGramModel::load(&path)?)
}

fn instrument_jobs(cfg: &PipelineConfig) -> Result<Vec<Job>, PipelineError> {
    let mut jobs = Vec::new();
    for &combo in &cfg.experiment.combos {
        for &mode in &cfg.experiment.modes {
            let cell = format!("{combo}-{mode}");
            let prompt = build_instrument_prompt(&InstrumentPrompt::new(mode, combo))?;
            for i in 0..cfg.per_cell_instrument() {
                jobs.push(Job {
                    song_id: format!("{cell}-{i:04}"),
                    seed_label: format!("instrument/{cell}/{i}"),
                    cell: cell.clone(),
                    mode,
                    condition: combo.to_string(),
                    prompt: prompt.clone(),
                    prompted: combo.instruments().into_iter().collect(),
                    unconditional: mode == PromptMode::Unconditional,
                });
            }
        }
    }
    Ok(jobs)
}

fn genre_jobs(cfg: &PipelineConfig) -> Result<Vec<Job>, PipelineError> {
    let labels = read_labels(cfg)?;
    let corpus = load_corpus(&corpus_path(cfg, "plain"))?;
    let mut jobs = Vec::new();
    for genre in &cfg.experiment.genres {
        let pool: Vec<Song> = corpus
            .iter()
            .filter(|(name, _)| labels.get(name) == Some(genre))
            .map(|(_, s)| s.clone())
            .collect();
        if pool.is_empty() {
            return Err(PipelineError::Data(format!("genre {genre} has no admitted songs in the corpus")));
        }
        let snippets: Vec<Snippet> = sample_seed_snippets(
            &pool,
            cfg.experiment.snippets_per_genre,
            derive_seed(cfg.rng_seed, &format!("snippets/{genre}")),
            &cfg.segment,
        )?;
        for &mode in &cfg.experiment.modes {
            let cell = format!("{genre}-{mode}");
            for i in 0..cfg.per_cell_genre() {
                let snippet = &snippets[i % snippets.len()];
                let request = GenrePrompt {
                    mode,
                    genre: genre.clone(),
                    snippet: Some(snippet.clone()),
                    header: pool[snippet.source].header.clone(),
                };
                jobs.push(Job {
                    song_id: format!("{cell}-{i:04}"),
                    seed_label: format!("genre/{cell}/{i}"),
                    cell: cell.clone(),
                    mode,
                    condition: genre.to_string(),
                    prompt: build_genre_prompt(&request, &cfg.segment)?,
                    prompted: BTreeSet::new(),
                    unconditional: mode == PromptMode::Unconditional,
                });
            }
        }
    }
    Ok(jobs)
}

const MEAN_METRICS: [&str; 4] = ["pip", "uip", "pce", "gc"];

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn table1(rows: &[MetricRow], cfg: &PipelineConfig) -> String {
    let p = Provenance::of(cfg);
    let mut out = String::from("combo,prompt_mode,songs,failed,pip,uip,pce,gc,config_hash,rng_seed\n");
    let mut cells: Vec<(String, PromptMode)> = Vec::new();
    for combo in &cfg.experiment.combos {
        for mode in &cfg.experiment.modes {
            cells.push((combo.to_string(), *mode));
        }
    }
    for mode in &cfg.experiment.modes {
        cells.push(("all".into(), *mode));
    }
    for (combo, mode) in cells {
        let members: Vec<&MetricRow> =
            rows.iter().filter(|r| r.prompt_mode == mode && (combo == "all" || r.combo_or_genre == combo)).collect();
        let failed = members.iter().filter(|r| r.status != "ok").count();
        write!(out, "{combo},{mode},{},{failed}", members.len()).unwrap();
        for metric in MEAN_METRICS {
            write!(out, ",{}", fmt_opt(mean(members.iter().filter_map(|r| r.metric(metric))))).unwrap();
        }
        writeln!(out, ",{},{}", p.config_hash, p.rng_seed).unwrap();
    }
    out
}

#[derive(Debug, Clone, Serialize)]
struct StatsFile {
    #[serde(flatten)]
    provenance: Provenance,
    experiment: String,
    grouping: &'static str,
    reports: Vec<StatsReport>,
    skipped: Vec<BTreeMap<&'static str, String>>,
}

pub fn wilcoxon_options(cfg: &PipelineConfig) -> WilcoxonOptions {
    WilcoxonOptions { mode: cfg.stats.wilcoxon_mode, continuity_correction: cfg.stats.continuity_correction }
}

/// Runs the omnibus and pairwise analysis for each metric over labelled
/// groups, recording metrics that cannot be analysed.
pub fn analyze_metrics(
    metrics: &[&str],
    groups_of: impl Fn(&str) -> Vec<(String, Vec<f64>)>,
    cfg: &PipelineConfig,
) -> (Vec<StatsReport>, Vec<BTreeMap<&'static str, String>>) {
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for metric in metrics {
        let result = MetricGroups::new(groups_of(metric))
            .and_then(|g| analyze(metric, &g, cfg.stats.alpha, wilcoxon_options(cfg)));
        match result {
            Ok(r) => reports.push(r),
            Err(e) => skipped.push(BTreeMap::from([("metric", metric.to_string()), ("reason", e.to_string())])),
        }
    }
    (reports, skipped)
}

pub(crate) fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).expect("row serializes");
    }
    String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricRow>, PipelineError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::Data(format!("metrics csv: {e}")))
}

/// Generates every cell of one experiment, scores it, and writes songs,
/// metrics, statistics and the summary table.
pub fn run_experiment(cfg: &PipelineConfig, kind: ExperimentKind) -> Result<ExperimentSummary, PipelineError> {
    cfg.validate()?;
    let (jobs, conditioned_name) = match kind {
        ExperimentKind::Instrument => (instrument_jobs(cfg)?, "instrument"),
        ExperimentKind::Genre => (genre_jobs(cfg)?, "genre"),
    };
    let classifier = match kind {
        ExperimentKind::Genre => {
            let path = model_path(cfg, "classifier");
            if !path.exists() {
                return Err(PipelineError::Data(format!(
                    "classifier {} not found, train needs enough labelled songs per genre",
                    path.display()
                )));
            }
            Some(GenreClassifier::from_json(&read_file(&path)?)?)
        }
        ExperimentKind::Instrument => None,
    };
    let conditioned = load_model(cfg, conditioned_name)?;
    let unconditional = load_model(cfg, "unconditional")?;
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|job| run_job(job, if job.unconditional { &unconditional } else { &conditioned }, cfg, kind.name()))
        .collect::<Result<_, _>>()?;

    let mut cells: BTreeMap<String, usize> = BTreeMap::new();
    let mut attempts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (job, outcome) in jobs.iter().zip(&outcomes) {
        *cells.entry(job.cell.clone()).or_default() += 1;
        let entry = attempts.entry(&job.cell).or_default();
        entry.0 += outcome.attempts;
        entry.1 += outcome.failed_attempts;
    }
    for (cell, (total, failed)) in &attempts {
        if 2 * failed > *total {
            return Err(PipelineError::Data(format!(
                "cell {cell} aborted: {failed} of {total} generation attempts were unparseable"
            )));
        }
    }

    let dir = cfg.output_dir.join("experiments").join(kind.name());
    let songs_dir = dir.join("songs");
    fresh_dir(&songs_dir)?;
    for outcome in &outcomes {
        if let Some(song) = &outcome.song {
            write_file(&songs_dir.join(format!("{}.txt", outcome.row.song_id)), &serialize_song(song))?;
        }
    }
    let mut rows: Vec<MetricRow> = outcomes.iter().map(|o| o.row.clone()).collect();

    let mut scores = None;
    if let Some(model) = &classifier {
        let genres: Vec<GenreId> = rows.iter().map(|r| GenreId::new(r.combo_or_genre.as_str())).collect::<Result<_, _>>()
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        let mut batch = Vec::new();
        for ((outcome, genre), row) in outcomes.iter().zip(&genres).zip(rows.iter_mut()) {
            let Some(song) = &outcome.song else { continue };
            match model.classify(song) {
                Ok(_) => batch.push(BatchItem { song_id: &outcome.row.song_id, genre, mode: row.prompt_mode, song }),
                Err(ClassifierError::EmptyBody) => row.status = "unscored".into(),
                Err(e) => return Err(e.into()),
            }
        }
        if !batch.is_empty() {
            let matrix = score_generation_batch(model, &batch)?;
            let p = Provenance::of(cfg);
            write_file(
                &dir.join("table2.csv"),
                &matrix.to_csv(&[("config_hash", p.config_hash.clone()), ("rng_seed", p.rng_seed.to_string())]),
            )?;
            scores = Some(matrix);
        }
    } else {
        write_file(&dir.join("table1.csv"), &table1(&rows, cfg))?;
    }
    write_file(&dir.join("metrics.csv"), &metrics_csv(&rows))?;

    let metric_names: &[&str] = match kind {
        ExperimentKind::Instrument => &["pip", "uip", "pce", "gc"],
        ExperimentKind::Genre => &["pce", "gc"],
    };
    let (reports, skipped) = analyze_metrics(
        metric_names,
        |metric| {
            cfg.experiment
                .modes
                .iter()
                .map(|mode| {
                    let values = rows.iter().filter(|r| r.prompt_mode == *mode).filter_map(|r| r.metric(metric)).collect();
                    (mode.to_string(), values)
                })
                .collect()
        },
        cfg,
    );
    write_file(&dir.join("boxplots.csv"), &boxplot_csv(&reports))?;
    write_json(
        &dir.join("stats.json"),
        &StatsFile { provenance: Provenance::of(cfg), experiment: kind.name().into(), grouping: "prompt_mode", reports, skipped },
    )?;

    let summary = ExperimentSummary {
        provenance: Provenance::of(cfg),
        experiment: kind,
        per_cell: match kind {
            ExperimentKind::Instrument => cfg.per_cell_instrument(),
            ExperimentKind::Genre => cfg.per_cell_genre(),
        },
        cells,
        songs: rows.len(),
        failed: rows.iter().filter(|r| r.status == "failed").count(),
        max_generated_tokens: rows.iter().map(|r| r.generated_tokens).max().unwrap_or(0),
        rows,
        scores,
    };
    write_json(&dir.join("run.json"), &summary)?;
    Ok(summary)
}

/// Combination ids used in song ids, for callers that enumerate cells.
pub fn cell_ids(cfg: &PipelineConfig, kind: ExperimentKind) -> Vec<String> {
    let conditions: Vec<String> = match kind {
        ExperimentKind::Instrument => cfg.experiment.combos.iter().map(InstrumentCombo::to_string).collect(),
        ExperimentKind::Genre => cfg.experiment.genres.iter().map(GenreId::to_string).collect(),
    };
    conditions
        .iter()
        .flat_map(|c| cfg.experiment.modes.iter().map(move |m| format!("{c}-{m}")))
        .collect()
}
