use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{analyze_metrics, read_metrics_csv, song_metrics, wilcoxon_options};
use super::{
    corpus_path, derive_seed, fresh_dir, load_corpus, read_file, write_file, write_json, PipelineConfig,
    PipelineError, Provenance,
};
use crate::metrics::{randomize_pitch, randomize_rhythm};
use crate::song::{serialize_song, Song};
use crate::stats::{boxplot_summary, boxplot_csv, wilcoxon_rank_sum, StatsReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub song_id: String,
    pub group: String,
    pub pce: Option<f64>,
    pub gc: Option<f64>,
    pub config_hash: String,
    pub rng_seed: u64,
}

/// Median comparison of a randomized corpus against the source corpus.
#[derive(Debug, Clone, Serialize)]
pub struct OrderingCheck {
    pub metric: String,
    pub expected: String,
    pub median_random: f64,
    pub median_groundtruth: f64,
    pub p: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineSummary {
    #[serde(flatten)]
    provenance: Provenance,
    pub source_experiment: Option<String>,
    pub songs: usize,
    pub checks: Vec<OrderingCheck>,
    pub reports: Vec<StatsReport>,
    pub skipped: Vec<BTreeMap<&'static str, String>>,
}

fn values(rows: &[BaselineRow], group: &str, metric: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.group == group)
        .filter_map(|r| if metric == "pce" { r.pce } else { r.gc })
        .collect()
}

fn check(rows: &[BaselineRow], metric: &str, group: &str, above: bool, cfg: &PipelineConfig) -> Option<OrderingCheck> {
    let random = values(rows, group, metric);
    let truth = values(rows, "groundtruth", metric);
    let median_random = boxplot_summary(&random).ok()?.median;
    let median_groundtruth = boxplot_summary(&truth).ok()?.median;
    let p = wilcoxon_rank_sum(&random, &truth, wilcoxon_options(cfg)).ok()?.p_two_sided;
    let holds = if above { median_random > median_groundtruth } else { median_random < median_groundtruth };
    Some(OrderingCheck {
        metric: metric.into(),
        expected: format!("{group} median {} groundtruth", if above { "above" } else { "below" }),
        median_random,
        median_groundtruth,
        p,
        holds,
    })
}

/// Writes pitch- and rhythm-randomized copies of the plain corpus and
/// compares PCE and GC across the prompt modes of a finished experiment,
/// the source corpus, and the randomized corpus.
pub fn run_baselines(cfg: &PipelineConfig) -> Result<BaselineSummary, PipelineError> {
    cfg.validate()?;
    let corpus = load_corpus(&corpus_path(cfg, "plain"))?;
    if corpus.is_empty() {
        return Err(PipelineError::Data("plain corpus is empty, run preprocess first".into()));
    }
    let p = Provenance::of(cfg);
    let randomized: Vec<(Song, Song)> = corpus
        .par_iter()
        .map(|(name, song)| {
            let pitch = randomize_pitch(song, derive_seed(cfg.rng_seed, &format!("baseline/pitch/{name}")));
            let rhythm = randomize_rhythm(
                song,
                derive_seed(cfg.rng_seed, &format!("baseline/rhythm/{name}")),
                &cfg.segment,
                cfg.metrics.gc_resolution,
            )?;
            Ok((pitch, rhythm))
        })
        .collect::<Result<_, PipelineError>>()?;

    let dir = cfg.output_dir.join("baselines");
    for sub in ["random_pitch", "random_rhythm"] {
        fresh_dir(&dir.join(sub))?;
    }
    let none = BTreeSet::new();
    let mut rows = Vec::new();
    for ((name, song), (pitch, rhythm)) in corpus.iter().zip(&randomized) {
        write_file(&dir.join("random_pitch").join(format!("{name}.txt")), &serialize_song(pitch))?;
        write_file(&dir.join("random_rhythm").join(format!("{name}.txt")), &serialize_song(rhythm))?;
        for (group, s) in [("groundtruth", song), ("random_pitch", pitch), ("random_rhythm", rhythm)] {
            let m = song_metrics(s, 0, &none, cfg)?;
            rows.push(BaselineRow {
                song_id: name.clone(),
                group: group.into(),
                pce: m.pce,
                gc: m.gc,
                config_hash: p.config_hash.clone(),
                rng_seed: p.rng_seed,
            });
        }
    }

    let source = cfg.experiment.baseline_source;
    let metrics_path = cfg.output_dir.join("experiments").join(source.name()).join("metrics.csv");
    let generated = if metrics_path.exists() { read_metrics_csv(&read_file(&metrics_path)?)? } else { Vec::new() };

    let (reports, skipped) = analyze_metrics(
        &["pce", "gc"],
        |metric| {
            let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
            if !generated.is_empty() {
                for mode in &cfg.experiment.modes {
                    let v = generated.iter().filter(|r| r.prompt_mode == *mode).filter_map(|r| r.metric(metric)).collect();
                    groups.push((mode.to_string(), v));
                }
            }
            groups.push(("groundtruth".into(), values(&rows, "groundtruth", metric)));
            let random = if metric == "pce" { "random_pitch" } else { "random_rhythm" };
            groups.push(("random".into(), values(&rows, random, metric)));
            groups
        },
        cfg,
    );
    let checks = [check(&rows, "pce", "random_pitch", true, cfg), check(&rows, "gc", "random_rhythm", false, cfg)]
        .into_iter()
        .flatten()
        .collect();

    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        writer.serialize(row).expect("row serializes");
    }
    let csv_text = String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("utf-8 csv");
    write_file(&dir.join("metrics.csv"), &csv_text)?;
    write_file(&dir.join("boxplots.csv"), &boxplot_csv(&reports))?;
    let summary = BaselineSummary {
        provenance: p,
        source_experiment: (!generated.is_empty()).then(|| source.name().to_string()),
        songs: corpus.len(),
        checks,
        reports,
        skipped,
    };
    write_json(&dir.join("stats.json"), &summary)?;
    Ok(summary)
}
