use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::json;
use tabcond::metrics::{randomize_pitch, randomize_rhythm};
use tabcond::pipeline::{
    analyze_metrics, derive_seed, load_corpus, render_report, run_baselines, run_experiment, run_preprocess,
    run_train, train_model_on, ExperimentKind, PipelineConfig, PipelineError,
};
use tabcond::prompting::{
    build_genre_prompt, build_instrument_prompt, first_two_measures, GenrePrompt, InstrumentPrompt, PromptError,
    Snippet,
};
use tabcond::song::{lex, serialize_tokens};
use tabcond::synth::{fuzz_corpus, natural_corpus, separable_corpus, write_labelled_corpus};
use tabcond::{parse_song, sample, serialize_song, GenerationConfig, Header, NGramModel, SegmentConfig, Token};

use crate::{CliError, GenerateArgs, KindArg, PromptArgs, RandomizeKind, StatsArgs, SynthArgs, SynthKind};

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn prompt_error(e: PromptError) -> CliError {
    match e {
        PromptError::MissingSnippet(_) => CliError::Usage(e.to_string()),
        e => CliError::Pipeline(PipelineError::Prompt(e)),
    }
}

pub fn preprocess(cfg: &PipelineConfig) -> Result<(), CliError> {
    let s = run_preprocess(cfg)?;
    let admitted: Vec<String> = s.admitted_genres.iter().map(ToString::to_string).collect();
    println!("parsed {} of {} files ({} failed, {} diagnostics)", s.parsed, s.files, s.failed, s.diagnostics);
    println!("admitted genres: {}", if admitted.is_empty() { "none".into() } else { admitted.join(", ") });
    println!("corpora written to {}", cfg.output_dir.join("corpus").display());
    Ok(())
}

pub fn train(cfg: &PipelineConfig) -> Result<(), CliError> {
    let s = run_train(cfg)?;
    for (name, info) in &s.models {
        println!("{name:<14} {} songs, vocabulary {}, order {}", info.songs, info.vocabulary, info.order);
    }
    match &s.classifier {
        Ok(r) => println!("classifier     test accuracy {:.3} on {} songs", r.test_accuracy, r.test_size),
        Err(e) => println!("classifier     not trained: {e}"),
    }
    Ok(())
}

pub fn train_single(cfg: &PipelineConfig, corpus: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let dir = corpus.unwrap_or(&cfg.corpus_dir);
    let (model, songs) = train_model_on(dir, cfg)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    model.save(out).map_err(PipelineError::from)?;
    println!("trained order-{} model on {songs} songs, saved {}", model.order(), out.display());
    Ok(())
}

/// Snippet from a song file (its first two measures) or from bare tokens.
fn snippet_from(path: &Path, seg: &SegmentConfig) -> Result<(Snippet, Option<Header>), CliError> {
    let text = read(path)?;
    if let Ok(song) = parse_song(&text) {
        let tokens = first_two_measures(&song.body, seg)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
            .ok_or_else(|| CliError::Data(format!("{} is shorter than two measures", path.display())))?;
        return Ok((Snippet { source: 0, tokens }, Some(song.header)));
    }
    let tokens = lex(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((Snippet { source: 0, tokens }, None))
}

fn prompt_tokens(args: &PromptArgs) -> Result<Vec<Token>, CliError> {
    let seg = SegmentConfig::default();
    if let Some(path) = &args.prompt {
        return lex(&read(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())));
    }
    if let Some(combo) = args.combo {
        return build_instrument_prompt(&InstrumentPrompt::new(args.mode, combo)).map_err(prompt_error);
    }
    if let Some(genre) = &args.genre {
        let (snippet, header) = match &args.snippet_file {
            Some(path) => {
                let (snippet, header) = snippet_from(path, &seg)?;
                (Some(snippet), header)
            }
            None => (None, None),
        };
        let request = GenrePrompt { mode: args.mode, genre: genre.clone(), snippet, header: header.unwrap_or_default() };
        return build_genre_prompt(&request, &seg).map_err(prompt_error);
    }
    Err(CliError::Usage("one of --prompt, --combo or --genre is required".into()))
}

pub fn prompt(args: &PromptArgs) -> Result<(), CliError> {
    println!("{}", serialize_tokens(&prompt_tokens(args)?));
    Ok(())
}

/// Song `i` of a batch uses a seed derived from the base seed and `i`.
pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let prompt = prompt_tokens(&args.prompt)?;
    let model = NGramModel::load(&args.model).map_err(PipelineError::from)?;
    for i in 0..args.count {
        let cfg = GenerationConfig {
            max_tokens: args.max_tokens,
            temperature: args.temperature,
            top_k: args.top_k,
            rng_seed: derive_seed(args.rng_seed, &format!("generate/{i}")),
        };
        let tokens = sample(&model, &prompt, &cfg).map_err(|e| match e {
            tabcond::seqmodel::ModelError::InvalidConfig(msg) => CliError::Usage(msg),
            e => CliError::Pipeline(e.into()),
        })?;
        let text = serialize_tokens(&tokens);
        match &args.out {
            Some(dir) => write(&dir.join(format!("song-{i:04}.txt")), &format!("{text}\n"))?,
            None => {
                if i > 0 {
                    println!();
                }
                println!("{text}");
            }
        }
    }
    if let Some(dir) = &args.out {
        println!("wrote {} songs to {}", args.count, dir.display());
    }
    Ok(())
}

pub fn experiment(cfg: &PipelineConfig, kind: KindArg) -> Result<(), CliError> {
    let kinds: &[ExperimentKind] = match kind {
        KindArg::Instrument => &[ExperimentKind::Instrument],
        KindArg::Genre => &[ExperimentKind::Genre],
        KindArg::All => &[ExperimentKind::Instrument, ExperimentKind::Genre],
    };
    for &kind in kinds {
        let s = run_experiment(cfg, kind)?;
        println!(
            "{}: {} songs in {} cells of {}, {} failed, longest generation {} tokens",
            kind.name(),
            s.songs,
            s.cells.len(),
            s.per_cell,
            s.failed,
            s.max_generated_tokens
        );
    }
    Ok(())
}

pub fn baselines(cfg: &PipelineConfig) -> Result<(), CliError> {
    let s = run_baselines(cfg)?;
    for c in &s.checks {
        println!(
            "{}: {} ({:.4} vs {:.4}, p={:.3e}) {}",
            c.metric,
            c.expected,
            c.median_random,
            c.median_groundtruth,
            c.p,
            if c.holds { "holds" } else { "VIOLATED" }
        );
    }
    println!("baseline outputs in {}", cfg.output_dir.join("baselines").display());
    Ok(())
}

pub fn randomize(cfg: &PipelineConfig, kind: RandomizeKind, input: &Path, out: &Path) -> Result<(), CliError> {
    let corpus = load_corpus(input)?;
    for (name, song) in &corpus {
        let randomized = match kind {
            RandomizeKind::Pitch => randomize_pitch(song, derive_seed(cfg.rng_seed, &format!("baseline/pitch/{name}"))),
            RandomizeKind::Rhythm => randomize_rhythm(
                song,
                derive_seed(cfg.rng_seed, &format!("baseline/rhythm/{name}")),
                &cfg.segment,
                cfg.metrics.gc_resolution,
            )
            .map_err(PipelineError::from)?,
        };
        write(&out.join(format!("{name}.txt")), &serialize_song(&randomized))?;
    }
    println!("randomized {} songs into {}", corpus.len(), out.display());
    Ok(())
}

const METRICS: [&str; 4] = ["pce", "gc", "pip", "uip"];

pub fn stats(args: &StatsArgs) -> Result<(), CliError> {
    let text = read(&args.metrics)?;
    let bad = |e: csv::Error| CliError::Data(format!("{}: {e}", args.metrics.display()));
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(bad)?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let group_by = match &args.group_by {
        Some(g) => g.clone(),
        None if column("prompt_mode").is_some() => "prompt_mode".into(),
        None => "group".into(),
    };
    let group_col = column(&group_by).ok_or_else(|| CliError::Usage(format!("no column {group_by}")))?;
    let metrics: Vec<String> = if args.metric.is_empty() {
        METRICS.iter().filter(|m| column(m).is_some()).map(|m| m.to_string()).collect()
    } else {
        args.metric.clone()
    };
    let metric_cols: Vec<usize> = metrics
        .iter()
        .map(|m| column(m).ok_or_else(|| CliError::Usage(format!("no column {m}"))))
        .collect::<Result<_, _>>()?;

    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(bad)?;
        let group = record.get(group_col).unwrap_or("").to_string();
        if !order.contains(&group) {
            order.push(group.clone());
        }
        for (m, &col) in metric_cols.iter().enumerate() {
            let cell = record.get(col).unwrap_or("").trim();
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| CliError::Data(format!("bad {} value {cell:?}", metrics[m])))?;
            values.entry((m, group.clone())).or_default().push(v);
        }
    }

    let mut cfg = PipelineConfig::default();
    cfg.stats.alpha = args.alpha;
    cfg.stats.continuity_correction = !args.no_continuity_correction;
    cfg.validate()?;
    let names: Vec<&str> = metrics.iter().map(String::as_str).collect();
    let (reports, skipped) = analyze_metrics(
        &names,
        |metric| {
            let m = names.iter().position(|n| *n == metric).unwrap();
            order.iter().map(|g| (g.clone(), values.get(&(m, g.clone())).cloned().unwrap_or_default())).collect()
        },
        &cfg,
    );
    let report = json!({
        "source": args.metrics.display().to_string(),
        "group_by": group_by,
        "alpha": args.alpha,
        "reports": reports,
        "skipped": skipped,
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.out {
        Some(path) => write(path, &format!("{text}\n"))?,
        None => println!("{text}"),
    }
    Ok(())
}

pub fn report(dir: &Path) -> Result<(), CliError> {
    print!("{}", render_report(dir)?);
    Ok(())
}

pub fn run_all(cfg: &PipelineConfig) -> Result<(), CliError> {
    preprocess(cfg)?;
    let trained = run_train(cfg)?;
    experiment(cfg, KindArg::Instrument)?;
    match &trained.classifier {
        Ok(_) => experiment(cfg, KindArg::Genre)?,
        Err(e) => eprintln!("skipping genre experiment: {e}"),
    }
    run_baselines(cfg)?;
    report(&cfg.output_dir)
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    match args.kind {
        SynthKind::Separable => {
            let corpus = separable_corpus(args.count, args.seed);
            write_labelled_corpus(&args.out, &corpus).map_err(|e| io_error(&args.out, e))?;
        }
        SynthKind::Natural => {
            for (i, song) in natural_corpus(args.count, args.seed).iter().enumerate() {
                write(&args.out.join(format!("song-{i:05}.txt")), &serialize_song(song))?;
            }
        }
        SynthKind::Fuzz => {
            for (i, text) in fuzz_corpus(args.count, args.seed).iter().enumerate() {
                write(&args.out.join(format!("fuzz-{i:05}.txt")), text)?;
            }
        }
    }
    println!("wrote {:?} corpus to {}", args.kind, args.out.display());
    Ok(())
}
