use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use super::{read_file, PipelineError};

/// Left-aligned text table from CSV, dropping provenance columns. PIP and
/// UIP fractions are shown as percentages.
fn csv_table(text: &str) -> Result<String, PipelineError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| PipelineError::Data(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let keep: Vec<usize> =
        (0..headers.len()).filter(|&i| headers[i] != "config_hash" && headers[i] != "rng_seed").collect();
    let mut rows = vec![keep.iter().map(|&i| headers[i].clone()).collect::<Vec<_>>()];
    for record in reader.records() {
        let record = record.map_err(|e| PipelineError::Data(e.to_string()))?;
        rows.push(
            keep.iter()
                .map(|&i| {
                    let cell = record.get(i).unwrap_or("");
                    match cell.parse::<f64>() {
                        Ok(v) if headers[i] == "pip" || headers[i] == "uip" => format!("{:.2}%", 100.0 * v),
                        _ => cell.to_string(),
                    }
                })
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..keep.len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        writeln!(out, "  {}", cells.join("  ").trim_end()).unwrap();
    }
    Ok(out)
}

fn json(path: &Path) -> Result<Option<Value>, PipelineError> {
    if !path.exists() {
        return Ok(None);
    }
    serde_json::from_str(&read_file(path)?)
        .map(Some)
        .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

fn stats_lines(out: &mut String, stats: &Value) {
    for report in stats["reports"].as_array().into_iter().flatten() {
        let pairs: Vec<String> = report["significant_pairs"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|p| format!("{}/{}", p[0].as_str().unwrap_or(""), p[1].as_str().unwrap_or("")))
            .collect();
        writeln!(
            out,
            "  {:<4} H({})={:.3} p={:.3e}  significant: {}",
            report["metric"].as_str().unwrap_or("?"),
            report["df"],
            report["statistic"].as_f64().unwrap_or(f64::NAN),
            report["p"].as_f64().unwrap_or(f64::NAN),
            if pairs.is_empty() { "none".to_string() } else { pairs.join(" ") }
        )
        .unwrap();
    }
    for skipped in stats["skipped"].as_array().into_iter().flatten() {
        writeln!(out, "  {:<4} skipped: {}", skipped["metric"].as_str().unwrap_or("?"), skipped["reason"].as_str().unwrap_or("")).unwrap();
    }
}

/// Plain-text summary of everything a pipeline run has written so far.
pub fn render_report(output_dir: &Path) -> Result<String, PipelineError> {
    if !output_dir.is_dir() {
        return Err(PipelineError::Data(format!("{} is not a directory", output_dir.display())));
    }
    let mut out = String::new();
    if let Some(pre) = json(&output_dir.join("preprocess/stats.json"))? {
        writeln!(out, "preprocess (config {}, seed {})", pre["config_hash"].as_str().unwrap_or("?"), pre["rng_seed"]).unwrap();
        writeln!(out, "  files {}  parsed {}  failed {}", pre["files"], pre["parsed"], pre["failed"]).unwrap();
        let admitted: Vec<&str> =
            pre["admitted_genres"].as_array().into_iter().flatten().filter_map(Value::as_str).collect();
        writeln!(out, "  admitted genres: {}", if admitted.is_empty() { "none".into() } else { admitted.join(", ") }).unwrap();
    }
    if let Some(train) = json(&output_dir.join("models/train.json"))? {
        writeln!(out, "models").unwrap();
        if let Some(models) = train["models"].as_object() {
            for (name, info) in models {
                writeln!(out, "  {name:<14} songs {}  vocabulary {}  order {}", info["songs"], info["vocabulary"], info["order"]).unwrap();
            }
        }
        match (&train["classifier"]["Ok"], &train["classifier"]["Err"]) {
            (Value::Object(r), _) => writeln!(
                out,
                "  classifier     test accuracy {:.3} on {} songs",
                r["test_accuracy"].as_f64().unwrap_or(f64::NAN),
                r["test_size"]
            )
            .unwrap(),
            (_, Value::String(e)) => writeln!(out, "  classifier     not trained: {e}").unwrap(),
            _ => {}
        }
    }
    for (kind, table) in [("instrument", "table1.csv"), ("genre", "table2.csv")] {
        let dir = output_dir.join("experiments").join(kind);
        if !dir.is_dir() {
            continue;
        }
        writeln!(out, "{kind} experiment").unwrap();
        if let Some(run) = json(&dir.join("run.json"))? {
            writeln!(
                out,
                "  songs {}  failed {}  per cell {}  longest generation {} tokens",
                run["songs"], run["failed"], run["per_cell"], run["max_generated_tokens"]
            )
            .unwrap();
        }
        let table_path = dir.join(table);
        if table_path.exists() {
            out.push_str(&csv_table(&read_file(&table_path)?)?);
        }
        if let Some(stats) = json(&dir.join("stats.json"))? {
            stats_lines(&mut out, &stats);
        }
    }
    if let Some(base) = json(&output_dir.join("baselines/stats.json"))? {
        writeln!(out, "baselines ({} source songs)", base["songs"]).unwrap();
        for check in base["checks"].as_array().into_iter().flatten() {
            writeln!(
                out,
                "  {:<4} {}: {:.4} vs {:.4}, p={:.3e} [{}]",
                check["metric"].as_str().unwrap_or("?"),
                check["expected"].as_str().unwrap_or(""),
                check["median_random"].as_f64().unwrap_or(f64::NAN),
                check["median_groundtruth"].as_f64().unwrap_or(f64::NAN),
                check["p"].as_f64().unwrap_or(f64::NAN),
                if check["holds"].as_bool() == Some(true) { "holds" } else { "violated" }
            )
            .unwrap();
        }
        stats_lines(&mut out, &base);
    }
    if out.is_empty() {
        return Err(PipelineError::Data(format!("no pipeline outputs under {}", output_dir.display())));
    }
    Ok(out)
}
