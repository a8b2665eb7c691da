//! Inference prompts for the instrumentation and genre experiments.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::{timeline, SegmentConfig, SegmentError, TimeCursor};
use crate::song::{Header, Song};
use crate::token::{Family, GenreId, InstrumentId, Token};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("no seed note for {0}")]
    MissingSeedNote(InstrumentId),
    #[error("snippet spans {0} measures, expected 2")]
    SnippetNotTwoMeasures(usize),
    #[error("snippet contains no note")]
    EmptySnippet,
    #[error("prompt mode {0} needs a snippet")]
    MissingSnippet(PromptMode),
    #[error("need {needed} songs with two measures, corpus has {available}")]
    InsufficientCorpus { needed: usize, available: usize },
    #[error("unknown {kind}: {value}")]
    Unknown { kind: &'static str, value: String },
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Full,
    Partial,
    Empty,
    Unconditional,
}

impl PromptMode {
    pub const ALL: [PromptMode; 4] =
        [PromptMode::Full, PromptMode::Partial, PromptMode::Empty, PromptMode::Unconditional];

    pub fn name(self) -> &'static str {
        match self {
            PromptMode::Full => "full",
            PromptMode::Partial => "partial",
            PromptMode::Empty => "empty",
            PromptMode::Unconditional => "unconditional",
        }
    }

    pub fn is_conditioned(self) -> bool {
        self != PromptMode::Unconditional
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptMode {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| PromptError::Unknown { kind: "prompt mode", value: s.to_string() })
    }
}

/// The eight instrument combinations of the instrumentation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InstrumentCombo {
    #[serde(rename = "b-d")]
    BD,
    #[serde(rename = "dg-d")]
    DgD,
    #[serde(rename = "dg-b-d")]
    DgBD,
    #[serde(rename = "cg-b-d")]
    CgBD,
    #[serde(rename = "dg-p-d")]
    DgPD,
    #[serde(rename = "dg-dg-b-d")]
    DgDgBD,
    #[serde(rename = "cg-dg-b-d")]
    CgDgBD,
    #[serde(rename = "dg-p-b-d")]
    DgPBD,
}

impl InstrumentCombo {
    pub const ALL: [InstrumentCombo; 8] = [
        InstrumentCombo::BD,
        InstrumentCombo::DgD,
        InstrumentCombo::DgBD,
        InstrumentCombo::CgBD,
        InstrumentCombo::DgPD,
        InstrumentCombo::DgDgBD,
        InstrumentCombo::CgDgBD,
        InstrumentCombo::DgPBD,
    ];

    pub fn id(self) -> &'static str {
        match self {
            InstrumentCombo::BD => "b-d",
            InstrumentCombo::DgD => "dg-d",
            InstrumentCombo::DgBD => "dg-b-d",
            InstrumentCombo::CgBD => "cg-b-d",
            InstrumentCombo::DgPD => "dg-p-d",
            InstrumentCombo::DgDgBD => "dg-dg-b-d",
            InstrumentCombo::CgDgBD => "cg-dg-b-d",
            InstrumentCombo::DgPBD => "dg-p-b-d",
        }
    }

    /// Member instruments in canonical order. Repeated abbreviations get
    /// increasing indices (`dg-dg` is `distorted0, distorted1`).
    pub fn instruments(self) -> Vec<InstrumentId> {
        let mut next_index: BTreeMap<&str, u32> = BTreeMap::new();
        let mut out: Vec<InstrumentId> = self
            .id()
            .split('-')
            .map(|abbrev| {
                let family = match abbrev {
                    "dg" => Family::Distorted,
                    "cg" => Family::Clean,
                    "p" => Family::Piano,
                    "b" => return InstrumentId::bare(Family::Bass),
                    "d" => return InstrumentId::drums(),
                    _ => unreachable!("combo ids are fixed"),
                };
                let index = next_index.entry(abbrev).or_default();
                let id = InstrumentId::indexed(family, *index);
                *index += 1;
                id
            })
            .collect();
        out.sort();
        out
    }
}

impl fmt::Display for InstrumentCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for InstrumentCombo {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InstrumentCombo::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| PromptError::Unknown { kind: "instrument combo", value: s.to_string() })
    }
}

/// Seed note per instrument.
pub type SeedNotes = BTreeMap<InstrumentId, Token>;

/// Open lowest string for each instrument: `s6:f0` for guitars and piano,
/// `s4:f0` for bass, a kick drum for drums.
pub fn open_string_seeds(instruments: &[InstrumentId]) -> SeedNotes {
    instruments
        .iter()
        .map(|id| {
            let token = match id.family {
                Family::Drums => Token::Drums(36),
                Family::Bass => Token::Note { instrument: id.clone(), string: 4, fret: 0 },
                _ => Token::Note { instrument: id.clone(), string: 6, fret: 0 },
            };
            (id.clone(), token)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstrumentPrompt {
    pub mode: PromptMode,
    pub combo: InstrumentCombo,
    pub seeds: SeedNotes,
    pub header: Header,
}

impl InstrumentPrompt {
    pub fn new(mode: PromptMode, combo: InstrumentCombo) -> Self {
        InstrumentPrompt {
            mode,
            combo,
            seeds: open_string_seeds(&combo.instruments()),
            header: Header::default(),
        }
    }
}

pub fn build_instrument_prompt(request: &InstrumentPrompt) -> Result<Vec<Token>, PromptError> {
    let instruments = request.combo.instruments();
    let seeded: &[InstrumentId] = match request.mode {
        PromptMode::Full | PromptMode::Unconditional => &instruments,
        PromptMode::Partial => &instruments[..1],
        PromptMode::Empty => &[],
    };
    let mut out: Vec<Token> = request.header.tokens().into();
    if request.mode.is_conditioned() {
        out.push(Token::InstStart);
        out.extend(instruments.iter().cloned().map(Token::InstDecl));
        out.push(Token::InstEnd);
    }
    out.push(Token::Start);
    for id in seeded {
        let seed = request.seeds.get(id).ok_or_else(|| PromptError::MissingSeedNote(id.clone()))?;
        out.push(seed.clone());
    }
    Ok(out)
}

/// The opening two measures of a corpus song.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    /// Index of the source song in the corpus it was drawn from.
    pub source: usize,
    pub tokens: Vec<Token>,
}

impl Snippet {
    pub fn measure_count(&self, cfg: &SegmentConfig) -> Result<usize, SegmentError> {
        Ok(timeline(&self.tokens, cfg)?.1)
    }
}

/// Cuts the first two measures out of a body. A wait that runs past the
/// second measure is shortened to end on the boundary. Returns `None` for
/// songs shorter than two measures.
pub fn first_two_measures(body: &[Token], cfg: &SegmentConfig) -> Result<Option<Vec<Token>>, SegmentError> {
    let length = cfg.measure_length_ticks()?;
    let mut cursor = TimeCursor::new(length);
    let mut out = Vec::new();
    for token in body {
        if *token == Token::End {
            break;
        }
        let before = cursor.placement();
        if before.measure >= 2 {
            break;
        }
        let mut probe = cursor.clone();
        probe.step(token, cfg);
        if cfg.is_boundary(token) && probe.placement().measure >= 2 {
            break;
        }
        match token {
            Token::Wait(ticks) if probe.placement().measure >= 2 => {
                let remaining = (2 - before.measure as u32) * length - before.offset;
                out.push(Token::Wait(remaining.min(*ticks)));
                return Ok(Some(out));
            }
            _ => out.push(token.clone()),
        }
        cursor = probe;
    }
    Ok((cursor.measure_count() >= 2).then_some(out))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenrePrompt {
    pub mode: PromptMode,
    pub genre: GenreId,
    pub snippet: Option<Snippet>,
    pub header: Header,
}

pub fn build_genre_prompt(request: &GenrePrompt, cfg: &SegmentConfig) -> Result<Vec<Token>, PromptError> {
    let snippet = match request.mode {
        PromptMode::Empty => None,
        mode => Some(request.snippet.as_ref().ok_or(PromptError::MissingSnippet(mode))?),
    };
    if let (Some(snippet), PromptMode::Full | PromptMode::Unconditional) = (snippet, request.mode) {
        let measures = snippet.measure_count(cfg)?;
        if measures != 2 {
            return Err(PromptError::SnippetNotTwoMeasures(measures));
        }
    }
    let mut out: Vec<Token> = request.header.tokens().into();
    if request.mode.is_conditioned() {
        out.push(Token::GenreDecl(request.genre.clone()));
    }
    out.push(Token::Start);
    match (request.mode, snippet) {
        (PromptMode::Partial, Some(snippet)) => {
            let first = snippet
                .tokens
                .iter()
                .find(|t| matches!(t, Token::Note { .. }))
                .or_else(|| snippet.tokens.iter().find(|t| t.is_note()))
                .ok_or(PromptError::EmptySnippet)?;
            out.push(first.clone());
        }
        (_, Some(snippet)) => out.extend(snippet.tokens.iter().cloned()),
        (_, None) => {}
    }
    Ok(out)
}

/// Draws the opening two measures of `n` distinct songs, reproducibly for a
/// given seed. Songs shorter than two measures are never chosen.
pub fn sample_seed_snippets(
    corpus: &[Song],
    n: usize,
    rng_seed: u64,
    cfg: &SegmentConfig,
) -> Result<Vec<Snippet>, PromptError> {
    let mut eligible = Vec::new();
    for (index, song) in corpus.iter().enumerate() {
        if let Some(tokens) = first_two_measures(&song.body, cfg)? {
            eligible.push(Snippet { source: index, tokens });
        }
    }
    if eligible.len() < n {
        return Err(PromptError::InsufficientCorpus { needed: n, available: eligible.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let chosen = sample(&mut rng, eligible.len(), n);
    Ok(chosen.into_iter().map(|i| eligible[i].clone()).collect())
}
