//! Song-level evaluation metrics and randomized baseline corpora.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::{timeline, ScoreView, SegmentConfig, SegmentError};
use crate::song::Song;
use crate::token::{parse_token, InstrumentId, Token};

/// Default groove grid: sixteenth notes in a 4/4 measure.
pub const DEFAULT_GROOVE_RESOLUTION: u32 = 16;
/// Frets drawn by the pitch randomizer: two octaves, so each pitch class
/// is equally likely.
pub const RANDOM_FRETS: u8 = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("song has no pitched notes")]
    NoPitchedNotes,
    #[error("groove consistency needs at least two measures, got {0}")]
    TooFewMeasures(usize),
    #[error("groove resolution must be positive")]
    InvalidResolution,
    #[error("presence metric denominator is zero")]
    ZeroDenominator,
    #[error("invalid presence input: {0}")]
    InvalidPresence(String),
}

/// Shannon entropy in bits of a histogram; empty bins contribute nothing.
pub fn entropy_bits(histogram: &[u64]) -> f64 {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let h: f64 = histogram
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

fn track_histogram(measures: &[crate::score::Measure], hist: &mut [u64; 12]) {
    for onset in measures.iter().flat_map(|m| &m.onsets) {
        for &pitch in &onset.pitches {
            hist[pitch.rem_euclid(12) as usize] += 1;
        }
    }
}

/// Pitch-class histogram pooled over every non-drum instrument.
pub fn pitch_class_histogram(score: &ScoreView) -> [u64; 12] {
    let mut hist = [0u64; 12];
    for (instrument, measures) in &score.tracks {
        if !instrument.is_drums() {
            track_histogram(measures, &mut hist);
        }
    }
    hist
}

pub fn pitch_class_entropy(score: &ScoreView) -> Result<f64, MetricError> {
    let hist = pitch_class_histogram(score);
    if hist.iter().all(|&c| c == 0) {
        return Err(MetricError::NoPitchedNotes);
    }
    Ok(entropy_bits(&hist))
}

/// Entropy of each melodic instrument on its own, for diagnostics.
pub fn per_instrument_entropy(score: &ScoreView) -> BTreeMap<InstrumentId, f64> {
    score
        .tracks
        .iter()
        .filter(|(i, _)| !i.is_drums())
        .filter_map(|(instrument, measures)| {
            let mut hist = [0u64; 12];
            track_histogram(measures, &mut hist);
            hist.iter().any(|&c| c > 0).then(|| (instrument.clone(), entropy_bits(&hist)))
        })
        .collect()
}

/// Onset grid of one measure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroovePattern {
    pub bits: Vec<bool>,
}

impl GroovePattern {
    pub fn hamming(&self, other: &GroovePattern) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }
}

/// Per-measure onset grids with every instrument (drums included) pooled.
/// Offsets are floored onto `resolution` positions per measure.
pub fn groove_patterns(score: &ScoreView, resolution: u32) -> Result<Vec<GroovePattern>, MetricError> {
    if resolution == 0 {
        return Err(MetricError::InvalidResolution);
    }
    let mut patterns = vec![GroovePattern { bits: vec![false; resolution as usize] }; score.measure_count];
    let length = score.measure_length_ticks as u64;
    for measures in score.tracks.values() {
        for (pattern, measure) in patterns.iter_mut().zip(measures) {
            for onset in &measure.onsets {
                let slot = (onset.offset_ticks as u64 * resolution as u64 / length) as usize;
                pattern.bits[slot.min(resolution as usize - 1)] = true;
            }
        }
    }
    Ok(patterns)
}

/// One minus the mean normalized Hamming distance between consecutive
/// measure grooves.
pub fn groove_consistency(score: &ScoreView, resolution: u32) -> Result<f64, MetricError> {
    let patterns = groove_patterns(score, resolution)?;
    if patterns.len() < 2 {
        return Err(MetricError::TooFewMeasures(patterns.len()));
    }
    let distance: usize = patterns.windows(2).map(|w| w[0].hamming(&w[1])).sum();
    let pairs = (patterns.len() - 1) as f64;
    Ok((1.0 - distance as f64 / (resolution as f64 * pairs)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureCounts {
    pub total: u64,
    pub empty: u64,
}

/// Prompted set `P`, appearing set `A`, and per-instrument measure counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceInput {
    pub prompted: BTreeSet<InstrumentId>,
    pub appearing: BTreeSet<InstrumentId>,
    pub measures: BTreeMap<InstrumentId, MeasureCounts>,
}

impl PresenceInput {
    /// `A` is every instrument with a track plus every prompted
    /// instrument; a prompted instrument that never plays is counted as
    /// fully empty.
    pub fn from_score(score: &ScoreView, prompted: &BTreeSet<InstrumentId>) -> PresenceInput {
        let total = score.measure_count as u64;
        let mut measures = BTreeMap::new();
        for (instrument, track) in &score.tracks {
            let empty = track.iter().filter(|m| m.is_empty()).count() as u64;
            measures.insert(instrument.clone(), MeasureCounts { total, empty });
        }
        for instrument in prompted {
            measures
                .entry(instrument.clone())
                .or_insert(MeasureCounts { total, empty: total });
        }
        PresenceInput {
            prompted: prompted.clone(),
            appearing: measures.keys().cloned().collect(),
            measures,
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if !self.prompted.is_subset(&self.appearing) {
            return Err(MetricError::InvalidPresence("prompted set is not a subset of appearing set".into()));
        }
        for instrument in &self.appearing {
            let counts = self
                .measures
                .get(instrument)
                .ok_or_else(|| MetricError::InvalidPresence(format!("no measure counts for {instrument}")))?;
            if counts.empty > counts.total {
                return Err(MetricError::InvalidPresence(format!("{instrument} has more empty than total measures")));
            }
        }
        Ok(())
    }

    fn sum(&self, set: impl Iterator<Item = InstrumentId>, f: impl Fn(MeasureCounts) -> u64) -> u64 {
        set.map(|i| f(self.measures[&i])).sum()
    }
}

/// Non-empty prompted measures over all measures of all appearing
/// instruments, as an exact fraction.
pub fn pip_fraction(input: &PresenceInput) -> Result<Ratio<u64>, MetricError> {
    input.validate()?;
    let numer = input.sum(input.prompted.iter().cloned(), |c| c.total - c.empty);
    let denom = input.sum(input.appearing.iter().cloned(), |c| c.total);
    if denom == 0 {
        return Err(MetricError::ZeroDenominator);
    }
    Ok(Ratio::new(numer, denom))
}

/// Non-empty unprompted measures over all non-empty measures, as an exact
/// fraction.
pub fn uip_fraction(input: &PresenceInput) -> Result<Ratio<u64>, MetricError> {
    input.validate()?;
    let unprompted = input.appearing.difference(&input.prompted).cloned();
    let numer = input.sum(unprompted, |c| c.total - c.empty);
    let denom = input.sum(input.appearing.iter().cloned(), |c| c.total - c.empty);
    if denom == 0 {
        return Err(MetricError::ZeroDenominator);
    }
    Ok(Ratio::new(numer, denom))
}

fn to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn pip_score(input: &PresenceInput) -> Result<f64, MetricError> {
    pip_fraction(input).map(to_f64)
}

pub fn uip_score(input: &PresenceInput) -> Result<f64, MetricError> {
    uip_fraction(input).map(to_f64)
}

/// Replaces the fret of every pitched note with a uniformly drawn one on
/// the same string. Timing tokens and drums are untouched.
pub fn randomize_pitch(song: &Song, rng_seed: u64) -> Song {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = song.clone();
    for token in &mut out.body {
        if let Token::Note { fret, .. } = token {
            *fret = rng.gen_range(0..RANDOM_FRETS);
        }
    }
    out
}

/// Moves every onset (each instrument's simultaneous notes travel
/// together) to a uniformly drawn position on the measure grid, keeping
/// measure membership, pitches and note count. Non-timing tokens move to the
/// start of their measure; a trailing `end` stays last.
pub fn randomize_rhythm(
    song: &Song,
    rng_seed: u64,
    cfg: &SegmentConfig,
    resolution: u32,
) -> Result<Song, SegmentError> {
    let length = cfg.measure_length_ticks()?;
    let resolution = resolution.max(1);
    let (placements, count) = timeline(&song.body, cfg)?;
    let explicit = song.body.iter().any(|t| cfg.is_boundary(t));
    let has_end = song.body.contains(&Token::End);

    // (measure, slot, source order) -> token
    let mut events: BTreeMap<(usize, u32, usize), Token> = BTreeMap::new();
    let mut slots: BTreeMap<(usize, InstrumentId, u32), u32> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for (order, (token, at)) in song.body.iter().zip(&placements).enumerate() {
        if matches!(token, Token::Wait(_) | Token::End) || cfg.is_boundary(token) {
            continue;
        }
        let measure = at.measure.min(count.saturating_sub(1));
        let slot = match token.note_instrument() {
            Some(instrument) => *slots
                .entry((measure, instrument, at.offset))
                .or_insert_with(|| rng.gen_range(0..resolution)),
            None => 0,
        };
        events.insert((measure, slot, order), token.clone());
    }

    let boundary = if explicit { Some(boundary_token(cfg)) } else { None };
    let mut body = Vec::with_capacity(song.body.len());
    let mut events = events.into_iter().peekable();
    for measure in 0..count {
        body.extend(boundary.clone());
        let mut position = 0u32;
        while let Some(((m, slot, _), token)) = events.next_if(|((m, _, _), _)| *m == measure) {
            debug_assert_eq!(m, measure);
            let offset = (slot as u64 * length as u64 / resolution as u64) as u32;
            if offset > position {
                body.push(Token::Wait(offset - position));
                position = offset;
            }
            body.push(token);
        }
        body.push(Token::Wait(length - position));
    }
    body.extend(events.map(|(_, t)| t));
    if has_end {
        body.push(Token::End);
    }
    Ok(Song { body, ..song.clone() })
}

fn boundary_token(cfg: &SegmentConfig) -> Token {
    parse_token(&cfg.measure_token).unwrap_or(Token::NewMeasure)
}
