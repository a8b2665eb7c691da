//! Measure-segmented score view derived from a song body.
//!
//! Time advances only through `wait` tokens. Measures are cut every
//! `measure_length_ticks`, and an explicit measure token (spelled
//! `new_measure` by default) closes the current measure early. A boundary
//! token that arrives while the current measure is still untouched (no
//! elapsed ticks, no onsets) is absorbed, so a leading boundary or one that
//! coincides with a tick-derived cut does not produce an empty measure.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::song::Song;
use crate::token::{Family, InstrumentId, Token, NEW_MEASURE};

pub const TICKS_PER_QUARTER: u32 = 960;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("time signature {numerator}/{denominator} gives a non-positive measure length")]
    NonPositiveMeasureLength { numerator: u32, denominator: u32 },
}

/// Open-string MIDI pitches, indexed by string number minus one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tuning {
    pub guitar: [i32; 10],
    pub bass: [i32; 10],
    /// Per-family overrides keyed by family name.
    #[serde(default)]
    pub overrides: BTreeMap<String, [i32; 10]>,
}

impl Default for Tuning {
    /// Standard tuning: E4 B3 G3 D3 A2 E2 (extended downward in fourths)
    /// for guitars and other pitched parts, G2 D2 A1 E1 for bass.
    fn default() -> Self {
        Tuning {
            guitar: [64, 59, 55, 50, 45, 40, 35, 30, 25, 20],
            bass: [43, 38, 33, 28, 23, 18, 13, 8, 3, 0],
            overrides: BTreeMap::new(),
        }
    }
}

impl Tuning {
    /// MIDI pitch of a fretted note, transposed by the song's downtune and
    /// clamped to the MIDI range.
    pub fn pitch(&self, instrument: &InstrumentId, string: u8, fret: u8, downtune: i32) -> i32 {
        let table = match self.overrides.get(instrument.family.name()) {
            Some(table) => table,
            None if instrument.family == Family::Bass => &self.bass,
            None => &self.guitar,
        };
        let open = table[(string.clamp(1, 10) - 1) as usize];
        (open + fret as i32 + downtune).clamp(0, 127)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub numerator: u32,
    pub denominator: u32,
    /// Spelling of the explicit measure boundary token.
    pub measure_token: String,
    pub tuning: Tuning,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            numerator: 4,
            denominator: 4,
            measure_token: NEW_MEASURE.to_string(),
            tuning: Tuning::default(),
        }
    }
}

impl SegmentConfig {
    pub fn measure_length_ticks(&self) -> Result<u32, SegmentError> {
        let err = SegmentError::NonPositiveMeasureLength {
            numerator: self.numerator,
            denominator: self.denominator,
        };
        if self.denominator == 0 {
            return Err(err);
        }
        let ticks = TICKS_PER_QUARTER as u64 * 4 * self.numerator as u64 / self.denominator as u64;
        match u32::try_from(ticks) {
            Ok(t) if t > 0 => Ok(t),
            _ => Err(err),
        }
    }

    pub fn is_boundary(&self, token: &Token) -> bool {
        match token {
            Token::NewMeasure => self.measure_token == NEW_MEASURE,
            _ if self.measure_token == NEW_MEASURE => false,
            Token::Opaque(text) => *text == self.measure_token,
            Token::Wait(_) | Token::Note { .. } | Token::Drums(_) => false,
            other => other.to_string() == self.measure_token,
        }
    }
}

/// Where a body token sits in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub measure: usize,
    pub offset: u32,
}

/// Running position while walking a body.
#[derive(Debug, Clone)]
pub struct TimeCursor {
    length: u32,
    measure: usize,
    elapsed: u32,
    last_touched: Option<usize>,
}

impl TimeCursor {
    pub fn new(measure_length: u32) -> Self {
        TimeCursor { length: measure_length, measure: 0, elapsed: 0, last_touched: None }
    }

    pub fn placement(&self) -> Placement {
        Placement { measure: self.measure, offset: self.elapsed }
    }

    fn touch(&mut self, measure: usize) {
        self.last_touched = Some(self.last_touched.map_or(measure, |m| m.max(measure)));
    }

    pub fn onset(&mut self) {
        self.touch(self.measure);
    }

    pub fn wait(&mut self, ticks: u32) {
        self.touch(self.measure);
        let total = self.elapsed as u64 + ticks as u64;
        let whole = total / self.length as u64;
        self.measure += whole as usize;
        self.elapsed = (total % self.length as u64) as u32;
        if whole > 0 {
            self.touch(self.measure - 1);
        }
        if self.elapsed > 0 {
            self.touch(self.measure);
        }
    }

    pub fn boundary(&mut self) {
        if self.elapsed > 0 || self.last_touched == Some(self.measure) {
            self.measure += 1;
            self.elapsed = 0;
        }
    }

    /// Number of measures covering everything seen so far.
    pub fn measure_count(&self) -> usize {
        self.last_touched.map_or(0, |m| m + 1)
    }

    /// Advances past one token, returning where the token sits.
    pub fn step(&mut self, token: &Token, cfg: &SegmentConfig) -> Placement {
        if cfg.is_boundary(token) {
            self.boundary();
            return self.placement();
        }
        let at = self.placement();
        match token {
            Token::Wait(ticks) => self.wait(*ticks),
            t if t.is_note() => self.onset(),
            _ => {}
        }
        at
    }
}

/// Placement of every token of `body`, plus the total measure count.
pub fn timeline(body: &[Token], cfg: &SegmentConfig) -> Result<(Vec<Placement>, usize), SegmentError> {
    let mut cursor = TimeCursor::new(cfg.measure_length_ticks()?);
    let placements = body.iter().map(|t| cursor.step(t, cfg)).collect();
    Ok((placements, cursor.measure_count()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Onset {
    pub offset_ticks: u32,
    pub pitches: BTreeSet<i32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measure {
    pub onsets: Vec<Onset>,
}

impl Measure {
    pub fn is_empty(&self) -> bool {
        self.onsets.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreView {
    pub ticks_per_quarter: u32,
    pub measure_length_ticks: u32,
    pub measure_count: usize,
    /// Same number of measures for every instrument; silent measures are
    /// rest-padded.
    pub tracks: BTreeMap<InstrumentId, Vec<Measure>>,
}

impl ScoreView {
    pub fn instruments(&self) -> impl Iterator<Item = &InstrumentId> {
        self.tracks.keys()
    }

    pub fn empty_measures(&self, instrument: &InstrumentId) -> Option<usize> {
        self.tracks.get(instrument).map(|m| m.iter().filter(|m| m.is_empty()).count())
    }
}

/// Segments the body of `song` into per-instrument measures. Instruments
/// declared in the instrumentation block get a track even when silent.
pub fn segment_measures(song: &Song, cfg: &SegmentConfig) -> Result<ScoreView, SegmentError> {
    let declared = song.control.instruments.iter().flatten().cloned();
    segment_body(&song.body, song.header.downtune, declared, cfg)
}

pub fn segment_body(
    body: &[Token],
    downtune: i32,
    extra_instruments: impl IntoIterator<Item = InstrumentId>,
    cfg: &SegmentConfig,
) -> Result<ScoreView, SegmentError> {
    let (placements, count) = timeline(body, cfg)?;
    let mut notes: BTreeMap<InstrumentId, BTreeMap<(usize, u32), BTreeSet<i32>>> = BTreeMap::new();
    for instrument in extra_instruments {
        notes.entry(instrument).or_default();
    }
    for (token, at) in body.iter().zip(&placements) {
        let (instrument, pitch) = match token {
            Token::Note { instrument, string, fret } => {
                (instrument.clone(), cfg.tuning.pitch(instrument, *string, *fret, downtune))
            }
            Token::Drums(pitch) => (InstrumentId::drums(), *pitch as i32),
            _ => continue,
        };
        notes
            .entry(instrument)
            .or_default()
            .entry((at.measure, at.offset))
            .or_default()
            .insert(pitch);
    }

    let tracks = notes
        .into_iter()
        .map(|(instrument, events)| {
            let mut measures = vec![Measure::default(); count];
            for ((measure, offset), pitches) in events {
                measures[measure].onsets.push(Onset { offset_ticks: offset, pitches });
            }
            (instrument, measures)
        })
        .collect();

    Ok(ScoreView {
        ticks_per_quarter: TICKS_PER_QUARTER,
        measure_length_ticks: cfg.measure_length_ticks()?,
        measure_count: count,
        tracks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::song::parse_song;

    fn view(doc: &str) -> ScoreView {
        segment_measures(&parse_song(doc).unwrap(), &SegmentConfig::default()).unwrap()
    }

    const HEAD: &str = "artist:a downtune:0 tempo:120 start ";

    #[test]
    fn single_note_single_measure() {
        let v = view(&format!("{HEAD}distorted0:note:s6:f0 wait:3840"));
        assert_eq!(v.measure_count, 1);
        assert_eq!(v.tracks.len(), 1);
        let m = &v.tracks.values().next().unwrap()[0];
        assert_eq!(m.onsets[0].pitches.iter().copied().collect::<Vec<_>>(), vec![40]);
    }

    #[test]
    fn notes_at_zero_and_one_measure() {
        let v = view(&format!("{HEAD}bass:note:s4:f0 wait:3840 bass:note:s4:f3 wait:960"));
        assert_eq!(v.measure_count, 2);
        let track = v.tracks.values().next().unwrap();
        assert!(track.iter().all(|m| !m.is_empty()));
        assert_eq!(track[1].onsets[0].offset_ticks, 0);
        // without the trailing wait the second note still opens measure two
        let v = view(&format!("{HEAD}bass:note:s4:f0 wait:3840 bass:note:s4:f3"));
        assert_eq!(v.measure_count, 2);
    }

    #[test]
    fn rest_padding_for_sparse_instrument() {
        let mut doc = HEAD.to_string();
        doc.push_str("bass:note:s4:f0 ");
        for _ in 0..20 {
            doc.push_str("drums:note:36 wait:3840 ");
        }
        let v = view(&doc);
        assert_eq!(v.measure_count, 20);
        assert_eq!(v.empty_measures(&"bass".parse().unwrap()), Some(19));
        assert_eq!(v.empty_measures(&InstrumentId::drums()), Some(0));
        assert!(v.tracks.values().all(|t| t.len() == 20));
    }

    #[test]
    fn silent_song() {
        let v = view(&format!("{HEAD}wait:7680 fx:a"));
        assert_eq!(v.measure_count, 2);
        assert!(v.tracks.is_empty());
        let v = view(&format!("{HEAD}inst_end"));
        assert_eq!(v.measure_count, 0);
        let doc = "artist:a downtune:0 tempo:120 inst_start bass inst_end start wait:7680";
        let v = view(doc);
        assert!(v.tracks[&"bass".parse().unwrap()].iter().all(Measure::is_empty));
    }

    #[test]
    fn explicit_boundaries_take_precedence() {
        // the leading boundary is absorbed, the second one closes a short measure
        let v = view(&format!(
            "{HEAD}new_measure drums:note:36 wait:960 new_measure drums:note:38 wait:3840 new_measure"
        ));
        assert_eq!(v.measure_count, 2);
        let drums = &v.tracks[&InstrumentId::drums()];
        assert_eq!(drums[0].onsets.len(), 1);
        assert_eq!(drums[1].onsets[0].pitches.iter().next(), Some(&38));
    }

    #[test]
    fn configurable_boundary_spelling() {
        let cfg = SegmentConfig { measure_token: "bar".into(), ..Default::default() };
        let song = parse_song(&format!("{HEAD}drums:note:36 wait:10 bar drums:note:36 wait:10")).unwrap();
        assert_eq!(segment_measures(&song, &cfg).unwrap().measure_count, 2);
        assert_eq!(segment_measures(&song, &SegmentConfig::default()).unwrap().measure_count, 1);
    }

    #[test]
    fn time_signatures() {
        let three_four = SegmentConfig { numerator: 3, ..Default::default() };
        assert_eq!(three_four.measure_length_ticks().unwrap(), 2880);
        let bad = SegmentConfig { numerator: 0, ..Default::default() };
        assert!(bad.measure_length_ticks().is_err());
        let bad = SegmentConfig { denominator: 0, ..Default::default() };
        assert!(bad.measure_length_ticks().is_err());
        let seven_sixteen = SegmentConfig { numerator: 7, denominator: 16, ..Default::default() };
        assert_eq!(seven_sixteen.measure_length_ticks().unwrap(), 1680);
    }

    #[test]
    fn downtune_shifts_pitch() {
        let tuning = Tuning::default();
        let gtr: InstrumentId = "distorted0".parse().unwrap();
        assert_eq!(tuning.pitch(&gtr, 6, 0, 0), 40);
        assert_eq!(tuning.pitch(&gtr, 6, 0, -2), 38);
        assert_eq!(tuning.pitch(&"bass".parse().unwrap(), 4, 5, 0), 33);
    }
}
