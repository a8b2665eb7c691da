//! Control-token injection and the corpus statistics behind genre admission.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::song::Song;
use crate::token::{GenreId, InstrumentId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConditioningError {
    #[error("song has no notes, nothing to declare")]
    NoInstruments,
    #[error("genre {0} is not in the admitted vocabulary")]
    UnknownGenre(GenreId),
}

/// Replaces the instrumentation block with one listing every instrument that
/// plays at least one note, in canonical order. Only the header region
/// changes.
pub fn inject_instrument_tokens(song: &Song) -> Result<Song, ConditioningError> {
    let played = song.played_instruments();
    if played.is_empty() {
        return Err(ConditioningError::NoInstruments);
    }
    let mut out = song.clone();
    out.control.instruments = Some(played.into_iter().collect());
    Ok(out)
}

/// Sets the single genre token of the header, replacing any previous one.
pub fn inject_genre_token(
    song: &Song,
    genre: &GenreId,
    vocabulary: &BTreeSet<GenreId>,
) -> Result<Song, ConditioningError> {
    if !vocabulary.contains(genre) {
        return Err(ConditioningError::UnknownGenre(genre.clone()));
    }
    let mut out = song.clone();
    out.control.genre = Some(genre.clone());
    Ok(out)
}

/// Key of an instrument combination: canonically sorted ids joined by `,`.
pub fn combo_key<'a>(instruments: impl IntoIterator<Item = &'a InstrumentId>) -> String {
    let sorted: BTreeSet<&InstrumentId> = instruments.into_iter().collect();
    sorted.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub songs: usize,
    pub genre_counts: BTreeMap<GenreId, usize>,
    pub instrument_combo_counts: BTreeMap<String, usize>,
}

impl CorpusStats {
    /// Counts one song. `genre` overrides the song's own genre token, which
    /// is how manifest labels are counted before injection.
    pub fn record(&mut self, song: &Song, genre: Option<&GenreId>) {
        self.songs += 1;
        if let Some(genre) = genre.or(song.control.genre.as_ref()) {
            *self.genre_counts.entry(genre.clone()).or_default() += 1;
        }
        let played = song.played_instruments();
        if !played.is_empty() {
            *self.instrument_combo_counts.entry(combo_key(&played)).or_default() += 1;
        }
    }

    /// Associative, commutative merge.
    pub fn merge(mut self, other: CorpusStats) -> CorpusStats {
        self.songs += other.songs;
        for (genre, n) in other.genre_counts {
            *self.genre_counts.entry(genre).or_default() += n;
        }
        for (combo, n) in other.instrument_combo_counts {
            *self.instrument_combo_counts.entry(combo).or_default() += n;
        }
        self
    }
}

pub fn corpus_statistics<'a>(corpus: impl IntoIterator<Item = &'a Song>) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for song in corpus {
        stats.record(song, None);
    }
    stats
}

/// Genres with strictly more than `min_count` songs.
pub fn admit_genres(stats: &CorpusStats, min_count: usize) -> BTreeSet<GenreId> {
    stats
        .genre_counts
        .iter()
        .filter(|(_, &n)| n > min_count)
        .map(|(g, _)| g.clone())
        .collect()
}
