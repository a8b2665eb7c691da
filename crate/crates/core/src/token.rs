//! Lexical layer of the tab token language.
//!
//! Every token is a whitespace-free string. Colon-delimited tokens carry a
//! class prefix (`wait:960`, `drums:note:36`, `distorted0:note:s6:f0`), a few
//! are bare keywords (`start`, `end`, `new_measure`, `inst_start`,
//! `inst_end`), and bare instrument identifiers are only meaningful inside an
//! instrumentation block. Anything well formed that is not recognised is
//! kept verbatim as [`Token::Opaque`], so `parse_token` is total on
//! whitespace-free input and `serialize_token(parse_token(s)) == s`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest string number accepted in a note token.
pub const MAX_STRING: u8 = 10;
/// Highest fret accepted in a note token.
pub const MAX_FRET: u8 = 30;

pub const START: &str = "start";
pub const END: &str = "end";
pub const NEW_MEASURE: &str = "new_measure";
pub const INST_START: &str = "inst_start";
pub const INST_END: &str = "inst_end";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("empty token")]
    EmptyToken,
    #[error("token contains whitespace: {0:?}")]
    Whitespace(String),
    #[error("invalid instrument id: {0:?}")]
    InvalidInstrument(String),
    #[error("invalid genre label: {0:?}")]
    InvalidGenre(String),
}

/// Instrument family, ordered canonically (the order used inside
/// instrumentation blocks).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Distorted,
    Clean,
    Bass,
    Piano,
    Leads,
    Pads,
    Drums,
    Other(String),
}

impl Family {
    pub fn name(&self) -> &str {
        match self {
            Family::Distorted => "distorted",
            Family::Clean => "clean",
            Family::Bass => "bass",
            Family::Piano => "piano",
            Family::Leads => "leads",
            Family::Pads => "pads",
            Family::Drums => "drums",
            Family::Other(name) => name,
        }
    }

    fn from_name(name: &str) -> Family {
        match name {
            "distorted" => Family::Distorted,
            "clean" => Family::Clean,
            "bass" => Family::Bass,
            "piano" => Family::Piano,
            "leads" => Family::Leads,
            "pads" => Family::Pads,
            "drums" => Family::Drums,
            other => Family::Other(other.to_string()),
        }
    }
}

/// An instrument track identifier such as `distorted0`, `clean1` or `bass`.
///
/// The textual form is the family name immediately followed by the optional
/// index digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstrumentId {
    pub family: Family,
    pub index: Option<u32>,
}

impl InstrumentId {
    pub fn new(family: Family, index: Option<u32>) -> Self {
        InstrumentId { family, index }
    }

    pub fn indexed(family: Family, index: u32) -> Self {
        InstrumentId { family, index: Some(index) }
    }

    pub fn bare(family: Family) -> Self {
        InstrumentId { family, index: None }
    }

    pub fn drums() -> Self {
        InstrumentId::bare(Family::Drums)
    }

    pub fn is_drums(&self) -> bool {
        self.family == Family::Drums
    }
}

impl fmt::Display for InstrumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.family.name())?;
        if let Some(index) = self.index {
            write!(f, "{index}")?;
        }
        Ok(())
    }
}

impl FromStr for InstrumentId {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits_at = s
            .char_indices()
            .rev()
            .take_while(|(_, c)| c.is_ascii_digit())
            .last()
            .map(|(i, _)| i)
            .unwrap_or(s.len());
        let (name, digits) = s.split_at(digits_at);
        let mut chars = name.chars();
        let name_ok = matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
            && chars.all(|c| c.is_ascii_lowercase() || c == '_');
        if !name_ok || is_keyword(name) && digits.is_empty() {
            return Err(TokenError::InvalidInstrument(s.to_string()));
        }
        let index = if digits.is_empty() {
            None
        } else {
            Some(parse_canonical_u32(digits).ok_or_else(|| TokenError::InvalidInstrument(s.to_string()))?)
        };
        Ok(InstrumentId { family: Family::from_name(name), index })
    }
}

impl Serialize for InstrumentId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InstrumentId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A genre label, printed as `genre:<name>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct GenreId(String);

impl GenreId {
    pub fn new(name: impl Into<String>) -> Result<Self, TokenError> {
        let name = name.into();
        let valid = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-');
        if valid {
            Ok(GenreId(name))
        } else {
            Err(TokenError::InvalidGenre(name))
        }
    }

    /// Normalizes a free-form metadata label (`"Hard Rock"` becomes `hard_rock`).
    pub fn normalize(label: &str) -> Result<Self, TokenError> {
        let name: String = label
            .trim()
            .to_ascii_lowercase()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join("_");
        GenreId::new(name)
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    /// The five genres used for the genre conditioning experiment.
    pub fn experiment_genres() -> Vec<GenreId> {
        ["metal", "rock", "punk", "folk", "classical"]
            .into_iter()
            .map(|g| GenreId(g.to_string()))
            .collect()
    }
}

impl fmt::Display for GenreId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for GenreId {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GenreId::new(s)
    }
}

impl<'de> Deserialize<'de> for GenreId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        GenreId::new(text).map_err(serde::de::Error::custom)
    }
}

/// One lexical unit of the token language.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Token {
    Artist(String),
    Downtune(i32),
    Tempo(u32),
    Start,
    End,
    NewMeasure,
    Wait(u32),
    Note { instrument: InstrumentId, string: u8, fret: u8 },
    Drums(u8),
    InstStart,
    InstEnd,
    InstDecl(InstrumentId),
    GenreDecl(GenreId),
    Opaque(String),
}

impl Token {
    pub fn is_note(&self) -> bool {
        matches!(self, Token::Note { .. } | Token::Drums(_))
    }

    /// The instrument a note token belongs to; drum hits belong to `drums`.
    pub fn note_instrument(&self) -> Option<InstrumentId> {
        match self {
            Token::Note { instrument, .. } => Some(instrument.clone()),
            Token::Drums(_) => Some(InstrumentId::drums()),
            _ => None,
        }
    }

    /// Control tokens: genre declarations and everything that forms an
    /// instrumentation block.
    pub fn is_control(&self) -> bool {
        matches!(
            self,
            Token::GenreDecl(_) | Token::InstStart | Token::InstEnd | Token::InstDecl(_)
        )
    }

    pub fn is_header(&self) -> bool {
        matches!(self, Token::Artist(_) | Token::Downtune(_) | Token::Tempo(_) | Token::Start)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Artist(name) => write!(f, "artist:{name}"),
            Token::Downtune(semitones) => write!(f, "downtune:{semitones}"),
            Token::Tempo(bpm) => write!(f, "tempo:{bpm}"),
            Token::Start => f.write_str(START),
            Token::End => f.write_str(END),
            Token::NewMeasure => f.write_str(NEW_MEASURE),
            Token::Wait(ticks) => write!(f, "wait:{ticks}"),
            Token::Note { instrument, string, fret } => {
                write!(f, "{instrument}:note:s{string}:f{fret}")
            }
            Token::Drums(pitch) => write!(f, "drums:note:{pitch}"),
            Token::InstStart => f.write_str(INST_START),
            Token::InstEnd => f.write_str(INST_END),
            Token::InstDecl(instrument) => write!(f, "{instrument}"),
            Token::GenreDecl(genre) => write!(f, "genre:{genre}"),
            Token::Opaque(text) => f.write_str(text),
        }
    }
}

impl FromStr for Token {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_token(s)
    }
}

impl Serialize for Token {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_token(&text).map_err(serde::de::Error::custom)
    }
}

impl PartialOrd for Token {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Token {
    fn cmp(&self, other: &Self) -> Ordering {
        self.to_string().cmp(&other.to_string())
    }
}

fn is_keyword(word: &str) -> bool {
    matches!(word, START | END | NEW_MEASURE | INST_START | INST_END)
}

/// Decimal digits without sign or redundant leading zeros.
fn parse_canonical_u32(digits: &str) -> Option<u32> {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if digits.len() > 1 && digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

fn parse_canonical_i32(text: &str) -> Option<i32> {
    match text.strip_prefix('-') {
        Some("0") => None,
        Some(rest) => parse_canonical_u32(rest).and_then(|v| i32::try_from(v).ok()).map(|v| -v),
        None => parse_canonical_u32(text).and_then(|v| i32::try_from(v).ok()),
    }
}

fn parse_note(instrument: &str, string: &str, fret: &str) -> Option<Token> {
    let instrument = instrument.parse::<InstrumentId>().ok()?;
    let string = string.strip_prefix('s').and_then(parse_canonical_u32)?;
    let fret = fret.strip_prefix('f').and_then(parse_canonical_u32)?;
    if !(1..=MAX_STRING as u32).contains(&string) || fret > MAX_FRET as u32 {
        return None;
    }
    Some(Token::Note { instrument, string: string as u8, fret: fret as u8 })
}

fn classify(text: &str) -> Option<Token> {
    match text {
        START => return Some(Token::Start),
        END => return Some(Token::End),
        NEW_MEASURE => return Some(Token::NewMeasure),
        INST_START => return Some(Token::InstStart),
        INST_END => return Some(Token::InstEnd),
        _ => {}
    }
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [single] => single.parse().ok().map(Token::InstDecl),
        ["artist", ..] => {
            let name = &text["artist:".len()..];
            (!name.is_empty()).then(|| Token::Artist(name.to_string()))
        }
        ["downtune", value] => parse_canonical_i32(value).map(Token::Downtune),
        ["tempo", value] => parse_canonical_u32(value).filter(|&v| v >= 1).map(Token::Tempo),
        ["wait", value] => parse_canonical_u32(value).filter(|&v| v >= 1).map(Token::Wait),
        ["genre", name] => GenreId::new(*name).ok().map(Token::GenreDecl),
        ["drums", "note", pitch] => parse_canonical_u32(pitch)
            .filter(|&p| p <= 127)
            .map(|p| Token::Drums(p as u8)),
        [instrument, "note", string, fret] => parse_note(instrument, string, fret),
        _ => None,
    }
}

/// Parses a single whitespace-free token.
pub fn parse_token(text: &str) -> Result<Token, TokenError> {
    if text.trim().is_empty() {
        return Err(TokenError::EmptyToken);
    }
    if text.chars().any(char::is_whitespace) {
        return Err(TokenError::Whitespace(text.to_string()));
    }
    Ok(classify(text).unwrap_or_else(|| Token::Opaque(text.to_string())))
}

pub fn serialize_token(token: &Token) -> String {
    token.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_wait() {
        assert_eq!(parse_token("wait:960").unwrap(), Token::Wait(960));
    }

    #[test]
    fn parses_pitched_note() {
        assert_eq!(
            parse_token("distorted0:note:s6:f0").unwrap(),
            Token::Note {
                instrument: InstrumentId::indexed(Family::Distorted, 0),
                string: 6,
                fret: 0
            }
        );
        let bass = parse_token("bass:note:s4:f12").unwrap();
        assert_eq!(bass.note_instrument(), Some(InstrumentId::bare(Family::Bass)));
    }

    #[test]
    fn parses_drums() {
        assert_eq!(parse_token("drums:note:36").unwrap(), Token::Drums(36));
    }

    #[test]
    fn unknown_classes_are_opaque() {
        assert_eq!(parse_token("nfx:bend:xyz").unwrap(), Token::Opaque("nfx:bend:xyz".into()));
        // non-canonical or out-of-range forms stay verbatim
        for text in ["wait:0", "wait:0960", "tempo:+5", "drums:note:128", "bass:note:s11:f0", "genre:Metal", "artist:"] {
            assert_eq!(parse_token(text).unwrap(), Token::Opaque(text.into()), "{text}");
        }
    }

    #[test]
    fn header_tokens() {
        assert_eq!(parse_token("artist:some:band").unwrap(), Token::Artist("some:band".into()));
        assert_eq!(parse_token("downtune:-2").unwrap(), Token::Downtune(-2));
        assert_eq!(parse_token("tempo:120").unwrap(), Token::Tempo(120));
        assert_eq!(parse_token("genre:metal").unwrap().to_string(), "genre:metal");
    }

    #[test]
    fn bare_words() {
        assert_eq!(parse_token("bass").unwrap(), Token::InstDecl(InstrumentId::bare(Family::Bass)));
        assert_eq!(
            parse_token("remaining3").unwrap(),
            Token::InstDecl(InstrumentId::indexed(Family::Other("remaining".into()), 3))
        );
        assert_eq!(parse_token("Bass").unwrap(), Token::Opaque("Bass".into()));
        assert_eq!(parse_token("start").unwrap(), Token::Start);
        assert_eq!(parse_token("inst_end").unwrap(), Token::InstEnd);
    }

    #[test]
    fn empty_and_whitespace() {
        assert_eq!(parse_token(""), Err(TokenError::EmptyToken));
        assert_eq!(parse_token("  \n"), Err(TokenError::EmptyToken));
        assert!(matches!(parse_token("wait:1 wait:2"), Err(TokenError::Whitespace(_))));
    }

    #[test]
    fn instrument_ids_order_canonically() {
        let mut ids: Vec<InstrumentId> =
            ["drums", "bass", "clean0", "distorted1", "distorted0", "piano0"]
                .iter()
                .map(|s| s.parse().unwrap())
                .collect();
        ids.sort();
        let text: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
        assert_eq!(text, ["distorted0", "distorted1", "clean0", "bass", "piano0", "drums"]);
    }

    #[test]
    fn genre_normalization() {
        assert_eq!(GenreId::normalize(" Hard  Rock ").unwrap().name(), "hard_rock");
        assert!(GenreId::new("").is_err());
        assert!(GenreId::new("a b").is_err());
    }

    proptest! {
        #[test]
        fn parse_is_total_and_round_trips(text in "[!-~]{1,24}") {
            let token = parse_token(&text).unwrap();
            prop_assert_eq!(serialize_token(&token), text.clone());
            prop_assert_eq!(parse_token(&serialize_token(&token)).unwrap(), token);
        }

        #[test]
        fn structured_tokens_round_trip(
            family in prop::sample::select(vec!["distorted", "clean", "bass", "piano", "leads", "pads", "drums", "other_thing"]),
            index in prop::option::of(0u32..20),
            string in 1u8..=10,
            fret in 0u8..=30,
        ) {
            let instrument = InstrumentId::new(Family::from_name(family), index);
            let note = Token::Note { instrument: instrument.clone(), string, fret };
            prop_assert_eq!(parse_token(&note.to_string()).unwrap(), note);
            prop_assert_eq!(parse_token(&instrument.to_string()).unwrap(), Token::InstDecl(instrument));
        }
    }
}
