//! Whole-song documents: header, optional control header, body.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::token::{parse_token, GenreId, InstrumentId, Token, TokenError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeaderKind {
    Artist,
    Downtune,
    Tempo,
    Start,
}

impl fmt::Display for HeaderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            HeaderKind::Artist => "artist",
            HeaderKind::Downtune => "downtune",
            HeaderKind::Tempo => "tempo",
            HeaderKind::Start => "start",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SongError {
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("missing header token: {0}")]
    MissingHeader(HeaderKind),
    #[error("duplicate header token: {0}")]
    DuplicateHeader(HeaderKind),
    #[error("malformed control block: {0}")]
    MalformedControlBlock(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub artist: String,
    pub downtune: i32,
    pub tempo: u32,
}

impl Default for Header {
    /// Header used for synthetic prompts.
    fn default() -> Self {
        Header { artist: "unknown".to_string(), downtune: 0, tempo: 120 }
    }
}

impl Header {
    pub fn tokens(&self) -> [Token; 3] {
        [
            Token::Artist(self.artist.clone()),
            Token::Downtune(self.downtune),
            Token::Tempo(self.tempo),
        ]
    }
}

/// Conditioning tokens carried in the header region.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlHeader {
    /// Contents of the `inst_start … inst_end` block, when present.
    pub instruments: Option<Vec<InstrumentId>>,
    pub genre: Option<GenreId>,
}

impl ControlHeader {
    pub fn is_empty(&self) -> bool {
        self.instruments.is_none() && self.genre.is_none()
    }

    /// Control tokens in canonical order: genre first, then the
    /// instrumentation block.
    pub fn tokens(&self) -> Vec<Token> {
        let mut out = Vec::new();
        if let Some(genre) = &self.genre {
            out.push(Token::GenreDecl(genre.clone()));
        }
        if let Some(instruments) = &self.instruments {
            out.push(Token::InstStart);
            out.extend(instruments.iter().cloned().map(Token::InstDecl));
            out.push(Token::InstEnd);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Song {
    pub header: Header,
    #[serde(default)]
    pub control: ControlHeader,
    /// Unrecognised tokens found before `start`, kept in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_header: Vec<Token>,
    /// Everything after `start`, in original order.
    pub body: Vec<Token>,
}

impl Song {
    pub fn new(header: Header, body: Vec<Token>) -> Self {
        Song { header, control: ControlHeader::default(), extra_header: Vec::new(), body }
    }

    /// Header region in canonical order, ending with `start`.
    pub fn header_tokens(&self) -> Vec<Token> {
        let mut out: Vec<Token> = self.header.tokens().into();
        out.extend(self.extra_header.iter().cloned());
        out.extend(self.control.tokens());
        out.push(Token::Start);
        out
    }

    /// Full token sequence: header region followed by the body.
    pub fn tokens(&self) -> Vec<Token> {
        let mut out = self.header_tokens();
        out.extend(self.body.iter().cloned());
        out
    }

    /// Instruments with at least one note in the body, canonically ordered.
    pub fn played_instruments(&self) -> BTreeSet<InstrumentId> {
        self.body.iter().filter_map(Token::note_instrument).collect()
    }

    pub fn note_count(&self) -> usize {
        self.body.iter().filter(|t| t.is_note()).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("song serializes")
    }

    /// The song with every control token removed from the header region.
    pub fn without_control(&self) -> Song {
        Song { control: ControlHeader::default(), ..self.clone() }
    }
}

impl fmt::Display for Song {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_song(self))
    }
}

/// Splits a document on whitespace and lexes each token.
pub fn lex(text: &str) -> Result<Vec<Token>, TokenError> {
    text.split_whitespace().map(parse_token).collect()
}

pub fn parse_song(text: &str) -> Result<Song, SongError> {
    song_from_tokens(lex(text)?)
}

/// Builds a song from a token sequence. Prompts are ordinary songs whose
/// body may be empty, so this is also the prefix check used before
/// generation.
pub fn song_from_tokens(tokens: Vec<Token>) -> Result<Song, SongError> {
    let start = tokens
        .iter()
        .position(|t| *t == Token::Start)
        .ok_or(SongError::MissingHeader(HeaderKind::Start))?;
    let mut tokens = tokens;
    let body = tokens.split_off(start + 1);
    tokens.pop();

    let mut artist = None;
    let mut downtune = None;
    let mut tempo = None;
    let mut control = ControlHeader::default();
    let mut extra = Vec::new();
    let mut block: Option<Vec<InstrumentId>> = None;

    fn set<T>(slot: &mut Option<T>, value: T, kind: HeaderKind) -> Result<(), SongError> {
        if slot.replace(value).is_some() {
            return Err(SongError::DuplicateHeader(kind));
        }
        Ok(())
    }

    for token in tokens {
        if let Some(open) = block.as_mut() {
            match token {
                Token::InstDecl(id) => {
                    if open.contains(&id) {
                        return Err(SongError::MalformedControlBlock(format!("duplicate instrument {id}")));
                    }
                    open.push(id);
                }
                Token::InstEnd => control.instruments = block.take(),
                other => {
                    return Err(SongError::MalformedControlBlock(format!(
                        "unexpected {other} inside instrumentation block"
                    )))
                }
            }
            continue;
        }
        match token {
            Token::Artist(name) => set(&mut artist, name, HeaderKind::Artist)?,
            Token::Downtune(v) => set(&mut downtune, v, HeaderKind::Downtune)?,
            Token::Tempo(v) => set(&mut tempo, v, HeaderKind::Tempo)?,
            Token::GenreDecl(genre) => {
                if control.genre.replace(genre).is_some() {
                    return Err(SongError::MalformedControlBlock("more than one genre token".into()));
                }
            }
            Token::InstStart => {
                if control.instruments.is_some() {
                    return Err(SongError::MalformedControlBlock("more than one instrumentation block".into()));
                }
                block = Some(Vec::new());
            }
            Token::InstEnd => {
                return Err(SongError::MalformedControlBlock("inst_end without inst_start".into()))
            }
            other => extra.push(other),
        }
    }
    if block.is_some() {
        return Err(SongError::MalformedControlBlock("inst_start without inst_end".into()));
    }

    Ok(Song {
        header: Header {
            artist: artist.ok_or(SongError::MissingHeader(HeaderKind::Artist))?,
            downtune: downtune.ok_or(SongError::MissingHeader(HeaderKind::Downtune))?,
            tempo: tempo.ok_or(SongError::MissingHeader(HeaderKind::Tempo))?,
        },
        control,
        extra_header: extra,
        body,
    })
}

/// One token per line.
pub fn serialize_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for token in tokens {
        out.push_str(&token.to_string());
        out.push('\n');
    }
    out
}

pub fn serialize_song(song: &Song) -> String {
    serialize_tokens(&song.tokens())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::Family;

    const MINIMAL: &str = "artist:test downtune:0 tempo:120 start distorted0:note:s6:f0 wait:3840 end";

    #[test]
    fn parses_minimal_document() {
        let song = parse_song(MINIMAL).unwrap();
        assert_eq!(song.header, Header { artist: "test".into(), downtune: 0, tempo: 120 });
        assert!(song.control.is_empty());
        assert_eq!(song.body.len(), 3);
        assert_eq!(song.played_instruments().len(), 1);
    }

    #[test]
    fn missing_tempo() {
        let err = parse_song("artist:a downtune:0 start wait:960").unwrap_err();
        assert_eq!(err, SongError::MissingHeader(HeaderKind::Tempo));
        let err = parse_song("artist:a downtune:0 tempo:90").unwrap_err();
        assert_eq!(err, SongError::MissingHeader(HeaderKind::Start));
    }

    #[test]
    fn instrumentation_block() {
        let song = parse_song(
            "artist:a downtune:0 tempo:120 inst_start distorted0 bass drums inst_end start wait:960",
        )
        .unwrap();
        assert_eq!(
            song.control.instruments.unwrap(),
            vec![
                InstrumentId::indexed(Family::Distorted, 0),
                InstrumentId::bare(Family::Bass),
                InstrumentId::drums()
            ]
        );
    }

    #[test]
    fn malformed_blocks() {
        for doc in [
            "artist:a downtune:0 tempo:1 inst_start bass start",
            "artist:a downtune:0 tempo:1 inst_end start",
            "artist:a downtune:0 tempo:1 inst_start wait:1 inst_end start",
            "artist:a downtune:0 tempo:1 inst_start bass bass inst_end start",
            "artist:a downtune:0 tempo:1 genre:rock genre:punk start",
        ] {
            assert!(matches!(parse_song(doc), Err(SongError::MalformedControlBlock(_))), "{doc}");
        }
        assert_eq!(
            parse_song("artist:a tempo:1 downtune:0 tempo:2 start").unwrap_err(),
            SongError::DuplicateHeader(HeaderKind::Tempo)
        );
    }

    #[test]
    fn serialization_is_canonical_and_stable() {
        let doc = "tempo:120 inst_start bass inst_end nfx:x artist:z downtune:-1 genre:folk start bass:note:s4:f0 wait:960 fx:opaque:1";
        let song = parse_song(doc).unwrap();
        let text = serialize_song(&song);
        assert!(text.contains("wait:960"));
        assert!(text.contains("fx:opaque:1"));
        assert!(text.starts_with("artist:z\ndowntune:-1\ntempo:120\nnfx:x\ngenre:folk\ninst_start\nbass\ninst_end\nstart\n"));
        let again = parse_song(&text).unwrap();
        assert_eq!(again, song);
        assert_eq!(serialize_song(&again), text);
    }

    #[test]
    fn json_dump_round_trips() {
        let song = parse_song("artist:a downtune:0 tempo:1 genre:rock start drums:note:36 wait:10").unwrap();
        let back: Song = serde_json::from_str(&song.to_json()).unwrap();
        assert_eq!(back, song);
    }
}
