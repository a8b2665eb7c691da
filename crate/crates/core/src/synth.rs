//! Synthetic corpora: fuzz documents for the parser, a natural-style corpus
//! with tonal and rhythmic regularity, and a separable corpus whose genres
//! use disjoint note alphabets.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::prompting::InstrumentCombo;
use crate::score::{Tuning, TICKS_PER_QUARTER};
use crate::song::{serialize_song, Header, Song};
use crate::token::{Family, GenreId, InstrumentId, Token};

const MEASURE: u32 = 4 * TICKS_PER_QUARTER;
const SIXTEENTH: u32 = TICKS_PER_QUARTER / 4;

fn word(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

fn random_instrument(rng: &mut ChaCha8Rng) -> InstrumentId {
    match rng.gen_range(0..9) {
        0 => InstrumentId::indexed(Family::Distorted, rng.gen_range(0..3)),
        1 => InstrumentId::indexed(Family::Clean, rng.gen_range(0..2)),
        2 => InstrumentId::bare(Family::Bass),
        3 => InstrumentId::indexed(Family::Bass, rng.gen_range(0..2)),
        4 => InstrumentId::indexed(Family::Piano, 0),
        5 => InstrumentId::indexed(Family::Leads, rng.gen_range(0..2)),
        6 => InstrumentId::indexed(Family::Pads, 0),
        7 => InstrumentId::indexed(Family::Other("remaining".into()), rng.gen_range(0..3)),
        _ => InstrumentId::drums(),
    }
}

const OPAQUE_SAMPLES: &[&str] = &[
    "nfx:bend:xyz",
    "nfx:palm_mute",
    "bfx:tremolo_picking:duration8",
    "note:off",
    "wait:0960",
    "wait:0",
    "tempo:+5",
    "drums:note:200",
    "bass:note:s11:f0",
    "distorted0:note:s6:f31",
    "measure:repeat",
    "Genre:Metal",
    "x:",
    ":",
];

fn fuzz_body_token(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..20) {
        0..=6 => {
            let inst = random_instrument(rng);
            if inst.is_drums() {
                format!("drums:note:{}", rng.gen_range(0..128))
            } else {
                format!("{inst}:note:s{}:f{}", rng.gen_range(1..=10), rng.gen_range(0..=30))
            }
        }
        7..=11 => format!("wait:{}", rng.gen_range(1..4000)),
        12 => "new_measure".into(),
        13 => format!("drums:note:{}", rng.gen_range(0..128)),
        14..=16 => OPAQUE_SAMPLES.choose(rng).unwrap().to_string(),
        17 => format!("nfx:{}:{}", word(rng, 4), rng.gen_range(0..100)),
        18 => format!("{}:{}", word(rng, 3), rng.gen_range(0..10)),
        _ => format!("genre:{}", word(rng, 5)),
    }
}

/// A random well-formed document with varied separators and an optional
/// control header.
pub fn fuzz_document(rng: &mut ChaCha8Rng) -> String {
    let artist_len = rng.gen_range(1..10);
    let mut header = vec![
        vec![format!("artist:{}", word(rng, artist_len))],
        vec![format!("downtune:{}", rng.gen_range(-6..=3))],
        vec![format!("tempo:{}", rng.gen_range(30..=260))],
    ];
    if rng.gen_bool(0.3) {
        let mut block = vec!["inst_start".to_string()];
        let mut seen = Vec::new();
        for _ in 0..rng.gen_range(1..5) {
            let inst = random_instrument(rng);
            if !seen.contains(&inst) {
                block.push(inst.to_string());
                seen.push(inst);
            }
        }
        block.push("inst_end".into());
        header.push(block);
    }
    if rng.gen_bool(0.3) {
        header.push(vec![format!("genre:{}", ["metal", "rock", "punk", "folk", "classical"].choose(rng).unwrap())]);
    }
    if rng.gen_bool(0.1) {
        header.push(vec!["nfx:header_extra".into()]);
    }
    header.shuffle(rng);
    let mut tokens: Vec<String> = header.concat();
    tokens.push("start".into());
    for _ in 0..rng.gen_range(0..120) {
        tokens.push(fuzz_body_token(rng));
    }
    if rng.gen_bool(0.7) {
        tokens.push("end".into());
    }
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push_str([" ", "\n", "\t", "  ", "\r\n"].choose(rng).unwrap());
        }
        out.push_str(t);
    }
    if rng.gen_bool(0.5) {
        out.push('\n');
    }
    out
}

pub fn fuzz_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| fuzz_document(&mut rng)).collect()
}

/// Fret on `string` sounding pitch class `pc`, within the first octave.
fn fret_for(tuning: &Tuning, instrument: &InstrumentId, string: u8, pc: i32) -> u8 {
    let open = tuning.pitch(instrument, string, 0, 0);
    (pc - open).rem_euclid(12) as u8
}

// Onset grids in sixteenths, one per song.
const GROOVES: &[&[u32]] = &[
    &[0, 4, 8, 12],
    &[0, 2, 4, 6, 8, 10, 12, 14],
    &[0, 3, 6, 8, 12],
    &[0, 4, 6, 10, 12],
    &[0, 2, 8, 10, 12, 14],
];

fn push_wait(body: &mut Vec<Token>, ticks: u32) {
    if ticks > 0 {
        body.push(Token::Wait(ticks));
    }
}

/// Songs in a fixed key drawing pitches from the tonic triad, with one
/// onset grid repeated in every measure.
pub fn natural_song(rng: &mut ChaCha8Rng, tuning: &Tuning) -> Song {
    let key = rng.gen_range(0..12);
    let triad = [key, (key + 4) % 12, (key + 7) % 12];
    let groove = GROOVES.choose(rng).unwrap();
    let guitar = InstrumentId::indexed(Family::Distorted, 0);
    let bass = InstrumentId::bare(Family::Bass);
    let measures = rng.gen_range(8..=16);
    let mut body = Vec::new();
    for _ in 0..measures {
        let mut at = 0;
        for (i, &slot) in groove.iter().enumerate() {
            push_wait(&mut body, slot * SIXTEENTH - at);
            at = slot * SIXTEENTH;
            let string = rng.gen_range(4..=6);
            let pc = *triad.choose(rng).unwrap();
            body.push(Token::Note { instrument: guitar.clone(), string, fret: fret_for(tuning, &guitar, string, pc) });
            if i % 2 == 0 {
                body.push(Token::Note { instrument: bass.clone(), string: 3, fret: fret_for(tuning, &bass, 3, key) });
            }
            body.push(Token::Drums(if i % 2 == 0 { 36 } else { 38 }));
        }
        push_wait(&mut body, MEASURE - at);
    }
    body.push(Token::End);
    Song::new(
        Header { artist: format!("synth{}", rng.gen_range(0..50)), downtune: 0, tempo: rng.gen_range(80..=180) },
        body,
    )
}

pub fn natural_corpus(n: usize, seed: u64) -> Vec<Song> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuning = Tuning::default();
    (0..n).map(|_| natural_song(&mut rng, &tuning)).collect()
}

/// Frets and drum pitches reserved for each genre of the separable corpus.
pub const ALPHABET_WIDTH: u8 = 4;
pub const DRUM_BASE: u8 = 35;

pub fn genre_frets(genre_index: usize) -> std::ops::Range<u8> {
    let lo = ALPHABET_WIDTH * genre_index as u8;
    lo..lo + ALPHABET_WIDTH
}

pub fn genre_drums(genre_index: usize) -> std::ops::Range<u8> {
    let lo = DRUM_BASE + ALPHABET_WIDTH * genre_index as u8;
    lo..lo + ALPHABET_WIDTH
}

/// Whether a note token belongs to the alphabet of `genre_index`.
/// Non-note tokens are always inside.
pub fn in_alphabet(token: &Token, genre_index: usize) -> bool {
    match token {
        Token::Note { fret, .. } => genre_frets(genre_index).contains(fret),
        Token::Drums(pitch) => genre_drums(genre_index).contains(pitch),
        _ => true,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelledSong {
    pub song: Song,
    pub genre: GenreId,
    pub combo: InstrumentCombo,
}

const WAITS: [u32; 3] = [240, 480, 960];

/// Genre `g` plays only frets in [`genre_frets`] and drums in
/// [`genre_drums`]; only the members of the song's combination play.
pub fn separable_song(rng: &mut ChaCha8Rng, genre_index: usize, combo: InstrumentCombo) -> Song {
    let members = combo.instruments();
    let frets = genre_frets(genre_index);
    let drums = genre_drums(genre_index);
    let mut body = Vec::new();
    let mut ticks = 0;
    while ticks < 8 * MEASURE {
        let mut played = false;
        for inst in &members {
            if !rng.gen_bool(0.7) && (played || inst != members.last().unwrap()) {
                continue;
            }
            played = true;
            body.push(if inst.is_drums() {
                Token::Drums(rng.gen_range(drums.clone()))
            } else {
                let strings = if inst.family == Family::Bass { 1..=4 } else { 1..=3 };
                Token::Note { instrument: inst.clone(), string: rng.gen_range(strings), fret: rng.gen_range(frets.clone()) }
            });
        }
        let wait = *WAITS.choose(rng).unwrap();
        body.push(Token::Wait(wait));
        ticks += wait;
    }
    body.push(Token::End);
    Song::new(Header { artist: "synth".into(), downtune: 0, tempo: 120 }, body)
}

/// `per_genre` songs for each experiment genre, combinations cycling
/// through all eight.
pub fn separable_corpus(per_genre: usize, seed: u64) -> Vec<LabelledSong> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (g, genre) in GenreId::experiment_genres().into_iter().enumerate() {
        for i in 0..per_genre {
            let combo = InstrumentCombo::ALL[i % InstrumentCombo::ALL.len()];
            out.push(LabelledSong { song: separable_song(&mut rng, g, combo), genre: genre.clone(), combo });
        }
    }
    out
}

/// Writes one file per song plus a `manifest.csv` of genre labels.
pub fn write_labelled_corpus(dir: &Path, corpus: &[LabelledSong]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::from("path,genre\n");
    for (i, item) in corpus.iter().enumerate() {
        let name = format!("{}-{i:05}.txt", item.genre);
        std::fs::write(dir.join(&name), serialize_song(&item.song))?;
        manifest.push_str(&format!("{name},{}\n", item.genre));
    }
    std::fs::write(dir.join("manifest.csv"), manifest)
}
