//! Guitar tablature token language, control-token conditioning, prompt
//! protocols, a reference n-gram generator, and the evaluation toolkit
//! (presence, entropy and groove metrics, a genre classifier, rank tests).

pub mod conditioning;
pub mod genre_clf;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod score;
pub mod seqmodel;
pub mod song;
pub mod stats;
pub mod synth;
pub mod token;

pub use conditioning::{admit_genres, inject_genre_token, inject_instrument_tokens, CorpusStats};
pub use genre_clf::{score_generation_batch, train_classifier, GenreClassifier, ScoreMatrix};
pub use metrics::{groove_consistency, pip_score, pitch_class_entropy, uip_score, PresenceInput};
pub use prompting::{InstrumentCombo, PromptMode};
pub use score::{segment_measures, Measure, ScoreView, SegmentConfig, TICKS_PER_QUARTER};
pub use seqmodel::{sample, train, GenerationConfig, LanguageModel, NGramModel};
pub use song::{parse_song, serialize_song, Header, Song};
pub use stats::{bonferroni, kruskal_wallis, wilcoxon_rank_sum, MetricGroups};
pub use token::{parse_token, serialize_token, GenreId, InstrumentId, Token};
