//! Absolute-time tokens: eleven dedicated vocabulary entries (digits 0-9 plus
//! a decimal point) that render every timestamp as exactly six tokens, so
//! timestamp precision stays constant no matter how long the video is.
//!
//! Also provides the initialization transfer that copies each digit token's
//! embedding and prediction-head rows onto the matching time token, letting
//! an extended vocabulary start from pretrained digit knowledge.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Matrix;

/// Upper bound of the encodable range: four integer digits and one decimal.
pub const MAX_TIMESTAMP: f64 = 9999.9;
/// Tokens per rendered timestamp ("DDDD.D").
pub const TIME_TOKEN_WIDTH: usize = 6;
/// Digit tokens 0-9 plus the decimal-point token.
pub const TIME_TOKEN_COUNT: usize = 11;

#[derive(Debug, Error, PartialEq)]
pub enum TimeTokenError {
    #[error("timestamp {0} is outside [0, {MAX_TIMESTAMP}]")]
    OutOfRange(f64),
    #[error("timestamp {0} is not finite")]
    NotFinite(f64),
    #[error("inverted span: start {start} > end {end}")]
    InvertedSpan { start: f64, end: f64 },
    #[error("time token sequence has length {0}, expected {TIME_TOKEN_WIDTH}")]
    BadLength(usize),
    #[error("token at position {pos} is not a time token (id {id})")]
    NotATimeToken { pos: usize, id: u32 },
    #[error("expected digit token at position {pos}, found the decimal point")]
    MisplacedDot { pos: usize },
    #[error("expected the decimal point at position {pos}, found a digit")]
    MissingDot { pos: usize },
    #[error("base vocabulary has no token for character {0:?}")]
    MissingDigitToken(char),
    #[error("embedding has {rows} rows but the vocabulary base size is {base}")]
    EmbeddingSizeMismatch { rows: usize, base: usize },
    #[error("embedding and head widths differ: {emb} vs {head}")]
    WidthMismatch { emb: usize, head: usize },
}

/// The extended vocabulary: eleven time-token ids appended contiguously after
/// the base vocabulary, plus the base-vocabulary ids of the characters
/// '0'..'9' and '.' that seed their initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeVocab {
    base_vocab_size: u32,
    digit_token_ids: BTreeMap<char, u32>,
}

impl TimeVocab {
    /// `digit_ids` maps each of '0'..'9' and '.' to its base-vocabulary id.
    pub fn new(
        base_vocab_size: u32,
        digit_ids: BTreeMap<char, u32>,
    ) -> Result<Self, TimeTokenError> {
        for ch in "0123456789.".chars() {
            let id = digit_ids.get(&ch).ok_or(TimeTokenError::MissingDigitToken(ch))?;
            if *id >= base_vocab_size {
                return Err(TimeTokenError::MissingDigitToken(ch));
            }
        }
        Ok(TimeVocab { base_vocab_size, digit_token_ids: digit_ids })
    }

    pub fn base_vocab_size(&self) -> u32 {
        self.base_vocab_size
    }

    /// Total vocabulary size after appending the time tokens.
    pub fn extended_size(&self) -> u32 {
        self.base_vocab_size + TIME_TOKEN_COUNT as u32
    }

    /// Id of the digit time token `<t_k>`, k in 0..=9.
    pub fn digit_time_token(&self, k: u8) -> u32 {
        assert!(k < 10, "digit time tokens are <t_0>..<t_9>");
        self.base_vocab_size + k as u32
    }

    /// Id of the decimal-point time token `<t_dot>`.
    pub fn dot_time_token(&self) -> u32 {
        self.base_vocab_size + 10
    }

    /// All eleven time-token ids, `<t_0>..<t_9>` then `<t_dot>`.
    pub fn time_token_ids(&self) -> Vec<u32> {
        (self.base_vocab_size..self.extended_size()).collect()
    }

    pub fn is_time_token(&self, id: u32) -> bool {
        id >= self.base_vocab_size && id < self.extended_size()
    }

    /// Base-vocabulary id of a digit or '.' character.
    pub fn base_char_id(&self, ch: char) -> Option<u32> {
        self.digit_token_ids.get(&ch).copied()
    }

    /// Digit value of a time-token id, `None` for `<t_dot>` and non-time ids.
    pub fn time_token_digit(&self, id: u32) -> Option<u8> {
        if id >= self.base_vocab_size && id < self.base_vocab_size + 10 {
            Some((id - self.base_vocab_size) as u8)
        } else {
            None
        }
    }

    /// Human-readable surface form, e.g. `<t_3>` or `<t_dot>`.
    pub fn surface(&self, id: u32) -> Option<String> {
        if let Some(d) = self.time_token_digit(id) {
            Some(format!("<t_{d}>"))
        } else if id == self.dot_time_token() {
            Some("<t_dot>".to_string())
        } else {
            None
        }
    }

    /// Inverse of [`TimeVocab::surface`].
    pub fn id_of_surface(&self, s: &str) -> Option<u32> {
        if s == "<t_dot>" {
            return Some(self.dot_time_token());
        }
        let digit = s.strip_prefix("<t_")?.strip_suffix('>')?;
        if digit.len() == 1 {
            let d = digit.chars().next().unwrap().to_digit(10)?;
            return Some(self.digit_time_token(d as u8));
        }
        None
    }
}

/// A fixed-width six-token timestamp: four digit tokens, `<t_dot>`, one digit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTokenSeq {
    tokens: [u32; TIME_TOKEN_WIDTH],
}

impl TimeTokenSeq {
    /// Validates the fixed-width shape against the vocabulary.
    pub fn new(tokens: &[u32], vocab: &TimeVocab) -> Result<Self, TimeTokenError> {
        if tokens.len() != TIME_TOKEN_WIDTH {
            return Err(TimeTokenError::BadLength(tokens.len()));
        }
        for (pos, &id) in tokens.iter().enumerate() {
            if !vocab.is_time_token(id) {
                return Err(TimeTokenError::NotATimeToken { pos, id });
            }
            let is_dot = id == vocab.dot_time_token();
            if pos == 4 && !is_dot {
                return Err(TimeTokenError::MissingDot { pos });
            }
            if pos != 4 && is_dot {
                return Err(TimeTokenError::MisplacedDot { pos });
            }
        }
        let mut arr = [0u32; TIME_TOKEN_WIDTH];
        arr.copy_from_slice(tokens);
        Ok(TimeTokenSeq { tokens: arr })
    }

    pub fn ids(&self) -> &[u32; TIME_TOKEN_WIDTH] {
        &self.tokens
    }

    /// Surface rendering like `<t_0><t_1><t_2><t_0><t_dot><t_5>`.
    pub fn surface(&self, vocab: &TimeVocab) -> String {
        self.tokens.iter().map(|&id| vocab.surface(id).unwrap()).collect()
    }

    /// Plain-text rendering like `0120.5`.
    pub fn digits(&self, vocab: &TimeVocab) -> String {
        self.tokens
            .iter()
            .map(|&id| match vocab.time_token_digit(id) {
                Some(d) => char::from(b'0' + d),
                None => '.',
            })
            .collect()
    }
}

impl fmt::Display for TimeTokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.tokens)
    }
}

/// Rounds to one decimal place, ties to even, matching the encoding grid.
pub fn round_to_tenths(t: f64) -> f64 {
    (t * 10.0).round_ties_even() / 10.0
}

/// Clamps a timestamp into the encodable range; callers that prefer clamping
/// over the encoder's out-of-range error apply this first.
pub fn clamp_timestamp(t: f64) -> f64 {
    t.clamp(0.0, MAX_TIMESTAMP)
}

/// Renders a timestamp as six time tokens, zero-padded "DDDD.D".
///
/// The range check runs on the rounded value, so 9999.94 encodes as 9999.9
/// while 9999.95 is rejected.
pub fn encode_timestamp(t: f64, vocab: &TimeVocab) -> Result<TimeTokenSeq, TimeTokenError> {
    if !t.is_finite() {
        return Err(TimeTokenError::NotFinite(t));
    }
    let tenths = (t * 10.0).round_ties_even();
    if !(0.0..=99999.0).contains(&tenths) {
        return Err(TimeTokenError::OutOfRange(t));
    }
    let tenths = tenths as u32;
    let whole = tenths / 10;
    let frac = tenths % 10;
    let digits = [
        (whole / 1000 % 10) as u8,
        (whole / 100 % 10) as u8,
        (whole / 10 % 10) as u8,
        (whole % 10) as u8,
    ];
    let mut tokens = [0u32; TIME_TOKEN_WIDTH];
    for (i, d) in digits.iter().enumerate() {
        tokens[i] = vocab.digit_time_token(*d);
    }
    tokens[4] = vocab.dot_time_token();
    tokens[5] = vocab.digit_time_token(frac as u8);
    Ok(TimeTokenSeq { tokens })
}

/// Inverse of [`encode_timestamp`]: `decode(encode(t)) == round_to_tenths(t)`.
pub fn decode_timestamp(seq: &TimeTokenSeq, vocab: &TimeVocab) -> f64 {
    let d = |i: usize| vocab.time_token_digit(seq.tokens[i]).unwrap() as u32;
    let tenths = (d(0) * 1000 + d(1) * 100 + d(2) * 10 + d(3)) * 10 + d(5);
    tenths as f64 / 10.0
}

/// Parses and validates a raw id slice as a timestamp, reporting the first
/// offending position on malformed input.
pub fn decode_ids(ids: &[u32], vocab: &TimeVocab) -> Result<f64, TimeTokenError> {
    let seq = TimeTokenSeq::new(ids, vocab)?;
    Ok(decode_timestamp(&seq, vocab))
}

/// Token embedding and prediction head over one vocabulary, `vocab x d` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPair {
    pub token_embedding: Matrix,
    pub lm_head: Matrix,
}

impl EmbeddingPair {
    pub fn vocab_rows(&self) -> usize {
        self.token_embedding.rows()
    }
}

/// Appends eleven rows to both matrices and copies each digit token's rows
/// onto the matching time token, bitwise: `<t_k>` starts from 'k', `<t_dot>`
/// from '.'.
pub fn extend_and_transfer(
    emb: &EmbeddingPair,
    vocab: &TimeVocab,
) -> Result<EmbeddingPair, TimeTokenError> {
    let base = vocab.base_vocab_size() as usize;
    if emb.token_embedding.rows() != base || emb.lm_head.rows() != base {
        return Err(TimeTokenError::EmbeddingSizeMismatch {
            rows: emb.token_embedding.rows().max(emb.lm_head.rows()),
            base,
        });
    }
    if emb.token_embedding.cols() != emb.lm_head.cols() {
        return Err(TimeTokenError::WidthMismatch {
            emb: emb.token_embedding.cols(),
            head: emb.lm_head.cols(),
        });
    }
    let d = emb.token_embedding.cols();
    let extended = vocab.extended_size() as usize;

    let grow = |source: &Matrix| -> Result<Matrix, TimeTokenError> {
        let mut data = Vec::with_capacity(extended * d);
        data.extend_from_slice(source.data());
        for k in 0..=9u8 {
            let src_id = vocab
                .base_char_id(char::from(b'0' + k))
                .ok_or(TimeTokenError::MissingDigitToken(char::from(b'0' + k)))?;
            data.extend_from_slice(source.row(src_id as usize));
        }
        let dot_id = vocab.base_char_id('.').ok_or(TimeTokenError::MissingDigitToken('.'))?;
        data.extend_from_slice(source.row(dot_id as usize));
        Ok(Matrix::from_vec(extended, d, data).expect("row counts are consistent"))
    };

    Ok(EmbeddingPair { token_embedding: grow(&emb.token_embedding)?, lm_head: grow(&emb.lm_head)? })
}

/// Renders a span as answer-surface text.
///
/// With time tokens on, both endpoints become six-token surface runs joined
/// by " - "; off, plain zero-padded digits: "0090.0 - 0102.0". Downstream
/// text codecs map each `<t_*>` symbol to a single token id.
pub fn render_span(
    start: f64,
    end: f64,
    use_time_tokens: bool,
    vocab: &TimeVocab,
) -> Result<String, TimeTokenError> {
    if start > end {
        return Err(TimeTokenError::InvertedSpan { start, end });
    }
    let s = encode_timestamp(start, vocab)?;
    let e = encode_timestamp(end, vocab)?;
    if use_time_tokens {
        Ok(format!("{} - {}", s.surface(vocab), e.surface(vocab)))
    } else {
        Ok(format!("{} - {}", s.digits(vocab), e.digits(vocab)))
    }
}

/// Renders a single timestamp, time-token surface or plain digits.
pub fn render_timestamp(
    t: f64,
    use_time_tokens: bool,
    vocab: &TimeVocab,
) -> Result<String, TimeTokenError> {
    let seq = encode_timestamp(t, vocab)?;
    Ok(if use_time_tokens { seq.surface(vocab) } else { seq.digits(vocab) })
}

/// Serializable vocabulary manifest: base size, time-token ids, digit map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabManifest {
    pub base_vocab_size: u32,
    pub time_token_ids: Vec<u32>,
    pub digit_token_ids: BTreeMap<char, u32>,
}

impl VocabManifest {
    pub fn from_vocab(vocab: &TimeVocab) -> Self {
        VocabManifest {
            base_vocab_size: vocab.base_vocab_size(),
            time_token_ids: vocab.time_token_ids(),
            digit_token_ids: vocab.digit_token_ids.clone(),
        }
    }

    pub fn into_vocab(self) -> Result<TimeVocab, TimeTokenError> {
        TimeVocab::new(self.base_vocab_size, self.digit_token_ids)
    }
}
