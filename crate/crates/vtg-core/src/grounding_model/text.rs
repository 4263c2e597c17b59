//! Word/character tokenizer for the toy grounding decoder.
//!
//! The vocabulary is built deterministically from a fixed corpus: three
//! specials, a small set of single-character tokens (all ten digits, the
//! decimal point, and the punctuation the prompt/answer formats use), the
//! sorted unique words of the corpus, and finally the eleven absolute-time
//! tokens. Digits are always tokenized character by character so that
//! timestamps have a stable token-level representation, and the time tokens
//! sit at the top of the id space exactly as [`TimeVocab`] expects.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time_tokenizer::{TimeTokenError, TimeVocab, TIME_TOKEN_COUNT};
use crate::vtg_data::{CAPTIONS, DVC_TEMPLATES, HIGHLIGHT_TEMPLATES, MR_TEMPLATES};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const NEWLINE: &str = "<nl>";

/// Single-character tokens every codec carries, digits first. '0'..'9' and
/// '.' are required by the time-token transfer; the rest cover the
/// prompt/answer surface forms.
const CHAR_TOKENS: &str = "0123456789.,:-'?";

#[derive(Debug, Error)]
pub enum TextError {
    #[error("token id {0} is out of vocabulary (size {1})")]
    UnknownId(u32, usize),
    #[error(transparent)]
    Time(#[from] TimeTokenError),
}

/// How a token glues to its neighbours when decoding back to text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Glue {
    Start,
    Word,
    /// Digits and the decimal point: runs concatenate without spaces.
    Digitish,
    /// Absolute-time tokens: runs concatenate without spaces.
    TimeTok,
    /// Attaches to the token on its left (`,` `:` `?` `'`).
    Attach,
    /// Rendered with a space on both sides (the span separator).
    Dash,
    Newline,
}

/// Deterministic tokenizer; ids are stable for a fixed corpus.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TextCodec {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
    base_size: u32,
}

impl TextCodec {
    /// Builds the vocabulary from `corpus` texts. Word tokens are lowercased
    /// alphabetic runs; everything the corpus needs beyond [`CHAR_TOKENS`]
    /// and words decodes as `<unk>`.
    pub fn build<S: AsRef<str>>(corpus: &[S]) -> TextCodec {
        let mut words = std::collections::BTreeSet::new();
        for text in corpus {
            for word in split_words(text.as_ref()) {
                words.insert(word);
            }
        }
        let mut tokens: Vec<String> = vec![
            BOS.to_string(),
            EOS.to_string(),
            UNK.to_string(),
            NEWLINE.to_string(),
        ];
        tokens.extend(CHAR_TOKENS.chars().map(|c| c.to_string()));
        tokens.extend(words);
        let base_size = tokens.len() as u32;
        for k in 0..10u32 {
            tokens.push(format!("<t_{k}>"));
        }
        tokens.push("<t_dot>".to_string());
        debug_assert_eq!(tokens.len(), base_size as usize + TIME_TOKEN_COUNT);

        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        TextCodec {
            tokens,
            index,
            base_size,
        }
    }

    /// The fixed corpus the shipped models use: every caption in the
    /// synthetic codebook, every prompt template, and the answer scaffolding.
    pub fn standard_corpus() -> Vec<String> {
        let mut corpus: Vec<String> = Vec::new();
        corpus.extend(CAPTIONS.iter().map(|s| s.to_string()));
        corpus.extend(MR_TEMPLATES.iter().map(|s| s.to_string()));
        corpus.extend(DVC_TEMPLATES.iter().map(|s| s.to_string()));
        corpus.extend(HIGHLIGHT_TEMPLATES.iter().map(|s| s.to_string()));
        corpus.push("At second seconds significance score".to_string());
        corpus
    }

    /// Codec over [`TextCodec::standard_corpus`].
    pub fn standard() -> TextCodec {
        Self::build(&Self::standard_corpus())
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    /// Vocabulary size before the eleven time tokens.
    pub fn base_size(&self) -> u32 {
        self.base_size
    }

    pub fn bos(&self) -> u32 {
        self.index[BOS]
    }

    pub fn eos(&self) -> u32 {
        self.index[EOS]
    }

    pub fn unk(&self) -> u32 {
        self.index[UNK]
    }

    pub fn surface(&self, id: u32) -> Result<&str, TextError> {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or(TextError::UnknownId(id, self.tokens.len()))
    }

    /// The time vocabulary whose digit rows and extended ids line up with
    /// this codec's id space.
    pub fn time_vocab(&self) -> TimeVocab {
        let digit_token_ids = CHAR_TOKENS
            .chars()
            .filter(|c| c.is_ascii_digit() || *c == '.')
            .map(|c| (c, self.index[&c.to_string()]))
            .collect();
        TimeVocab::new(self.base_size, digit_token_ids)
            .expect("codec always carries the digit and dot tokens")
    }

    /// Tokenizes `text`. Words fall back to `<unk>` when absent from the
    /// vocabulary; time-token surfaces (`<t_0>`, `<t_dot>`, ...) map to their
    /// dedicated ids.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c == '\n' {
                ids.push(self.index[NEWLINE]);
                i += 1;
            } else if c.is_whitespace() {
                i += 1;
            } else if c == '<' {
                // Possible time-token surface: consume to '>' and look up.
                if let Some(close) = chars[i..].iter().position(|&c| c == '>') {
                    let surface: String = chars[i..=i + close].iter().collect();
                    ids.push(*self.index.get(&surface).unwrap_or(&self.unk()));
                    i += close + 1;
                } else {
                    ids.push(self.unk());
                    i += 1;
                }
            } else if c.is_ascii_alphabetic() {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_alphabetic() {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect::<String>().to_lowercase();
                ids.push(*self.index.get(&word).unwrap_or(&self.unk()));
                i = j;
            } else if CHAR_TOKENS.contains(c) {
                ids.push(self.index[&c.to_string()]);
                i += 1;
            } else {
                ids.push(self.unk());
                i += 1;
            }
        }
        ids
    }

    /// Renders `ids` back to text with format-preserving spacing: digit and
    /// time-token runs concatenate, commas and colons attach leftward, the
    /// dash gets a space on both sides. `<bos>`/`<eos>` are dropped.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TextError> {
        let mut out = String::new();
        let mut prev = Glue::Start;
        for &id in ids {
            let surface = self.surface(id)?;
            if surface == BOS || surface == EOS {
                continue;
            }
            if surface == NEWLINE {
                out.push('\n');
                prev = Glue::Newline;
                continue;
            }
            let class = self.class_of(id);
            if needs_space(prev, class) {
                out.push(' ');
            }
            out.push_str(surface);
            prev = class;
        }
        Ok(out)
    }

    fn class_of(&self, id: u32) -> Glue {
        if id >= self.base_size {
            return Glue::TimeTok;
        }
        let surface = &self.tokens[id as usize];
        let mut chars = surface.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => {
                if c.is_ascii_digit() || c == '.' {
                    Glue::Digitish
                } else if c == '-' {
                    Glue::Dash
                } else if matches!(c, ',' | ':' | '?' | '\'') {
                    Glue::Attach
                } else {
                    Glue::Word
                }
            }
            _ => Glue::Word,
        }
    }
}

fn needs_space(prev: Glue, cur: Glue) -> bool {
    match cur {
        Glue::Attach => false,
        _ => match prev {
            Glue::Start | Glue::Newline => false,
            Glue::Digitish => cur != Glue::Digitish,
            Glue::TimeTok => cur != Glue::TimeTok,
            _ => true,
        },
    }
}

fn split_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_ascii_alphabetic() {
            current.push(c.to_ascii_lowercase());
        } else if !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time_tokenizer::encode_timestamp;
    use crate::vtg_metrics::{parse_prediction, TaskKind};

    #[test]
    fn vocabulary_layout_is_specials_chars_words_time_tokens() {
        let codec = TextCodec::build(&["beta alpha"]);
        assert_eq!(codec.surface(codec.bos()).unwrap(), "<bos>");
        // Digits come right after the four specials.
        assert_eq!(codec.surface(4).unwrap(), "0");
        assert_eq!(codec.surface(13).unwrap(), "9");
        // Words are sorted.
        let alpha = codec.encode("alpha")[0];
        let beta = codec.encode("beta")[0];
        assert!(alpha < beta);
        // Time tokens occupy the top eleven ids.
        assert_eq!(codec.vocab_size(), codec.base_size() as usize + 11);
        assert_eq!(
            codec.surface(codec.base_size()).unwrap(),
            "<t_0>"
        );
        assert_eq!(
            codec.surface(codec.base_size() + 10).unwrap(),
            "<t_dot>"
        );
    }

    #[test]
    fn time_vocab_ids_line_up_with_codec_ids() {
        let codec = TextCodec::standard();
        let vocab = codec.time_vocab();
        assert_eq!(vocab.extended_size(), codec.vocab_size() as u32);
        for k in 0..10 {
            let id = vocab.digit_time_token(k);
            assert_eq!(codec.surface(id).unwrap(), format!("<t_{k}>"));
        }
        assert_eq!(codec.surface(vocab.dot_time_token()).unwrap(), "<t_dot>");
        // The digit '7' resolves to the same id through both views.
        assert_eq!(codec.encode("7"), vec![vocab.base_char_id('7').unwrap()]);
    }

    #[test]
    fn round_trips_span_answer_through_parser() {
        let codec = TextCodec::standard();
        let answer = "0090.0 - 0102.0 seconds, someone pours hot coffee";
        let ids = codec.encode(answer);
        let text = codec.decode(&ids).unwrap();
        assert_eq!(text, "0090.0 - 0102.0 seconds, someone pours hot coffee");
        let parsed = parse_prediction(&text, TaskKind::MomentRetrieval);
        assert!(parsed.is_clean());
        assert_eq!(parsed.segments.len(), 1);
        assert_eq!(parsed.segments[0].start, 90.0);
        assert_eq!(parsed.segments[0].end, 102.0);
    }

    #[test]
    fn round_trips_highlight_answer_through_parser() {
        let codec = TextCodec::standard();
        let answer = "At 0082.0 second, significance score: 5, the dog catches a ball";
        let text = codec.decode(&codec.encode(answer)).unwrap();
        assert_eq!(
            text,
            "at 0082.0 second, significance score: 5, the dog catches a ball"
        );
        let parsed = parse_prediction(&text, TaskKind::HighlightDetection);
        assert!(parsed.is_clean());
        assert_eq!(parsed.highlights.len(), 1);
        assert_eq!(parsed.highlights[0].t, 82.0);
        assert_eq!(parsed.highlights[0].score, 5.0);
    }

    #[test]
    fn round_trips_time_token_surfaces() {
        let codec = TextCodec::standard();
        let vocab = codec.time_vocab();
        let seq = encode_timestamp(120.5, &vocab).unwrap();
        let answer = format!("{} - {} seconds, the dog catches a ball",
            seq.surface(&vocab), seq.surface(&vocab));
        let ids = codec.encode(&answer);
        // The six time tokens appear as six ids, not character runs.
        assert_eq!(&ids[..6], seq.ids().as_slice());
        let text = codec.decode(&ids).unwrap();
        assert_eq!(
            text,
            "<t_0><t_1><t_2><t_0><t_dot><t_5> - <t_0><t_1><t_2><t_0><t_dot><t_5> \
             seconds, the dog catches a ball"
        );
        let parsed = parse_prediction(&text, TaskKind::MomentRetrieval);
        assert!(parsed.is_clean());
        assert_eq!(parsed.segments[0].start, 120.5);
    }

    #[test]
    fn multi_line_answers_round_trip() {
        let codec = TextCodec::standard();
        let answer = "0000.0 - 0010.0 seconds, the dog catches a ball\n0010.0 - 0025.0 seconds, a person slices fresh vegetables";
        let text = codec.decode(&codec.encode(answer)).unwrap();
        assert_eq!(text, answer);
        let parsed = parse_prediction(&text, TaskKind::DenseCaptioning);
        assert_eq!(parsed.segments.len(), 2);
    }

    #[test]
    fn unknown_words_become_unk() {
        let codec = TextCodec::standard();
        let ids = codec.encode("zyzzyva catches");
        assert_eq!(ids[0], codec.unk());
        assert_ne!(ids[1], codec.unk());
    }

    #[test]
    fn encoding_is_case_insensitive_for_words() {
        let codec = TextCodec::standard();
        assert_eq!(codec.encode("Seconds"), codec.encode("seconds"));
        assert_eq!(codec.encode("AT"), codec.encode("at"));
    }

    #[test]
    fn standard_corpus_covers_prompt_templates() {
        let codec = TextCodec::standard();
        let unk = codec.unk();
        for template in MR_TEMPLATES
            .iter()
            .chain(DVC_TEMPLATES.iter())
            .chain(HIGHLIGHT_TEMPLATES.iter())
        {
            let prompt = template.replace("{query}", CAPTIONS[0]);
            let ids = codec.encode(&prompt);
            assert!(
                ids.iter().all(|&id| id != unk),
                "template tokenized with <unk>: {template}"
            );
        }
        for caption in CAPTIONS {
            assert!(codec.encode(caption).iter().all(|&id| id != unk));
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = TextCodec::standard();
        let b = TextCodec::standard();
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        let back: TextCodec = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn decode_rejects_out_of_range_ids() {
        let codec = TextCodec::standard();
        let bad = codec.vocab_size() as u32 + 7;
        assert!(matches!(
            codec.decode(&[bad]),
            Err(TextError::UnknownId(id, _)) if id == bad
        ));
    }
}
