//! Vocabulary, one-hot voice codec and compositional train/test splits.
//!
//! Token indexes are fixed: 0 is silence, 1-6 the verbs, 7-12 the colors and
//! 13-17 the object nouns. A sentence is always three tokens long.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;

use crate::error::{CoreError, Result};
use crate::rng::stream_rng;

/// Number of one-hot entries per voice row.
pub const VOCAB_SIZE: usize = 18;
/// Token index of silence.
pub const SILENCE: usize = 0;
/// Tokens per sentence.
pub const SENTENCE_LEN: usize = 3;

/// One one-hot voice row.
pub type VoiceRow = [f64; VOCAB_SIZE];

/// The six action categories, in token order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verb {
    Watch,
    BeNear,
    TouchTop,
    PushForward,
    PushLeft,
    PushRight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Color {
    Red,
    Green,
    Blue,
    Cyan,
    Magenta,
    Yellow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    Pillar,
    Pole,
    Dumbbell,
    Cone,
    Hourglass,
}

impl Verb {
    pub const ALL: [Verb; 6] =
        [Verb::Watch, Verb::BeNear, Verb::TouchTop, Verb::PushForward, Verb::PushLeft, Verb::PushRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> usize {
        1 + self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Verb::Watch => "watch",
            Verb::BeNear => "be near",
            Verb::TouchTop => "touch the top",
            Verb::PushForward => "push forward",
            Verb::PushLeft => "push left",
            Verb::PushRight => "push right",
        }
    }

    /// Short identifier used in CSV headers.
    pub fn slug(self) -> &'static str {
        match self {
            Verb::Watch => "watch",
            Verb::BeNear => "be_near",
            Verb::TouchTop => "touch_top",
            Verb::PushForward => "push_forward",
            Verb::PushLeft => "push_left",
            Verb::PushRight => "push_right",
        }
    }
}

impl Color {
    pub const ALL: [Color; 6] = [Color::Red, Color::Green, Color::Blue, Color::Cyan, Color::Magenta, Color::Yellow];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> usize {
        7 + self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Cyan => "cyan",
            Color::Magenta => "magenta",
            Color::Yellow => "yellow",
        }
    }

    pub fn rgb(self) -> [f64; 3] {
        match self {
            Color::Red => [1.0, 0.0, 0.0],
            Color::Green => [0.0, 1.0, 0.0],
            Color::Blue => [0.0, 0.0, 1.0],
            Color::Cyan => [0.0, 1.0, 1.0],
            Color::Magenta => [1.0, 0.0, 1.0],
            Color::Yellow => [1.0, 1.0, 0.0],
        }
    }
}

impl Shape {
    pub const ALL: [Shape; 5] = [Shape::Pillar, Shape::Pole, Shape::Dumbbell, Shape::Cone, Shape::Hourglass];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> usize {
        13 + self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Pillar => "pillar",
            Shape::Pole => "pole",
            Shape::Dumbbell => "dumbbell",
            Shape::Cone => "cone",
            Shape::Hourglass => "hourglass",
        }
    }
}

/// A decoded token.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Word {
    Silence,
    Verb(Verb),
    Color(Color),
    Shape(Shape),
}

impl Word {
    pub fn from_token(token: usize) -> Option<Word> {
        match token {
            0 => Some(Word::Silence),
            1..=6 => Some(Word::Verb(Verb::ALL[token - 1])),
            7..=12 => Some(Word::Color(Color::ALL[token - 7])),
            13..=17 => Some(Word::Shape(Shape::ALL[token - 13])),
            _ => None,
        }
    }

    pub fn token(self) -> usize {
        match self {
            Word::Silence => SILENCE,
            Word::Verb(v) => v.token(),
            Word::Color(c) => c.token(),
            Word::Shape(s) => s.token(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Word::Silence => "(silence)",
            Word::Verb(v) => v.name(),
            Word::Color(c) => c.name(),
            Word::Shape(s) => s.name(),
        }
    }

    /// Looks a word up by its display name.
    pub fn parse(name: &str) -> Result<Word> {
        let name = name.trim();
        (0..VOCAB_SIZE)
            .filter_map(Word::from_token)
            .find(|w| w.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| CoreError::UnknownToken(name.to_string()))
    }
}

/// An imperative verb-adjective-noun sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sentence {
    pub verb: Verb,
    pub color: Color,
    pub shape: Shape,
}

impl Sentence {
    pub fn new(verb: Verb, color: Color, shape: Shape) -> Self {
        Self { verb, color, shape }
    }

    pub fn tokens(&self) -> [usize; SENTENCE_LEN] {
        [self.verb.token(), self.color.token(), self.shape.token()]
    }

    /// `verb|adjective|noun` as used in split files.
    pub fn to_record(&self) -> String {
        format!("{}|{}|{}", self.verb.name(), self.color.name(), self.shape.name())
    }

    pub fn parse_record(line: &str) -> Result<Sentence> {
        let mut parts = line.split('|');
        let (Some(v), Some(c), Some(s), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(CoreError::UnknownToken(line.to_string()));
        };
        match (Word::parse(v)?, Word::parse(c)?, Word::parse(s)?) {
            (Word::Verb(v), Word::Color(c), Word::Shape(s)) => Ok(Sentence::new(v, c, s)),
            _ => Err(CoreError::UnknownToken(line.to_string())),
        }
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.verb.name(), self.color.name(), self.shape.name())
    }
}

fn one_hot(token: usize) -> VoiceRow {
    let mut row = [0.0; VOCAB_SIZE];
    row[token] = 1.0;
    row
}

/// Three one-hot rows, one per token.
pub fn encode_sentence(sentence: &Sentence) -> [VoiceRow; SENTENCE_LEN] {
    sentence.tokens().map(one_hot)
}

/// The single silence row.
pub fn silence() -> [VoiceRow; 1] {
    [one_hot(SILENCE)]
}

/// Index of the single 1 in a valid one-hot row.
pub fn decode_row(row: &VoiceRow) -> Result<usize> {
    let mut hot = None;
    for (i, &v) in row.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(CoreError::MalformedVoice("more than one hot entry"));
            }
            hot = Some(i);
        } else if v != 0.0 {
            return Err(CoreError::MalformedVoice("entries must be 0 or 1"));
        }
    }
    hot.ok_or(CoreError::MalformedVoice("no hot entry"))
}

/// What a voice utters: silence or a full sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Utterance {
    Silence,
    Sentence(Sentence),
}

/// Decodes one or three voice rows.
pub fn decode(rows: &[VoiceRow]) -> Result<Utterance> {
    match rows {
        [row] => match decode_row(row)? {
            SILENCE => Ok(Utterance::Silence),
            _ => Err(CoreError::MalformedVoice("a single row must be silence")),
        },
        [a, b, c] => {
            let words = (Word::from_token(decode_row(a)?), Word::from_token(decode_row(b)?), Word::from_token(decode_row(c)?));
            match words {
                (Some(Word::Verb(v)), Some(Word::Color(c)), Some(Word::Shape(s))) => {
                    Ok(Utterance::Sentence(Sentence::new(v, c, s)))
                }
                _ => Err(CoreError::MalformedVoice("rows are not verb, adjective, noun")),
            }
        }
        _ => Err(CoreError::MalformedVoice("voice must have 1 or 3 rows")),
    }
}

/// The feedback voice for an achieved goal, or silence when nothing happened.
pub fn feedback_sentence(achieved: Option<Sentence>) -> Vec<VoiceRow> {
    match achieved {
        Some(s) => encode_sentence(&s).to_vec(),
        None => silence().to_vec(),
    }
}

/// Active prefix sizes of the verb, adjective and noun lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScaleConfig {
    pub verbs: usize,
    pub colors: usize,
    pub shapes: usize,
}

impl ScaleConfig {
    pub const FULL: ScaleConfig = ScaleConfig { verbs: 6, colors: 6, shapes: 5 };
    pub const MIDDLE: ScaleConfig = ScaleConfig { verbs: 5, colors: 5, shapes: 4 };
    pub const SMALL: ScaleConfig = ScaleConfig { verbs: 4, colors: 4, shapes: 3 };

    pub fn new(verbs: usize, colors: usize, shapes: usize) -> Result<Self> {
        if !(1..=6).contains(&verbs) || !(1..=6).contains(&colors) || !(1..=5).contains(&shapes) {
            return Err(CoreError::Config(format!("scale {verbs}x{colors}x{shapes} outside vocabulary")));
        }
        Ok(Self { verbs, colors, shapes })
    }

    /// Parses `full`, `middle`, `small` or `VxCxS`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::FULL),
            "middle" => Ok(Self::MIDDLE),
            "small" => Ok(Self::SMALL),
            other => {
                let dims: Vec<usize> = other.split('x').filter_map(|p| p.parse().ok()).collect();
                match dims[..] {
                    [v, c, s] => Self::new(v, c, s),
                    _ => Err(CoreError::Config(format!("unknown scale `{other}`"))),
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Self::FULL => "full".to_string(),
            Self::MIDDLE => "middle".to_string(),
            Self::SMALL => "small".to_string(),
            s => format!("{}x{}x{}", s.verbs, s.colors, s.shapes),
        }
    }

    pub fn verbs(&self) -> &'static [Verb] {
        &Verb::ALL[..self.verbs]
    }

    pub fn colors(&self) -> &'static [Color] {
        &Color::ALL[..self.colors]
    }

    pub fn shapes(&self) -> &'static [Shape] {
        &Shape::ALL[..self.shapes]
    }

    pub fn contains(&self, s: &Sentence) -> bool {
        s.verb.index() < self.verbs && s.color.index() < self.colors && s.shape.index() < self.shapes
    }

    /// Every composition, in canonical (verb, color, shape) order.
    pub fn all_sentences(&self) -> Vec<Sentence> {
        let mut out = Vec::with_capacity(self.verbs * self.colors * self.shapes);
        for &v in self.verbs() {
            for &c in self.colors() {
                for &s in self.shapes() {
                    out.push(Sentence::new(v, c, s));
                }
            }
        }
        out
    }

    /// Number of training sentences: one third, rounded to nearest.
    pub fn train_count(&self) -> usize {
        let total = self.verbs * self.colors * self.shapes;
        (total + 1) / 3
    }

    pub fn validate(&self, s: &Sentence) -> Result<()> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(CoreError::InvalidSentence { sentence: s.to_string(), scale: self.name() })
        }
    }
}

/// Disjoint learned/unlearned sentence sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub scale: ScaleConfig,
    pub seed: u64,
    pub train: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

impl Split {
    /// True when every active verb, color and shape occurs in `train`.
    pub fn covers_vocabulary(&self) -> bool {
        covers(&self.scale, &self.train)
    }
}

fn covers(scale: &ScaleConfig, train: &[Sentence]) -> bool {
    scale.verbs().iter().all(|v| train.iter().any(|s| s.verb == *v))
        && scale.colors().iter().all(|c| train.iter().any(|s| s.color == *c))
        && scale.shapes().iter().all(|sh| train.iter().any(|s| s.shape == *sh))
}

/// Draws a one-third training split, reshuffling until every word is covered.
pub fn generate_split(scale: ScaleConfig, seed: u64) -> Split {
    let mut rng = stream_rng(seed, crate::rng::stream::SPLIT);
    let n_train = scale.train_count();
    let mut all = scale.all_sentences();
    loop {
        all.shuffle(&mut rng);
        if covers(&scale, &all[..n_train]) {
            let mut train = all[..n_train].to_vec();
            let mut test = all[n_train..].to_vec();
            train.sort();
            test.sort();
            return Split { scale, seed, train, test };
        }
    }
}
