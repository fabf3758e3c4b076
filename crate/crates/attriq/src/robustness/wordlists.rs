use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RobustnessError;

const STOPWORDS: &str = include_str!("../../data/stopwords.txt");
const ORDER_WORDS: &str = include_str!("../../data/order_words.txt");
const SUBJECT_NOUNS: &str = include_str!("../../data/subject_nouns.txt");
const ATTACK_PHRASES: &str = include_str!("../../data/attack_phrases.txt");
const VQA_PREFIXES: &str = include_str!("../../data/vqa_prefixes.txt");

/// One entry per non-blank line, lowercased; lines starting with `#` are
/// comments.
pub fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_list(path: &Path) -> Result<Vec<String>, RobustnessError> {
    let text = fs::read_to_string(path).map_err(|source| RobustnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_list(&text))
}

/// Word and phrase lists driving the attacks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordLists {
    pub stopwords: Vec<String>,
    /// Questions containing any of these are excluded from row reordering.
    pub order_words: Vec<String>,
    pub subject_nouns: Vec<String>,
    /// Content-free phrases for table questions.
    pub attack_phrases: Vec<String>,
    /// Content-free prefixes for classifier questions.
    pub vqa_prefixes: Vec<String>,
}

impl WordLists {
    /// The lists shipped in `data/`.
    pub fn shipped() -> Self {
        Self {
            stopwords: parse_list(STOPWORDS),
            order_words: parse_list(ORDER_WORDS),
            subject_nouns: parse_list(SUBJECT_NOUNS),
            attack_phrases: parse_list(ATTACK_PHRASES),
            vqa_prefixes: parse_list(VQA_PREFIXES),
        }
    }
}

impl Default for WordLists {
    fn default() -> Self {
        Self::shipped()
    }
}
