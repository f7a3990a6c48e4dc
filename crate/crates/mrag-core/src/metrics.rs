//! Lexical answer-match metrics.
//!
//! The primary quality signal is character 3-gram recall: how many of the
//! gold answer's character trigrams appear in the system response, counted
//! with multiplicity. Working at the character level instead of whole tokens
//! keeps credit for near-miss transliterations ("sofia kovalevskaia" against
//! gold "sofya kovalevskaya" scores 9/13 instead of 0), which matters when
//! answers cross scripts and spelling conventions.
//!
//! All metrics operate on strings already passed through
//! [`crate::normalize::normalize`]; convenience wrappers taking raw strings
//! plus a policy are provided.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::lang::LanguageCode;
use crate::normalize::{normalize, NormalizationPolicy};

/// Character n-grams of a single token, in order, with duplicates kept.
///
/// A token shorter than `n` scalar values yields the whole token as its only
/// gram, so short words still contribute to recall. An empty token yields
/// nothing.
pub fn char_ngrams(token: &str, n: usize) -> Vec<String> {
    if token.is_empty() || n == 0 {
        return Vec::new();
    }
    let chars: Vec<char> = token.chars().collect();
    if chars.len() < n {
        return vec![token.to_string()];
    }
    chars
        .windows(n)
        .map(|window| window.iter().collect())
        .collect()
}

/// Pooled gram multiset of a normalized string: tokens are split on spaces
/// and their [`char_ngrams`] are merged into one count map.
pub fn gram_multiset(normalized: &str, n: usize) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for token in normalized.split_whitespace() {
        for gram in char_ngrams(token, n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Overlapping occurrences of `gram` within the tokens of a normalized
/// string. Occurrences never span token boundaries.
fn occurrence_count(normalized: &str, gram: &str) -> u32 {
    let gram_chars: Vec<char> = gram.chars().collect();
    if gram_chars.is_empty() {
        return 0;
    }
    let mut total = 0u32;
    for token in normalized.split_whitespace() {
        let token_chars: Vec<char> = token.chars().collect();
        if token_chars.len() < gram_chars.len() {
            continue;
        }
        total += token_chars
            .windows(gram_chars.len())
            .filter(|window| *window == gram_chars.as_slice())
            .count() as u32;
    }
    total
}

/// Matched and total gram counts underlying a recall score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GramOverlap {
    /// Gold grams found in the response, counted with multiplicity.
    pub matched: u32,
    /// Total gold grams.
    pub total: u32,
}

impl GramOverlap {
    /// `matched / total` as a fraction in `[0, 1]`.
    pub fn recall(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            f64::from(self.matched) / f64::from(self.total)
        }
    }
}

/// Character n-gram overlap between one normalized gold answer and a
/// normalized response.
///
/// The gold side is the pooled gram multiset; the response side credits each
/// gold gram up to the number of times it occurs inside response tokens
/// (overlapping occurrences, never across token boundaries). Returns `None`
/// when the gold string is empty, i.e. the answer vanished under
/// normalization and cannot be scored.
pub fn char_ngram_overlap(
    gold_normalized: &str,
    response_normalized: &str,
    n: usize,
) -> Option<GramOverlap> {
    let gold = gram_multiset(gold_normalized, n);
    let total: u32 = gold.values().sum();
    if total == 0 {
        return None;
    }
    let matched = gold
        .iter()
        .map(|(gram, count)| (*count).min(occurrence_count(response_normalized, gram)))
        .sum();
    Some(GramOverlap { matched, total })
}

/// Whole-token overlap between one normalized gold answer and a normalized
/// response: multiset intersection of their space-separated tokens, over the
/// gold token count. `None` when the gold string is empty.
pub fn token_overlap(gold_normalized: &str, response_normalized: &str) -> Option<GramOverlap> {
    let mut gold: BTreeMap<&str, u32> = BTreeMap::new();
    for token in gold_normalized.split_whitespace() {
        *gold.entry(token).or_insert(0) += 1;
    }
    let total: u32 = gold.values().sum();
    if total == 0 {
        return None;
    }
    let mut response: BTreeMap<&str, u32> = BTreeMap::new();
    for token in response_normalized.split_whitespace() {
        *response.entry(token).or_insert(0) += 1;
    }
    let matched = gold
        .iter()
        .map(|(token, count)| (*count).min(response.get(token).copied().unwrap_or(0)))
        .sum();
    Some(GramOverlap { matched, total })
}

/// A recall score plus the flag marking unscorable gold sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallOutcome {
    /// Best recall over the gold answers; 0.0 when `gold_empty` is set.
    pub score: f64,
    /// True when every gold answer normalized to the empty string, so the
    /// record carries no signal and should be excluded from averages.
    pub gold_empty: bool,
}

fn best_overlap<S, F>(gold_answers: &[S], overlap: F) -> RecallOutcome
where
    S: AsRef<str>,
    F: Fn(&str) -> Option<GramOverlap>,
{
    let mut best: Option<f64> = None;
    for gold in gold_answers {
        if let Some(o) = overlap(gold.as_ref()) {
            let score = o.recall();
            best = Some(best.map_or(score, |b: f64| b.max(score)));
        }
    }
    match best {
        Some(score) => RecallOutcome {
            score,
            gold_empty: false,
        },
        None => RecallOutcome {
            score: 0.0,
            gold_empty: true,
        },
    }
}

/// Character 3-gram recall of `response` against a set of gold answers,
/// taking the maximum over answers. Both sides are normalized with `policy`
/// for `lang` first.
pub fn char3_recall<S: AsRef<str>>(
    gold_answers: &[S],
    response: &str,
    lang: LanguageCode,
    policy: &NormalizationPolicy,
) -> RecallOutcome {
    let response_norm = normalize(response, lang, policy);
    best_overlap(gold_answers, |gold| {
        char_ngram_overlap(&normalize(gold, lang, policy), &response_norm, 3)
    })
}

/// Whole-token recall of `response` against a set of gold answers, maximum
/// over answers. The strict counterpart of [`char3_recall`]: transliteration
/// near-misses score zero here.
pub fn token_recall<S: AsRef<str>>(
    gold_answers: &[S],
    response: &str,
    lang: LanguageCode,
    policy: &NormalizationPolicy,
) -> RecallOutcome {
    let response_norm = normalize(response, lang, policy);
    best_overlap(gold_answers, |gold| {
        token_overlap(&normalize(gold, lang, policy), &response_norm)
    })
}

/// Whether any normalized gold answer occurs as a contiguous substring of any
/// normalized haystack. Used for retrieval recall: did a retrieved passage
/// contain the answer verbatim? Returns `None` when every gold answer
/// normalizes to empty.
pub fn contains_normalized_answer<S, H>(
    gold_answers: &[S],
    haystacks: &[H],
    lang: LanguageCode,
    policy: &NormalizationPolicy,
) -> Option<bool>
where
    S: AsRef<str>,
    H: AsRef<str>,
{
    let golds: Vec<String> = gold_answers
        .iter()
        .map(|g| normalize(g.as_ref(), lang, policy))
        .filter(|g| !g.is_empty())
        .collect();
    if golds.is_empty() {
        return None;
    }
    let hit = haystacks.iter().any(|hay| {
        let hay_norm = normalize(hay.as_ref(), lang, policy);
        golds.iter().any(|g| hay_norm.contains(g.as_str()))
    });
    Some(hit)
}

/// Responses must exceed this many Unicode scalar values before language
/// identification is attempted; shorter strings (bare entity names, numbers)
/// are too ambiguous to classify.
pub const CLR_MIN_RESPONSE_CHARS: usize = 20;

/// Whether a response is long enough to count toward the correct-language
/// rate. Strictly more than [`CLR_MIN_RESPONSE_CHARS`] scalar values.
pub fn clr_eligible(response: &str) -> bool {
    response.chars().count() > CLR_MIN_RESPONSE_CHARS
}

/// Running tally for the correct-language rate.
///
/// Feed every response through [`ClrTally::observe`]; the rate is the
/// percentage of eligible responses identified as the user language.
/// Responses the identifier could not classify stay in the denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClrTally {
    /// Responses long enough to classify.
    pub eligible: u64,
    /// Eligible responses identified as the user language.
    pub in_user_lang: u64,
    /// Eligible responses the identifier returned no verdict for.
    pub unresolved: u64,
    /// Responses skipped as too short.
    pub skipped_short: u64,
}

impl ClrTally {
    /// Record one response. `in_user_lang` is the identifier's verdict
    /// (`None` when it could not decide); pass `is_eligible` from
    /// [`clr_eligible`].
    pub fn observe(&mut self, is_eligible: bool, in_user_lang: Option<bool>) {
        if !is_eligible {
            self.skipped_short += 1;
            return;
        }
        self.eligible += 1;
        match in_user_lang {
            Some(true) => self.in_user_lang += 1,
            Some(false) => {}
            None => self.unresolved += 1,
        }
    }

    /// Correct-language rate as a percentage, or `None` when no response was
    /// eligible.
    pub fn rate_percent(&self) -> Option<f64> {
        if self.eligible == 0 {
            None
        } else {
            Some(100.0 * self.in_user_lang as f64 / self.eligible as f64)
        }
    }
}
