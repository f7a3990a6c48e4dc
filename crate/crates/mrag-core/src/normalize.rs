//! Answer-string normalization applied before any lexical comparison.
//!
//! The pipeline is: Unicode lowercasing, punctuation replaced by spaces,
//! language-gated article removal, whitespace collapse. It mirrors the
//! answer cleanup used by extractive QA scorers, extended with Unicode-aware
//! punctuation handling and per-language article lists; the function is
//! idempotent so normalized text can be re-normalized safely.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::lang::LanguageCode;

/// Controls which normalization steps run and which tokens count as articles.
#[derive(Debug, Clone)]
pub struct NormalizationPolicy {
    /// Apply Unicode lowercasing.
    pub lowercase: bool,
    /// Replace every code point in Unicode general category P with a space.
    pub strip_punctuation: bool,
    /// Tokens removed per language, already normalized (lowercased,
    /// punctuation-free). Languages absent from the map keep all tokens.
    articles: BTreeMap<LanguageCode, BTreeSet<String>>,
}

impl Default for NormalizationPolicy {
    /// Lowercasing and punctuation stripping on; article removal for English
    /// only (`a`, `an`, `the`). Other languages keep their articles because
    /// gendered and case-inflected article lists need per-language curation.
    fn default() -> Self {
        let mut policy = NormalizationPolicy {
            lowercase: true,
            strip_punctuation: true,
            articles: BTreeMap::new(),
        };
        policy.set_articles(LanguageCode::En, ["a", "an", "the"]);
        policy
    }
}

impl NormalizationPolicy {
    /// A policy that only lowercases, strips punctuation, and collapses
    /// whitespace — no article removal in any language.
    pub fn without_articles() -> Self {
        NormalizationPolicy {
            lowercase: true,
            strip_punctuation: true,
            articles: BTreeMap::new(),
        }
    }

    /// Replace the article list for one language.
    ///
    /// Entries are themselves normalized (lowercase, punctuation to space),
    /// so `"L'"` registers as the token `l`. Entries that normalize to more
    /// than one token or to nothing are ignored: article removal operates on
    /// single tokens.
    pub fn set_articles<I, S>(&mut self, lang: LanguageCode, entries: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for entry in entries {
            let cleaned = scrub(entry.as_ref(), true, true);
            let mut tokens = cleaned.split_whitespace();
            if let (Some(tok), None) = (tokens.next(), tokens.next()) {
                set.insert(String::from(tok));
            }
        }
        self.articles.insert(lang, set);
    }

    /// The normalized article tokens removed for `lang`, if any.
    pub fn articles(&self, lang: LanguageCode) -> Option<&BTreeSet<String>> {
        self.articles.get(&lang)
    }
}

/// Lowercase and/or replace punctuation with spaces, without tokenizing.
fn scrub(text: &str, lowercase: bool, strip_punctuation: bool) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        let is_punct =
            strip_punctuation && ch.general_category_group() == GeneralCategoryGroup::Punctuation;
        if is_punct {
            out.push(' ');
        } else if lowercase {
            for low in ch.to_lowercase() {
                out.push(low);
            }
        } else {
            out.push(ch);
        }
    }
    out
}

/// Normalize `text` for lexical comparison in `lang`.
///
/// Steps, in order: lowercase, punctuation to spaces, drop article tokens
/// configured for `lang`, collapse whitespace runs to single spaces, trim.
/// Text that is nothing but punctuation and articles normalizes to the empty
/// string.
pub fn normalize(text: &str, lang: LanguageCode, policy: &NormalizationPolicy) -> String {
    let scrubbed = scrub(text, policy.lowercase, policy.strip_punctuation);
    let empty = BTreeSet::new();
    let articles = policy.articles.get(&lang).unwrap_or(&empty);

    let kept: Vec<&str> = scrubbed
        .split_whitespace()
        .filter(|tok| !articles.contains(*tok))
        .collect();
    kept.join(" ")
}
