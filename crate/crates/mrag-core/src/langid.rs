//! Self-contained language identification for response auditing.
//!
//! Identification runs in two stages. A script histogram settles the
//! languages with distinctive scripts outright: Hangul means Korean, kana
//! means Japanese, Han without kana means Chinese, and Cyrillic, Arabic, and
//! Thai map one-to-one. Texts written mostly in Latin letters fall through to
//! stopword and diacritic profiles that separate English, French, German,
//! Spanish, Italian, Portuguese, and Finnish.
//!
//! This is deliberately simple — no external model, no weights file — because
//! its job is auditing whether a generated answer is in the expected
//! language, where the candidates are known and the texts are sentence-sized.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::LanguageCode;

/// Texts with fewer letters than this return no verdict.
pub const MIN_LETTERS: usize = 5;

/// How a verdict was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdMethod {
    /// The script-histogram + stopword-profile identifier in this module.
    Builtin,
    /// An external identification service.
    External,
}

/// The identifier's answer for one text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangVerdict {
    /// Identified language, or `None` when the text carries no usable signal.
    pub lang: Option<LanguageCode>,
    /// Rough certainty in `[0, 1]`; 1.0 for unambiguous single-script texts.
    pub confidence: f64,
    /// Provenance of the verdict.
    pub method: IdMethod,
}

impl LangVerdict {
    fn unknown() -> LangVerdict {
        LangVerdict {
            lang: None,
            confidence: 0.0,
            method: IdMethod::Builtin,
        }
    }
}

/// Stopword and diacritic profile for one Latin-script language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatinProfile {
    pub lang: LanguageCode,
    /// Lowercased function words; matched per token occurrence.
    pub stopwords: BTreeSet<String>,
    /// Characteristic letters; matched per character occurrence.
    pub diacritics: BTreeSet<char>,
}

/// Error parsing a profile file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ProfileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "profile line {}: {}", self.line, self.message)
    }
}

impl core::error::Error for ProfileError {}

impl LatinProfile {
    /// Parse a profile file. Lines are `lang <code>`, `stopwords <words...>`
    /// (repeatable), or `diacritics <chars>` (repeatable); `#` starts a
    /// comment.
    pub fn parse(src: &str) -> Result<LatinProfile, ProfileError> {
        let mut lang: Option<LanguageCode> = None;
        let mut stopwords = BTreeSet::new();
        let mut diacritics = BTreeSet::new();
        for (idx, raw) in src.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
            match key {
                "lang" => {
                    let code = rest.trim().parse().map_err(
                        |e: crate::lang::UnknownLanguage| ProfileError {
                            line,
                            message: e.to_string(),
                        },
                    )?;
                    lang = Some(code);
                }
                "stopwords" => {
                    stopwords.extend(rest.split_whitespace().map(|w| w.to_string()));
                }
                "diacritics" => {
                    diacritics.extend(rest.chars().filter(|c| !c.is_whitespace()));
                }
                other => {
                    return Err(ProfileError {
                        line,
                        message: alloc::format!("unknown key {other:?}"),
                    })
                }
            }
        }
        let lang = lang.ok_or(ProfileError {
            line: 0,
            message: "missing `lang` line".to_string(),
        })?;
        Ok(LatinProfile {
            lang,
            stopwords,
            diacritics,
        })
    }
}

/// Letter groups relevant to the script stage. Kana and Han pool into one
/// CJK group so mixed Japanese text is judged as a whole; kana presence then
/// separates Japanese from Chinese.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
struct ScriptCounts {
    hangul: usize,
    kana: usize,
    han: usize,
    cyrillic: usize,
    arabic: usize,
    thai: usize,
    latin: usize,
    other: usize,
}

impl ScriptCounts {
    fn total(&self) -> usize {
        self.hangul
            + self.kana
            + self.han
            + self.cyrillic
            + self.arabic
            + self.thai
            + self.latin
            + self.other
    }
}

fn classify_letter(ch: char) -> Option<fn(&mut ScriptCounts) -> &mut usize> {
    let code = ch as u32;
    let bucket: fn(&mut ScriptCounts) -> &mut usize = match code {
        0xAC00..=0xD7AF | 0x1100..=0x11FF | 0x3130..=0x318F | 0xA960..=0xA97F => {
            |c: &mut ScriptCounts| &mut c.hangul
        }
        0x3040..=0x309F | 0x30A0..=0x30FF | 0x31F0..=0x31FF | 0xFF66..=0xFF9D => {
            |c: &mut ScriptCounts| &mut c.kana
        }
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0xF900..=0xFAFF | 0x20000..=0x2A6DF => {
            |c: &mut ScriptCounts| &mut c.han
        }
        0x0400..=0x052F | 0x2DE0..=0x2DFF | 0xA640..=0xA69F => |c: &mut ScriptCounts| &mut c.cyrillic,
        0x0600..=0x06FF | 0x0750..=0x077F | 0x08A0..=0x08FF | 0xFB50..=0xFDFF
        | 0xFE70..=0xFEFF => |c: &mut ScriptCounts| &mut c.arabic,
        0x0E00..=0x0E7F => |c: &mut ScriptCounts| &mut c.thai,
        0x0041..=0x005A | 0x0061..=0x007A | 0x00C0..=0x024F | 0x1E00..=0x1EFF => {
            |c: &mut ScriptCounts| &mut c.latin
        }
        _ => |c: &mut ScriptCounts| &mut c.other,
    };
    if ch.is_alphabetic() {
        Some(bucket)
    } else {
        None
    }
}

fn script_histogram(text: &str) -> ScriptCounts {
    let mut counts = ScriptCounts::default();
    for ch in text.chars() {
        if let Some(bucket) = classify_letter(ch) {
            *bucket(&mut counts) += 1;
        }
    }
    counts
}

/// Minimum normalized profile score for a Latin-stage verdict; texts scoring
/// below this in every profile (e.g. letter gibberish) return unknown.
const LATIN_SCORE_THRESHOLD: f64 = 0.05;

/// The builtin identifier: script histogram plus Latin profiles.
#[derive(Debug, Clone)]
pub struct LangIdentifier {
    profiles: Vec<LatinProfile>,
}

impl LangIdentifier {
    /// Identifier with the profiles compiled into the binary.
    pub fn builtin() -> LangIdentifier {
        let profiles = BUILTIN_PROFILE_SOURCES
            .iter()
            .map(|src| LatinProfile::parse(src).expect("builtin langid profile must parse"))
            .collect();
        LangIdentifier { profiles }
    }

    /// Identifier with custom Latin profiles (the script stage is fixed).
    pub fn with_profiles(profiles: Vec<LatinProfile>) -> LangIdentifier {
        LangIdentifier { profiles }
    }

    /// Identify the language of `text`.
    pub fn identify(&self, text: &str) -> LangVerdict {
        let counts = script_histogram(text);
        let total = counts.total();
        if total < MIN_LETTERS {
            return LangVerdict::unknown();
        }

        let cjk = counts.kana + counts.han;
        let groups = [
            (counts.hangul, 0usize),
            (cjk, 1),
            (counts.cyrillic, 2),
            (counts.arabic, 3),
            (counts.thai, 4),
            (counts.latin, 5),
            (counts.other, 6),
        ];
        let &(dominant_count, dominant_group) =
            groups.iter().max_by_key(|(count, _)| *count).unwrap();
        let share = dominant_count as f64 / total as f64;

        let lang = match dominant_group {
            0 => Some(LanguageCode::Ko),
            1 => {
                if counts.kana > 0 {
                    Some(LanguageCode::Ja)
                } else {
                    Some(LanguageCode::Zh)
                }
            }
            2 => Some(LanguageCode::Ru),
            3 => Some(LanguageCode::Ar),
            4 => Some(LanguageCode::Th),
            5 => return self.identify_latin(text),
            _ => None,
        };
        match lang {
            Some(lang) => LangVerdict {
                lang: Some(lang),
                confidence: share,
                method: IdMethod::Builtin,
            },
            None => LangVerdict::unknown(),
        }
    }

    /// Stopword/diacritic scoring for majority-Latin text.
    fn identify_latin(&self, text: &str) -> LangVerdict {
        let lowered: String = text.chars().flat_map(char::to_lowercase).collect();
        let tokens: Vec<&str> = lowered
            .split(|c: char| !c.is_alphabetic())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            return LangVerdict::unknown();
        }

        let mut best: Option<(f64, LanguageCode)> = None;
        let mut second = 0.0f64;
        for profile in &self.profiles {
            let stopword_hits = tokens
                .iter()
                .filter(|t| profile.stopwords.contains(**t))
                .count();
            let diacritic_hits = lowered
                .chars()
                .filter(|c| profile.diacritics.contains(c))
                .count();
            let score = (2 * stopword_hits + diacritic_hits) as f64 / tokens.len() as f64;
            match best {
                Some((best_score, _)) if score <= best_score => {
                    second = second.max(score);
                }
                _ => {
                    if let Some((prev, _)) = best {
                        second = second.max(prev);
                    }
                    best = Some((score, profile.lang));
                }
            }
        }

        match best {
            Some((score, lang)) if score >= LATIN_SCORE_THRESHOLD => {
                let confidence = if second <= 0.0 {
                    1.0
                } else {
                    score / (score + second)
                };
                LangVerdict {
                    lang: Some(lang),
                    confidence,
                    method: IdMethod::Builtin,
                }
            }
            _ => LangVerdict::unknown(),
        }
    }
}

/// Builtin Latin-script profiles.
const BUILTIN_PROFILE_SOURCES: [&str; 7] = [
    include_str!("../data/langid/en.profile"),
    include_str!("../data/langid/fr.profile"),
    include_str!("../data/langid/de.profile"),
    include_str!("../data/langid/es.profile"),
    include_str!("../data/langid/it.profile"),
    include_str!("../data/langid/pt.profile"),
    include_str!("../data/langid/fi.profile"),
];
