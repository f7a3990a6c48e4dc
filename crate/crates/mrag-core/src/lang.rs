//! The closed set of languages the harness understands.

use core::fmt;
use core::str::FromStr;

use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

/// ISO 639-1 code for one of the thirteen supported languages.
///
/// The set is closed on purpose: chunking policy, prompt catalogs, and
/// article lists are all keyed by this enum, so an unknown code is a
/// configuration error rather than a silent fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageCode {
    En,
    Ar,
    Es,
    Fi,
    Fr,
    De,
    Ja,
    It,
    Ko,
    Pt,
    Ru,
    Th,
    Zh,
}

/// Error returned when parsing a language code outside the supported set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLanguage(pub String);

impl fmt::Display for UnknownLanguage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown language code {:?} (expected one of: ", self.0)?;
        for (i, lang) in LanguageCode::ALL.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(lang.as_str())?;
        }
        f.write_str(")")
    }
}

impl core::error::Error for UnknownLanguage {}

impl LanguageCode {
    /// Every supported language, in a fixed canonical order.
    pub const ALL: [LanguageCode; 13] = [
        LanguageCode::En,
        LanguageCode::Ar,
        LanguageCode::Es,
        LanguageCode::Fi,
        LanguageCode::Fr,
        LanguageCode::De,
        LanguageCode::Ja,
        LanguageCode::It,
        LanguageCode::Ko,
        LanguageCode::Pt,
        LanguageCode::Ru,
        LanguageCode::Th,
        LanguageCode::Zh,
    ];

    /// The lowercase ISO 639-1 code.
    pub fn as_str(self) -> &'static str {
        match self {
            LanguageCode::En => "en",
            LanguageCode::Ar => "ar",
            LanguageCode::Es => "es",
            LanguageCode::Fi => "fi",
            LanguageCode::Fr => "fr",
            LanguageCode::De => "de",
            LanguageCode::Ja => "ja",
            LanguageCode::It => "it",
            LanguageCode::Ko => "ko",
            LanguageCode::Pt => "pt",
            LanguageCode::Ru => "ru",
            LanguageCode::Th => "th",
            LanguageCode::Zh => "zh",
        }
    }

    /// Whether written text in this language separates words with whitespace.
    ///
    /// Drives the chunker's unit of measure: word-counted chunks for
    /// whitespace-separated scripts, character-counted chunks otherwise.
    pub fn whitespace_separated(self) -> bool {
        !matches!(
            self,
            LanguageCode::Zh | LanguageCode::Ja | LanguageCode::Th
        )
    }
}

impl FromStr for LanguageCode {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LanguageCode::ALL
            .iter()
            .copied()
            .find(|lang| lang.as_str() == s)
            .ok_or_else(|| UnknownLanguage(s.to_string()))
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_every_code() {
        for lang in LanguageCode::ALL {
            assert_eq!(lang.as_str().parse::<LanguageCode>().unwrap(), lang);
        }
    }

    #[test]
    fn rejects_codes_outside_the_set() {
        for bad in ["", "xx", "EN", "eng", "zh-CN"] {
            assert!(bad.parse::<LanguageCode>().is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn only_zh_ja_th_lack_word_boundaries() {
        let unspaced: alloc::vec::Vec<_> = LanguageCode::ALL
            .into_iter()
            .filter(|lang| !lang.whitespace_separated())
            .collect();
        assert_eq!(
            unspaced,
            [LanguageCode::Ja, LanguageCode::Th, LanguageCode::Zh]
        );
    }

    #[test]
    fn serde_uses_lowercase_codes() {
        let json = serde_json::to_string(&LanguageCode::Zh).unwrap();
        assert_eq!(json, "\"zh\"");
        let back: LanguageCode = serde_json::from_str("\"fi\"").unwrap();
        assert_eq!(back, LanguageCode::Fi);
    }
}
