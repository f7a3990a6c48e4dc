//! System-prompt catalog, context formatting, and chat assembly.
//!
//! The harness ships six system-prompt variants that differ in two axes:
//! what they ask for (answer short; answer in the question's language; answer
//! in a named language; additionally write named entities in that language's
//! alphabet) and which language the instruction itself is written in
//! (English, or the user's language). Prompt texts are data, not code: they
//! live in catalog files so new languages or variants need no recompile, and
//! a `{UL}` placeholder is substituted with the user language's name written
//! in the prompt's own language.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chunk::Passage;
use crate::lang::LanguageCode;

/// Placeholder substituted with a language name when rendering.
pub const UL_PLACEHOLDER: &str = "{UL}";

/// The six system-prompt variants. The `(EN)`/`(UL)` suffix in the label says
/// which language the instruction text itself is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptLabel {
    /// English instruction: answer as short as possible.
    #[serde(rename = "Reply short (EN)")]
    ReplyShortEn,
    /// English instruction: additionally answer in the question's language.
    #[serde(rename = "Reply short in same lang (EN)")]
    ReplySameLangEn,
    /// English instruction: additionally answer in the named user language.
    #[serde(rename = "Reply short in UL (EN)")]
    ReplyInUserLangEn,
    /// User-language instruction: answer as short as possible.
    #[serde(rename = "Reply short (UL)")]
    ReplyShortUl,
    /// User-language instruction: additionally answer in the named language.
    #[serde(rename = "Reply short in UL (UL)")]
    ReplyInUserLangUl,
    /// User-language instruction: answer in the named language and write
    /// named entities in its alphabet.
    #[serde(rename = "Reply short in UL + NE in UL (UL)")]
    ReplyInUserLangEntitiesUl,
}

/// Which language the instruction text is looked up in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptLanguage {
    /// The English template serves every user language.
    English,
    /// The template is looked up in the user's language.
    UserLanguage,
}

impl PromptLabel {
    /// All labels, catalog order.
    pub const ALL: [PromptLabel; 6] = [
        PromptLabel::ReplyShortEn,
        PromptLabel::ReplySameLangEn,
        PromptLabel::ReplyInUserLangEn,
        PromptLabel::ReplyShortUl,
        PromptLabel::ReplyInUserLangUl,
        PromptLabel::ReplyInUserLangEntitiesUl,
    ];

    /// The display label as it appears in catalogs, configs, and reports.
    pub fn as_str(self) -> &'static str {
        match self {
            PromptLabel::ReplyShortEn => "Reply short (EN)",
            PromptLabel::ReplySameLangEn => "Reply short in same lang (EN)",
            PromptLabel::ReplyInUserLangEn => "Reply short in UL (EN)",
            PromptLabel::ReplyShortUl => "Reply short (UL)",
            PromptLabel::ReplyInUserLangUl => "Reply short in UL (UL)",
            PromptLabel::ReplyInUserLangEntitiesUl => "Reply short in UL + NE in UL (UL)",
        }
    }

    /// Whether the instruction text is English or the user's language.
    pub fn language_rule(self) -> PromptLanguage {
        match self {
            PromptLabel::ReplyShortEn
            | PromptLabel::ReplySameLangEn
            | PromptLabel::ReplyInUserLangEn => PromptLanguage::English,
            PromptLabel::ReplyShortUl
            | PromptLabel::ReplyInUserLangUl
            | PromptLabel::ReplyInUserLangEntitiesUl => PromptLanguage::UserLanguage,
        }
    }

    /// Whether the template names the user language via [`UL_PLACEHOLDER`].
    pub fn needs_placeholder(self) -> bool {
        matches!(
            self,
            PromptLabel::ReplyInUserLangEn
                | PromptLabel::ReplyInUserLangUl
                | PromptLabel::ReplyInUserLangEntitiesUl
        )
    }
}

/// Error for labels outside the catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown prompt label {:?}", self.0)
    }
}

impl core::error::Error for UnknownLabel {}

impl FromStr for PromptLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptLabel::ALL
            .iter()
            .copied()
            .find(|label| label.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

impl fmt::Display for PromptLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One catalog row: a template in a concrete language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub label: PromptLabel,
    /// Language the template text is written in.
    pub lang: LanguageCode,
    /// Raw template, possibly containing [`UL_PLACEHOLDER`].
    pub template: String,
}

/// Errors while parsing or validating catalog data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatalogError {
    /// A line did not have the expected tab-separated fields.
    Malformed { line: usize, message: String },
    /// A template for a placeholder-bearing label lacks `{UL}`, or a
    /// placeholder appears where none belongs.
    Placeholder {
        label: PromptLabel,
        lang: LanguageCode,
        message: String,
    },
}

impl fmt::Display for CatalogError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CatalogError::Malformed { line, message } => {
                write!(f, "catalog line {line}: {message}")
            }
            CatalogError::Placeholder {
                label,
                lang,
                message,
            } => write!(f, "catalog entry ({label:?}, {lang}): {message}"),
        }
    }
}

impl core::error::Error for CatalogError {}

/// Rendering failures: the catalog or name table lacks a needed entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RenderError {
    MissingTemplate {
        label: PromptLabel,
        lang: LanguageCode,
    },
    MissingLanguageName {
        prompt_lang: LanguageCode,
        user_lang: LanguageCode,
    },
}

impl fmt::Display for RenderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RenderError::MissingTemplate { label, lang } => write!(
                f,
                "no prompt template for label {:?} in language {lang}",
                label.as_str()
            ),
            RenderError::MissingLanguageName {
                prompt_lang,
                user_lang,
            } => write!(
                f,
                "no name for language {user_lang} written in {prompt_lang}"
            ),
        }
    }
}

impl core::error::Error for RenderError {}

/// The set of prompt templates, keyed by label and template language.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptCatalog {
    entries: BTreeMap<(PromptLabel, LanguageCode), String>,
}

impl PromptCatalog {
    /// The catalog compiled into the binary: English templates for all six
    /// labels plus user-language templates for the twelve other languages.
    pub fn builtin() -> PromptCatalog {
        let mut catalog = PromptCatalog::default();
        for src in BUILTIN_CATALOG_SOURCES {
            catalog
                .extend_from_tsv(src)
                .expect("builtin prompt catalog must parse");
        }
        catalog
    }

    /// Parse tab-separated catalog lines (`label \t lang \t text`) and add
    /// them, validating placeholder usage per label. Empty lines and lines
    /// starting with `#` are skipped. Later entries overwrite earlier ones.
    pub fn extend_from_tsv(&mut self, src: &str) -> Result<(), CatalogError> {
        for (idx, raw) in src.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim_end_matches(['\r']);
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let mut fields = trimmed.splitn(3, '\t');
            let (label, lang, text) = match (fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => {
                    return Err(CatalogError::Malformed {
                        line,
                        message: "expected three tab-separated fields: label, lang, text".into(),
                    })
                }
            };
            let label: PromptLabel = label.parse().map_err(|e: UnknownLabel| {
                CatalogError::Malformed {
                    line,
                    message: e.to_string(),
                }
            })?;
            let lang: LanguageCode =
                lang.parse()
                    .map_err(|e: crate::lang::UnknownLanguage| CatalogError::Malformed {
                        line,
                        message: e.to_string(),
                    })?;
            self.insert(PromptSpec {
                label,
                lang,
                template: text.to_string(),
            })?;
        }
        Ok(())
    }

    /// Add one entry, validating placeholder usage.
    pub fn insert(&mut self, spec: PromptSpec) -> Result<(), CatalogError> {
        let has_placeholder = spec.template.contains(UL_PLACEHOLDER);
        if spec.label.needs_placeholder() && !has_placeholder {
            return Err(CatalogError::Placeholder {
                label: spec.label,
                lang: spec.lang,
                message: "template must contain the {UL} placeholder at least once".into(),
            });
        }
        if !spec.label.needs_placeholder() && has_placeholder {
            return Err(CatalogError::Placeholder {
                label: spec.label,
                lang: spec.lang,
                message: "template must not contain the {UL} placeholder".into(),
            });
        }
        self.entries.insert((spec.label, spec.lang), spec.template);
        Ok(())
    }

    /// Raw template text for a label in a concrete language.
    pub fn template(&self, label: PromptLabel, lang: LanguageCode) -> Option<&str> {
        self.entries.get(&(label, lang)).map(String::as_str)
    }

    /// One catalog row, if present.
    pub fn spec(&self, label: PromptLabel, lang: LanguageCode) -> Option<PromptSpec> {
        self.template(label, lang).map(|template| PromptSpec {
            label,
            lang,
            template: template.to_string(),
        })
    }

    /// Check that `label` can be rendered for every language in `langs`.
    pub fn ensure_renderable(
        &self,
        label: PromptLabel,
        langs: &[LanguageCode],
        names: &LanguageNameCatalog,
    ) -> Result<(), RenderError> {
        for &ul in langs {
            render_system_prompt(self, names, label, ul)?;
        }
        Ok(())
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Whether the catalog holds no entries.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Names of languages written in other languages, keyed by
/// `(language the name is written in, language being named)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LanguageNameCatalog {
    names: BTreeMap<(LanguageCode, LanguageCode), String>,
}

impl LanguageNameCatalog {
    /// The name table compiled into the binary: English names for all
    /// thirteen languages plus each language's native self-name.
    pub fn builtin() -> LanguageNameCatalog {
        let mut catalog = LanguageNameCatalog::default();
        catalog
            .extend_from_tsv(BUILTIN_LANGUAGE_NAMES)
            .expect("builtin language name table must parse");
        catalog
    }

    /// Parse tab-separated lines (`prompt_lang \t named_lang \t name`).
    pub fn extend_from_tsv(&mut self, src: &str) -> Result<(), CatalogError> {
        for (idx, raw) in src.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim_end_matches(['\r']);
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let mut fields = trimmed.splitn(3, '\t');
            let (written_in, named, name) = match (fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(b), Some(c)) if !c.is_empty() => (a, b, c),
                _ => {
                    return Err(CatalogError::Malformed {
                        line,
                        message:
                            "expected three tab-separated fields: prompt_lang, named_lang, name"
                                .into(),
                    })
                }
            };
            let written_in: LanguageCode = written_in.parse().map_err(
                |e: crate::lang::UnknownLanguage| CatalogError::Malformed {
                    line,
                    message: e.to_string(),
                },
            )?;
            let named: LanguageCode =
                named
                    .parse()
                    .map_err(|e: crate::lang::UnknownLanguage| CatalogError::Malformed {
                        line,
                        message: e.to_string(),
                    })?;
            self.names.insert((written_in, named), name.to_string());
        }
        Ok(())
    }

    /// The name of `named`, written in `written_in`.
    pub fn name(&self, written_in: LanguageCode, named: LanguageCode) -> Option<&str> {
        self.names.get(&(written_in, named)).map(String::as_str)
    }

    /// Add or replace one name.
    pub fn set(&mut self, written_in: LanguageCode, named: LanguageCode, name: &str) {
        self.names.insert((written_in, named), name.to_string());
    }
}

/// Render the system prompt for `label` addressed to a `user_lang` speaker.
///
/// The template is fetched in English or in `user_lang` according to the
/// label's language rule, then every `{UL}` occurrence is replaced with the
/// user language's name written in the template's language.
pub fn render_system_prompt(
    catalog: &PromptCatalog,
    names: &LanguageNameCatalog,
    label: PromptLabel,
    user_lang: LanguageCode,
) -> Result<String, RenderError> {
    let prompt_lang = match label.language_rule() {
        PromptLanguage::English => LanguageCode::En,
        PromptLanguage::UserLanguage => user_lang,
    };
    let template = catalog
        .template(label, prompt_lang)
        .ok_or(RenderError::MissingTemplate {
            label,
            lang: prompt_lang,
        })?;
    if !label.needs_placeholder() {
        return Ok(template.to_string());
    }
    let name = names
        .name(prompt_lang, user_lang)
        .ok_or(RenderError::MissingLanguageName {
            prompt_lang,
            user_lang,
        })?;
    Ok(template.replace(UL_PLACEHOLDER, name))
}

/// Format retrieved passages into the context block shown to the generator:
/// one `Document N: title` header per passage followed by its text, blocks
/// separated by blank lines, numbering from 1 in rank order. Empty input
/// formats to an empty string.
pub fn format_context<'a, I>(passages: I) -> String
where
    I: IntoIterator<Item = &'a Passage>,
{
    let mut out = String::new();
    for (i, passage) in passages.into_iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str("Document ");
        out.push_str(&(i + 1).to_string());
        out.push_str(": ");
        out.push_str(&passage.title);
        out.push('\n');
        out.push_str(&passage.text);
    }
    out
}

/// Message roles on the chat wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

/// One chat message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// A generation request: system prompt plus one user turn, greedy decoding,
/// bounded output length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub max_new_tokens: u32,
    /// Deterministic decoding; mapped to temperature 0 on HTTP wire formats.
    pub greedy: bool,
}

/// Assemble the chat request: system message, then a user message holding the
/// context block (when non-empty), a blank line, and the question.
pub fn build_chat(
    system_prompt: &str,
    context_block: &str,
    question: &str,
    max_new_tokens: u32,
) -> ChatRequest {
    let user_content = if context_block.is_empty() {
        question.to_string()
    } else {
        let mut s = String::with_capacity(context_block.len() + 2 + question.len());
        s.push_str(context_block);
        s.push_str("\n\n");
        s.push_str(question);
        s
    };
    ChatRequest {
        messages: alloc::vec![
            ChatMessage {
                role: Role::System,
                content: system_prompt.to_string(),
            },
            ChatMessage {
                role: Role::User,
                content: user_content,
            },
        ],
        max_new_tokens,
        greedy: true,
    }
}

/// Builtin catalog sources, one file per template language.
const BUILTIN_CATALOG_SOURCES: [&str; 13] = [
    include_str!("../data/prompts/en.catalog"),
    include_str!("../data/prompts/ar.catalog"),
    include_str!("../data/prompts/es.catalog"),
    include_str!("../data/prompts/fi.catalog"),
    include_str!("../data/prompts/fr.catalog"),
    include_str!("../data/prompts/de.catalog"),
    include_str!("../data/prompts/ja.catalog"),
    include_str!("../data/prompts/it.catalog"),
    include_str!("../data/prompts/ko.catalog"),
    include_str!("../data/prompts/pt.catalog"),
    include_str!("../data/prompts/ru.catalog"),
    include_str!("../data/prompts/th.catalog"),
    include_str!("../data/prompts/zh.catalog"),
];

const BUILTIN_LANGUAGE_NAMES: &str = include_str!("../data/prompts/language_names.tsv");

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn passage(title: &str, text: &str, pos: u32) -> Passage {
        Passage {
            passage_id: alloc::format!("d::{pos}"),
            doc_id: "d".to_string(),
            title: title.to_string(),
            text: text.to_string(),
            lang: LanguageCode::En,
            position: pos,
        }
    }

    #[test]
    fn builtin_catalog_covers_every_required_entry() {
        let catalog = PromptCatalog::builtin();
        // English templates exist for all six labels.
        for label in PromptLabel::ALL {
            assert!(
                catalog.template(label, LanguageCode::En).is_some(),
                "missing en template for {label:?}"
            );
        }
        // User-language templates exist for the three UL labels in all
        // thirteen languages.
        for label in [
            PromptLabel::ReplyShortUl,
            PromptLabel::ReplyInUserLangUl,
            PromptLabel::ReplyInUserLangEntitiesUl,
        ] {
            for lang in LanguageCode::ALL {
                assert!(
                    catalog.template(label, lang).is_some(),
                    "missing {lang} template for {label:?}"
                );
            }
        }
    }

    #[test]
    fn builtin_names_cover_english_and_native_rows() {
        let names = LanguageNameCatalog::builtin();
        for lang in LanguageCode::ALL {
            assert!(names.name(LanguageCode::En, lang).is_some());
            assert!(names.name(lang, lang).is_some());
        }
        assert_eq!(names.name(LanguageCode::En, LanguageCode::Fr), Some("French"));
        assert_eq!(names.name(LanguageCode::Fr, LanguageCode::Fr), Some("français"));
    }

    #[test]
    fn english_fixed_labels_ignore_the_user_language() {
        let catalog = PromptCatalog::builtin();
        let names = LanguageNameCatalog::builtin();
        let fr = render_system_prompt(
            &catalog,
            &names,
            PromptLabel::ReplyShortEn,
            LanguageCode::Fr,
        )
        .unwrap();
        let ko = render_system_prompt(
            &catalog,
            &names,
            PromptLabel::ReplyShortEn,
            LanguageCode::Ko,
        )
        .unwrap();
        assert_eq!(fr, "Answer a given question as short as possible.");
        assert_eq!(fr, ko);
    }

    #[test]
    fn placeholder_is_replaced_with_the_language_name() {
        let catalog = PromptCatalog::builtin();
        let names = LanguageNameCatalog::builtin();
        let rendered = render_system_prompt(
            &catalog,
            &names,
            PromptLabel::ReplyInUserLangEn,
            LanguageCode::Fr,
        )
        .unwrap();
        assert_eq!(
            rendered,
            "Answer a given question as short as possible.  Answer in French."
        );
        assert!(!rendered.contains(UL_PLACEHOLDER));
    }

    #[test]
    fn every_label_renders_for_every_language_without_placeholders() {
        let catalog = PromptCatalog::builtin();
        let names = LanguageNameCatalog::builtin();
        for label in PromptLabel::ALL {
            for ul in LanguageCode::ALL {
                let rendered = render_system_prompt(&catalog, &names, label, ul)
                    .unwrap_or_else(|e| panic!("render {label:?} for {ul}: {e}"));
                assert!(!rendered.contains("{UL}"), "{label:?}/{ul}: {rendered}");
                assert!(!rendered.is_empty());
            }
        }
    }

    #[test]
    fn missing_entries_surface_as_render_errors() {
        let catalog = PromptCatalog::default();
        let names = LanguageNameCatalog::builtin();
        let err = render_system_prompt(
            &catalog,
            &names,
            PromptLabel::ReplyShortEn,
            LanguageCode::En,
        )
        .unwrap_err();
        assert!(matches!(err, RenderError::MissingTemplate { .. }));

        let catalog = PromptCatalog::builtin();
        let names = LanguageNameCatalog::default();
        let err = render_system_prompt(
            &catalog,
            &names,
            PromptLabel::ReplyInUserLangEn,
            LanguageCode::Fr,
        )
        .unwrap_err();
        assert!(matches!(err, RenderError::MissingLanguageName { .. }));
    }

    #[test]
    fn catalog_rejects_placeholder_misuse() {
        let mut catalog = PromptCatalog::default();
        let err = catalog
            .insert(PromptSpec {
                label: PromptLabel::ReplyInUserLangEn,
                lang: LanguageCode::En,
                template: "Answer briefly.".to_string(),
            })
            .unwrap_err();
        assert!(matches!(err, CatalogError::Placeholder { .. }));

        let err = catalog
            .insert(PromptSpec {
                label: PromptLabel::ReplyShortEn,
                lang: LanguageCode::En,
                template: "Answer briefly in {UL}.".to_string(),
            })
            .unwrap_err();
        assert!(matches!(err, CatalogError::Placeholder { .. }));
    }

    #[test]
    fn tsv_parse_reports_line_numbers() {
        let mut catalog = PromptCatalog::default();
        let err = catalog
            .extend_from_tsv("# comment\nReply short (EN)\ten\n")
            .unwrap_err();
        assert!(matches!(err, CatalogError::Malformed { line: 2, .. }));
    }

    #[test]
    fn context_block_numbers_documents_from_one() {
        let passages = vec![
            passage("Alpha", "First text.", 0),
            passage("Beta", "Second text.", 1),
        ];
        let block = format_context(&passages);
        assert_eq!(
            block,
            "Document 1: Alpha\nFirst text.\n\nDocument 2: Beta\nSecond text."
        );
        assert_eq!(format_context([].iter()), "");
    }

    #[test]
    fn chat_request_carries_system_then_user() {
        let req = build_chat("SYS", "CTX", "Q?", 128);
        assert_eq!(req.messages.len(), 2);
        assert_eq!(req.messages[0].role, Role::System);
        assert_eq!(req.messages[0].content, "SYS");
        assert_eq!(req.messages[1].role, Role::User);
        assert_eq!(req.messages[1].content, "CTX\n\nQ?");
        assert_eq!(req.max_new_tokens, 128);
        assert!(req.greedy);

        let bare = build_chat("SYS", "", "Q?", 64);
        assert_eq!(bare.messages[1].content, "Q?");
    }

    #[test]
    fn labels_round_trip_through_their_display_strings() {
        for label in PromptLabel::ALL {
            assert_eq!(label.as_str().parse::<PromptLabel>().unwrap(), label);
        }
        assert!("Reply long".parse::<PromptLabel>().is_err());
    }
}
