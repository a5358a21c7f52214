use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version tag of the bundled template; part of every cache key.
pub const TEMPLATE_VERSION: &str = "translate-v1";

const TEMPLATE: &str = include_str!("../../resources/templates/translate_v1.txt");

const LANGUAGE_SLOT: &str = "{language}";
const TEXT_SLOT: &str = "{text}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationPrompt {
    pub system_text: String,
    pub user_text: String,
    pub target_language: String,
}

fn sections() -> (&'static str, &'static str) {
    let body = TEMPLATE
        .strip_prefix("[system]\n")
        .expect("template starts with a [system] section");
    let (system, user) = body
        .split_once("[user]\n")
        .expect("template has a [user] section");
    (system.trim_end(), user.trim_end())
}

/// The raw system template, with the `{language}` slot unfilled.
pub fn system_template() -> &'static str {
    sections().0
}

pub fn user_template() -> &'static str {
    sections().1
}

pub fn render_prompt(target_language: &str, text: &str) -> Result<TranslationPrompt> {
    if target_language.trim().is_empty() {
        return Err(Error::EmptyInput("target language"));
    }
    if text.trim().is_empty() {
        return Err(Error::EmptyInput("text"));
    }
    let (system, user) = sections();
    // Substitution is single-pass so braces inside `text` are left alone.
    Ok(TranslationPrompt {
        system_text: system.replace(LANGUAGE_SLOT, target_language),
        user_text: user.replacen(TEXT_SLOT, text, 1),
        target_language: target_language.to_owned(),
    })
}
