use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Result, TeacherError};

pub const TEXT_SLOT: &str = "<Paper Information>";
pub const CATEGORIES_SLOT: &str = "<categories>";
pub const K_SLOT: &str = "<k>";

pub const DEFAULT_LOGITS_TEMPLATE: &str = "Paper: <Paper Information>. Task: For the following categories: <categories>, which categories does this paper belong to? Provide your <k> best guesses within the given categories: <categories> and a confidence score that each is correct (0 to 1). The sum of all confidence should be 1. Outputs must be in the given categories. For example: \"answer\": <your first answer>, \"confidence\": <confidence for first answer>, ...";

pub const DEFAULT_RATIONALE_TEMPLATE: &str = "Paper: <Paper Information>. Task: For the following categories: <categories>, which categories does this paper belong to? Think step by step. Explain your decision in detail.";

/// Prompt templates for the two teacher queries (soft labels, rationale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    k_guesses: usize,
    class_names: Vec<String>,
    logits_template: String,
    rationale_template: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompts {
    pub logits: String,
    pub rationale: String,
}

impl RenderedPrompts {
    /// SHA-256 (hex) over both prompts; the teacher cache key.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.logits.as_bytes());
        h.update([0u8]);
        h.update(self.rationale.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl PromptConfig {
    /// Default templates with `k = min(3, C)`.
    pub fn new(class_names: Vec<String>) -> Result<Self> {
        let k = class_names.len().min(3);
        Self::with_templates(
            class_names,
            k,
            DEFAULT_LOGITS_TEMPLATE.into(),
            DEFAULT_RATIONALE_TEMPLATE.into(),
        )
    }

    pub fn with_templates(
        class_names: Vec<String>,
        k_guesses: usize,
        logits_template: String,
        rationale_template: String,
    ) -> Result<Self> {
        if k_guesses == 0 || k_guesses > class_names.len() {
            return Err(TeacherError::Template(format!(
                "k = {k_guesses} outside [1, {}]",
                class_names.len()
            )));
        }
        for slot in [TEXT_SLOT, CATEGORIES_SLOT, K_SLOT] {
            if !logits_template.contains(slot) {
                return Err(TeacherError::Template(format!(
                    "soft-label template lacks {slot}"
                )));
            }
        }
        for slot in [TEXT_SLOT, CATEGORIES_SLOT] {
            if !rationale_template.contains(slot) {
                return Err(TeacherError::Template(format!(
                    "rationale template lacks {slot}"
                )));
            }
        }
        Ok(Self {
            k_guesses,
            class_names,
            logits_template,
            rationale_template,
        })
    }

    pub fn k_guesses(&self) -> usize {
        self.k_guesses
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn render(&self, node_text: &str) -> Result<RenderedPrompts> {
        if node_text.trim().is_empty() {
            return Err(TeacherError::EmptyText);
        }
        let categories = self.class_names.join(", ");
        let k = self.k_guesses.to_string();
        let slots = [
            (TEXT_SLOT, node_text),
            (CATEGORIES_SLOT, categories.as_str()),
            (K_SLOT, k.as_str()),
        ];
        Ok(RenderedPrompts {
            logits: fill(&self.logits_template, &slots),
            rationale: fill(&self.rationale_template, &slots),
        })
    }
}

/// Single left-to-right pass, so substituted text is never re-expanded.
fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(pos) = rest.find('<') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        match slots.iter().find(|(slot, _)| tail.starts_with(slot)) {
            Some((slot, value)) => {
                out.push_str(value);
                rest = &tail[slot.len()..];
            }
            None => {
                out.push('<');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn render_prompts(cfg: &PromptConfig, node_text: &str) -> Result<RenderedPrompts> {
    cfg.render(node_text)
}
