use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Versioned wording resources for the four prompt families.
///
/// The block layout lives in code; a template set only carries the
/// instruction sentences and the fixed rationale examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub version: String,
    pub q_instruction: String,
    pub qc_instruction: String,
    pub cot_preamble: String,
    pub select_instruction: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("failed to read template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("template {0} is empty")]
    Empty(PathBuf),
}

const FILES: [&str; 5] = [
    "VERSION",
    "prompt_q.txt",
    "prompt_qc.txt",
    "cot.txt",
    "select.txt",
];

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::from_texts([
            include_str!("../../templates/v1/VERSION"),
            include_str!("../../templates/v1/prompt_q.txt"),
            include_str!("../../templates/v1/prompt_qc.txt"),
            include_str!("../../templates/v1/cot.txt"),
            include_str!("../../templates/v1/select.txt"),
        ])
    }

    /// Loads `VERSION`, `prompt_q.txt`, `prompt_qc.txt`, `cot.txt` and `select.txt` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut texts: [String; 5] = Default::default();
        for (slot, name) in texts.iter_mut().zip(FILES) {
            let path = dir.join(name);
            let text = fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.clone(),
                source,
            })?;
            if text.trim().is_empty() {
                return Err(TemplateError::Empty(path));
            }
            *slot = text;
        }
        let [a, b, c, d, e] = texts;
        Ok(Self::from_texts([&a, &b, &c, &d, &e]))
    }

    fn from_texts([version, q, qc, cot, select]: [&str; 5]) -> Self {
        // Line endings are pinned to "\n" whatever the checkout does.
        let clean = |s: &str| s.replace("\r\n", "\n").trim().to_string();
        Self {
            version: clean(version),
            q_instruction: clean(q),
            qc_instruction: clean(qc),
            cot_preamble: clean(cot),
            select_instruction: clean(select),
        }
    }

    /// SHA-256 of the rationale preamble, hex encoded.
    pub fn cot_digest(&self) -> String {
        hex::encode(Sha256::digest(self.cot_preamble.as_bytes()))
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}
