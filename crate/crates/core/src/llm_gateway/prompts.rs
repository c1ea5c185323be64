//! The five prompt templates the system uses, with file overrides.

use std::path::{Path, PathBuf};

use thiserror::Error;

use super::template::{PromptTemplate, TemplateError};

const TRANSCRIPTION: &str = include_str!("../../prompts/transcription.toml");
const SEGMENTATION: &str = include_str!("../../prompts/segmentation.toml");
const KEYWORDS: &str = include_str!("../../prompts/keywords.toml");
const INFORMAL_PROOF: &str = include_str!("../../prompts/informal_proof.toml");
const FORMALIZATION: &str = include_str!("../../prompts/formalization.toml");

pub const TRANSCRIPTION_ID: &str = "transcription";
pub const SEGMENTATION_ID: &str = "segmentation";
pub const KEYWORDS_ID: &str = "keywords";
pub const INFORMAL_PROOF_ID: &str = "informal_proof";
pub const FORMALIZATION_ID: &str = "formalization";

#[derive(Debug, Error)]
pub enum PromptSetError {
    #[error("cannot read prompt template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("prompt template {path}: {source}")]
    Template {
        path: PathBuf,
        #[source]
        source: TemplateError,
    },
    #[error("prompt template {path} declares placeholder `{placeholder}`, which the `{stage}` stage never binds")]
    UnknownPlaceholder {
        path: PathBuf,
        stage: &'static str,
        placeholder: String,
    },
}

/// Optional file overrides for each template.
#[derive(Debug, Clone, Default)]
pub struct PromptPaths {
    pub transcription: Option<PathBuf>,
    pub segmentation: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub informal_proof: Option<PathBuf>,
    pub formalization: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct PromptSet {
    pub transcription: PromptTemplate,
    pub segmentation: PromptTemplate,
    pub keywords: PromptTemplate,
    pub informal_proof: PromptTemplate,
    pub formalization: PromptTemplate,
}

fn builtin(source: &str) -> PromptTemplate {
    PromptTemplate::from_toml_str(source).expect("bundled prompt templates are valid")
}

fn load_one(
    path: Option<&Path>,
    fallback: &str,
    stage: &'static str,
    allowed: &[&str],
) -> Result<PromptTemplate, PromptSetError> {
    let Some(path) = path else {
        return Ok(builtin(fallback));
    };
    let source = std::fs::read_to_string(path).map_err(|source| PromptSetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let template = PromptTemplate::from_toml_str(&source).map_err(|source| PromptSetError::Template {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(extra) = template.placeholders().find(|p| !allowed.contains(p)) {
        return Err(PromptSetError::UnknownPlaceholder {
            path: path.to_path_buf(),
            stage,
            placeholder: extra.to_string(),
        });
    }
    Ok(template)
}

impl PromptSet {
    pub fn builtin() -> Self {
        Self {
            transcription: builtin(TRANSCRIPTION),
            segmentation: builtin(SEGMENTATION),
            keywords: builtin(KEYWORDS),
            informal_proof: builtin(INFORMAL_PROOF),
            formalization: builtin(FORMALIZATION),
        }
    }

    pub fn load(paths: &PromptPaths) -> Result<Self, PromptSetError> {
        Ok(Self {
            transcription: load_one(
                paths.transcription.as_deref(),
                TRANSCRIPTION,
                TRANSCRIPTION_ID,
                &["document_id", "page_number"],
            )?,
            segmentation: load_one(
                paths.segmentation.as_deref(),
                SEGMENTATION,
                SEGMENTATION_ID,
                &["document"],
            )?,
            keywords: load_one(
                paths.keywords.as_deref(),
                KEYWORDS,
                KEYWORDS_ID,
                &["statement", "prior_proof"],
            )?,
            informal_proof: load_one(
                paths.informal_proof.as_deref(),
                INFORMAL_PROOF,
                INFORMAL_PROOF_ID,
                &["context", "statement", "previous_proof", "feedback"],
            )?,
            formalization: load_one(
                paths.formalization.as_deref(),
                FORMALIZATION,
                FORMALIZATION_ID,
                &["formal_statement", "informal_proof"],
            )?,
        })
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_parse_with_expected_ids() {
        let set = PromptSet::builtin();
        assert_eq!(set.transcription.id(), TRANSCRIPTION_ID);
        assert_eq!(set.segmentation.id(), SEGMENTATION_ID);
        assert_eq!(set.keywords.id(), KEYWORDS_ID);
        assert_eq!(set.informal_proof.id(), INFORMAL_PROOF_ID);
        assert_eq!(set.formalization.id(), FORMALIZATION_ID);
    }

    #[test]
    fn builtin_templates_keep_latex_braces() {
        let set = PromptSet::builtin();
        let msgs = set.segmentation.render(&[("document", "DOC")]).unwrap();
        assert!(msgs[0].content.contains(r#"{"kind": "...""#));
        assert!(msgs[1].content.contains("DOC"));
        let msgs = set
            .transcription
            .render(&[("document_id", "book"), ("page_number", "3")])
            .unwrap();
        assert!(msgs[0].content.contains(r"\begin{theorem}"));
        assert!(msgs[1].content.contains("page 3 of document book"));
    }

    #[test]
    fn override_with_unknown_placeholder_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kw.toml");
        std::fs::write(
            &path,
            "id = \"keywords\"\nplaceholders = [\"statement\", \"bogus\"]\n[[messages]]\nrole = \"user\"\ntext = \"{statement} {bogus}\"\n",
        )
        .unwrap();
        let err = PromptSet::load(&PromptPaths {
            keywords: Some(path),
            ..PromptPaths::default()
        })
        .unwrap_err();
        assert!(matches!(err, PromptSetError::UnknownPlaceholder { placeholder, .. } if placeholder == "bogus"));
    }
}
