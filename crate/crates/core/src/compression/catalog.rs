use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("question type catalog is empty")]
    Empty,
    #[error("question type name is empty")]
    EmptyName,
    #[error("question type `{0}` has an empty definition")]
    EmptyDefinition(String),
    #[error("duplicate question type `{0}`")]
    Duplicate(String),
    #[error("invalid catalog: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionType {
    pub name: String,
    pub definition: String,
}

/// Ordered question types with natural-language definitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionTypeCatalog {
    types: Vec<QuestionType>,
}

#[derive(Deserialize)]
struct CatalogFile {
    types: Vec<QuestionType>,
}

impl QuestionTypeCatalog {
    pub fn new(types: Vec<QuestionType>) -> Result<Self, CatalogError> {
        if types.is_empty() {
            return Err(CatalogError::Empty);
        }
        for (i, t) in types.iter().enumerate() {
            if t.name.trim().is_empty() {
                return Err(CatalogError::EmptyName);
            }
            if t.definition.trim().is_empty() {
                return Err(CatalogError::EmptyDefinition(t.name.clone()));
            }
            if types[..i].iter().any(|u| u.name == t.name) {
                return Err(CatalogError::Duplicate(t.name.clone()));
            }
        }
        Ok(Self { types })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, CatalogError> {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, definition)| QuestionType {
                    name: name.to_string(),
                    definition: definition.to_string(),
                })
                .collect(),
        )
    }

    pub fn from_json(json: &str) -> Result<Self, CatalogError> {
        let file: CatalogFile = serde_json::from_str(json).map_err(|e| CatalogError::Parse(e.to_string()))?;
        Self::new(file.types)
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|e| CatalogError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn types(&self) -> &[QuestionType] {
        &self.types
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.types.iter().map(|t| t.name.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&QuestionType> {
        self.types.iter().find(|t| t.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}
