//! The schema catalog: one [`SchemaDefinition`] per `(kind, version)`.
//!
//! The built-in catalog is compiled in from `config/schema_catalog.json` and
//! meta-validated on load; [`Catalog::builtin`] fails rather than hand out an
//! inconsistent catalog.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::envelope::EventKind;

const BUILTIN_CATALOG: &str = include_str!("../../../config/schema_catalog.json");

/// Longest accepted identifier for users and content items.
pub const MAX_ID_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldType {
    String,
    Integer,
    Number,
    Boolean,
    Instant,
    ContentRef,
}

impl FieldType {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldType::String => "string",
            FieldType::Integer => "integer",
            FieldType::Number => "number",
            FieldType::Boolean => "boolean",
            FieldType::Instant => "instant",
            FieldType::ContentRef => "content_ref",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub field_type: FieldType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaDefinition {
    pub kind: EventKind,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub required_fields: Vec<FieldSpec>,
    #[serde(default)]
    pub optional_fields: Vec<FieldSpec>,
}

impl SchemaDefinition {
    pub fn field(&self, name: &str) -> Option<(&FieldSpec, bool)> {
        self.required_fields
            .iter()
            .map(|f| (f, true))
            .chain(self.optional_fields.iter().map(|f| (f, false)))
            .find(|(f, _)| f.name == name)
    }

    pub fn all_fields(&self) -> impl Iterator<Item = &FieldSpec> {
        self.required_fields.iter().chain(self.optional_fields.iter())
    }

    /// Name of the field holding a content identifier, if the schema declares one.
    pub fn content_ref_field(&self) -> Option<&str> {
        self.all_fields()
            .find(|f| f.field_type == FieldType::ContentRef)
            .map(|f| f.name.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog document does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("catalog is empty")]
    Empty,
    #[error("schema {kind} has invalid version 0")]
    ZeroVersion { kind: EventKind },
    #[error("schema ({kind}, v{version}) is defined more than once")]
    DuplicateDefinition { kind: EventKind, version: u32 },
    #[error("schema ({kind}, v{version}) declares field {field:?} more than once")]
    DuplicateField {
        kind: EventKind,
        version: u32,
        field: String,
    },
    #[error("schema ({kind}, v{version}) has an empty field name")]
    EmptyFieldName { kind: EventKind, version: u32 },
    #[error("schema ({kind}, v{version}) declares more than one content_ref field")]
    MultipleContentRefs { kind: EventKind, version: u32 },
    #[error("no schema defined for kind {0}")]
    MissingKind(EventKind),
}

#[derive(Debug, Deserialize, Serialize)]
struct CatalogDocument {
    #[serde(default)]
    catalog_revision: Option<u32>,
    schemas: Vec<SchemaDefinition>,
}

/// A meta-validated set of schema definitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    schemas: BTreeMap<(EventKind, u32), SchemaDefinition>,
}

impl Catalog {
    /// The catalog shipped with the build.
    pub fn builtin() -> Result<Self, CatalogError> {
        Self::from_json(BUILTIN_CATALOG)
    }

    pub fn from_json(doc: &str) -> Result<Self, CatalogError> {
        let doc: CatalogDocument = serde_json::from_str(doc)?;
        Self::from_definitions(doc.schemas)
    }

    pub fn from_definitions(defs: Vec<SchemaDefinition>) -> Result<Self, CatalogError> {
        if defs.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut schemas = BTreeMap::new();
        for def in defs {
            let (kind, version) = (def.kind, def.version);
            if version == 0 {
                return Err(CatalogError::ZeroVersion { kind });
            }
            let mut names = BTreeSet::new();
            for field in def.all_fields() {
                if field.name.is_empty() {
                    return Err(CatalogError::EmptyFieldName { kind, version });
                }
                if !names.insert(field.name.as_str()) {
                    return Err(CatalogError::DuplicateField {
                        kind,
                        version,
                        field: field.name.clone(),
                    });
                }
            }
            let content_refs = def
                .all_fields()
                .filter(|f| f.field_type == FieldType::ContentRef)
                .count();
            if content_refs > 1 {
                return Err(CatalogError::MultipleContentRefs { kind, version });
            }
            if schemas.insert((kind, version), def).is_some() {
                return Err(CatalogError::DuplicateDefinition { kind, version });
            }
        }
        for kind in EventKind::ALL {
            if !schemas.keys().any(|(k, _)| *k == kind) {
                return Err(CatalogError::MissingKind(kind));
            }
        }
        Ok(Self { schemas })
    }

    pub fn get(&self, kind: EventKind, version: u32) -> Option<&SchemaDefinition> {
        self.schemas.get(&(kind, version))
    }

    /// Highest version defined for `kind`.
    pub fn latest(&self, kind: EventKind) -> Option<&SchemaDefinition> {
        self.schemas
            .range((kind, 0)..=(kind, u32::MAX))
            .next_back()
            .map(|(_, def)| def)
    }

    pub fn has_kind(&self, kind: EventKind) -> bool {
        self.latest(kind).is_some()
    }

    pub fn definitions(&self) -> impl Iterator<Item = &SchemaDefinition> {
        self.schemas.values()
    }
}
