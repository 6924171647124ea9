//! Morphological fields: ordered dimensions, each holding ordered conditions.
//!
//! Conditions are addressed two ways:
//! - externally by a qualified id `dimension.condition` (ids are kebab-case,
//!   so the dot is unambiguous);
//! - internally by a flat index over all conditions in field order.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimensionCluster {
    TechnologicalTransition,
    SocioTechnicalEcology,
    Control,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionDef {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub id: String,
    pub name: String,
    pub cluster: DimensionCluster,
    pub conditions: Vec<ConditionDef>,
}

impl Dimension {
    /// Parses and validates a standalone dimension document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let dim: Dimension = parse_json(text, "dimension")?;
        dim.validate("")?;
        Ok(dim)
    }

    fn validate(&self, prefix: &str) -> Result<()> {
        check_id(&format!("{prefix}id"), &self.id)?;
        if self.conditions.is_empty() {
            return Err(Error::structural(
                format!("{prefix}conditions"),
                format!("dimension `{}` has no conditions", self.id),
            ));
        }
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (c, cond) in self.conditions.iter().enumerate() {
            let path = format!("{prefix}conditions[{c}].id");
            check_id(&path, &cond.id)?;
            if let Some(first) = seen.insert(cond.id.as_str(), c) {
                return Err(Error::structural(
                    path,
                    format!(
                        "duplicate condition id `{}` (first defined at {prefix}conditions[{first}])",
                        cond.id
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    id: String,
    title: String,
    dimensions: Vec<Dimension>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

/// A validated morphological field. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawField", into = "RawField")]
pub struct MorphologicalField {
    id: String,
    title: String,
    dimensions: Vec<Dimension>,
    metadata: BTreeMap<String, String>,
    /// `offsets[d]` is the flat index of the first condition of dimension `d`;
    /// the last entry is the total condition count.
    offsets: Vec<usize>,
}

impl From<MorphologicalField> for RawField {
    fn from(f: MorphologicalField) -> Self {
        RawField {
            id: f.id,
            title: f.title,
            dimensions: f.dimensions,
            metadata: f.metadata,
        }
    }
}

impl TryFrom<RawField> for MorphologicalField {
    type Error = Error;

    fn try_from(raw: RawField) -> Result<Self> {
        MorphologicalField::new(raw.id, raw.title, raw.dimensions, raw.metadata)
    }
}

/// Borrowed view of one condition together with its position in the field.
#[derive(Debug, Clone, Copy)]
pub struct ConditionEntry<'a> {
    pub index: usize,
    pub dimension_index: usize,
    pub local_index: usize,
    pub dimension: &'a Dimension,
    pub condition: &'a ConditionDef,
}

impl ConditionEntry<'_> {
    pub fn qualified_id(&self) -> String {
        qualify(&self.dimension.id, &self.condition.id)
    }
}

pub fn qualify(dimension: &str, condition: &str) -> String {
    format!("{dimension}.{condition}")
}

impl MorphologicalField {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        dimensions: Vec<Dimension>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        let id = id.into();
        check_id("id", &id)?;
        if dimensions.is_empty() {
            return Err(Error::structural("dimensions", "field has no dimensions"));
        }
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (d, dim) in dimensions.iter().enumerate() {
            dim.validate(&format!("dimensions[{d}]."))?;
            if let Some(first) = seen.insert(dim.id.as_str(), d) {
                return Err(Error::structural(
                    format!("dimensions[{d}].id"),
                    format!(
                        "duplicate dimension id `{}` (first defined at dimensions[{first}])",
                        dim.id
                    ),
                ));
            }
        }
        let mut offsets = Vec::with_capacity(dimensions.len() + 1);
        let mut total = 0;
        for dim in &dimensions {
            offsets.push(total);
            total += dim.conditions.len();
        }
        offsets.push(total);
        Ok(MorphologicalField {
            id,
            title: title.into(),
            dimensions,
            metadata,
            offsets,
        })
    }

    /// Parses a field definition document, reporting the JSON path of the
    /// first problem found.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawField = parse_json(text, "field")?;
        raw.try_into()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("field serializes")
    }

    /// Builds a field from `(dimension id, condition ids)` with placeholder names.
    pub fn from_sizes(id: &str, sizes: &[usize]) -> Result<Self> {
        let dims = sizes
            .iter()
            .enumerate()
            .map(|(d, &n)| Dimension {
                id: format!("d{}", d + 1),
                name: format!("Dimension {}", d + 1),
                cluster: DimensionCluster::Other,
                conditions: (0..n)
                    .map(|c| ConditionDef {
                        id: format!("c{}", c + 1),
                        name: format!("Condition {}", c + 1),
                        description: String::new(),
                    })
                    .collect(),
            })
            .collect();
        Self::new(id, id, dims, BTreeMap::new())
    }

    /// Returns a copy with `dimension` appended.
    pub fn with_dimension(&self, dimension: Dimension) -> Result<Self> {
        let mut dims = self.dimensions.clone();
        dims.push(dimension);
        Self::new(
            self.id.clone(),
            self.title.clone(),
            dims,
            self.metadata.clone(),
        )
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn dimension_count(&self) -> usize {
        self.dimensions.len()
    }

    pub fn condition_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Condition counts per dimension, in dimension order.
    pub fn sizes(&self) -> Vec<usize> {
        self.dimensions.iter().map(|d| d.conditions.len()).collect()
    }

    /// Flat index range of the conditions of dimension `d`.
    pub fn dimension_range(&self, d: usize) -> std::ops::Range<usize> {
        self.offsets[d]..self.offsets[d + 1]
    }

    pub fn dimension_index(&self, id: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| d.id == id)
    }

    /// Dimension owning the condition at flat index `index`.
    pub fn dimension_of(&self, index: usize) -> usize {
        debug_assert!(index < self.condition_count());
        self.offsets.partition_point(|&o| o <= index) - 1
    }

    pub fn entry(&self, index: usize) -> ConditionEntry<'_> {
        let d = self.dimension_of(index);
        let local = index - self.offsets[d];
        let dimension = &self.dimensions[d];
        ConditionEntry {
            index,
            dimension_index: d,
            local_index: local,
            dimension,
            condition: &dimension.conditions[local],
        }
    }

    pub fn conditions(&self) -> impl Iterator<Item = ConditionEntry<'_>> + '_ {
        (0..self.condition_count()).map(move |i| self.entry(i))
    }

    pub fn qualified_id(&self, index: usize) -> String {
        self.entry(index).qualified_id()
    }

    /// Resolves a qualified `dimension.condition` id to its flat index.
    pub fn resolve(&self, qualified: &str) -> Option<usize> {
        let (dim, cond) = qualified.split_once('.')?;
        let d = self.dimension_index(dim)?;
        let local = self.dimensions[d]
            .conditions
            .iter()
            .position(|c| c.id == cond)?;
        Some(self.offsets[d] + local)
    }

    /// Resolves a qualified id or fails with a constraint error.
    pub fn resolve_or_err(&self, qualified: &str) -> Result<usize> {
        self.resolve(qualified).ok_or_else(|| {
            Error::Constraint(format!(
                "unknown condition `{qualified}` in field `{}`",
                self.id
            ))
        })
    }
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Json {
            context: format!("{what} document at `{path}`"),
            path,
            message: format!(
                "{inner} (line {}, column {})",
                inner.line(),
                inner.column()
            ),
        }
    })
}

/// Ids are lowercase kebab-case: `[a-z0-9]+(-[a-z0-9]+)*`.
pub fn is_kebab_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .split('-')
            .all(|seg| !seg.is_empty() && seg.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()))
}

fn check_id(path: &str, id: &str) -> Result<()> {
    if is_kebab_id(id) {
        Ok(())
    } else {
        Err(Error::structural(
            path,
            format!("id `{id}` is not lowercase kebab-case"),
        ))
    }
}

/// One condition per dimension, stored as local condition indices in
/// dimension order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    pub choices: Vec<u32>,
}

impl Configuration {
    /// Qualified condition ids of the chosen conditions.
    pub fn qualified_ids(&self, field: &MorphologicalField) -> Vec<String> {
        self.choices
            .iter()
            .enumerate()
            .map(|(d, &c)| {
                let dim = &field.dimensions()[d];
                qualify(&dim.id, &dim.conditions[c as usize].id)
            })
            .collect()
    }

    pub fn flat_indices(&self, field: &MorphologicalField) -> Vec<usize> {
        self.choices
            .iter()
            .enumerate()
            .map(|(d, &c)| field.dimension_range(d).start + c as usize)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_dims() -> &'static str {
        r#"{
          "id": "demo",
          "title": "Demo",
          "dimensions": [
            { "id": "a", "name": "A", "cluster": "control",
              "conditions": [ { "id": "x", "name": "X" }, { "id": "y", "name": "Y" } ] },
            { "id": "b", "name": "B", "cluster": "other",
              "conditions": [ { "id": "x", "name": "X", "description": "d" } ] }
          ]
        }"#
    }

    #[test]
    fn loads_and_indexes() {
        let f = MorphologicalField::from_json_str(two_dims()).unwrap();
        assert_eq!(f.condition_count(), 3);
        assert_eq!(f.sizes(), vec![2, 1]);
        assert_eq!(f.resolve("a.y"), Some(1));
        assert_eq!(f.resolve("b.x"), Some(2));
        assert_eq!(f.resolve("b.y"), None);
        assert_eq!(f.resolve("nodot"), None);
        assert_eq!(f.dimension_of(0), 0);
        assert_eq!(f.dimension_of(1), 0);
        assert_eq!(f.dimension_of(2), 1);
        assert_eq!(f.qualified_id(2), "b.x");
    }

    #[test]
    fn json_round_trip_preserves_order() {
        let f = MorphologicalField::from_json_str(two_dims()).unwrap();
        let again = MorphologicalField::from_json_str(&f.to_json_pretty()).unwrap();
        assert_eq!(f, again);
        let ids: Vec<_> = again.dimensions().iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn rejects_duplicate_condition_with_path() {
        let text = two_dims().replace(r#"{ "id": "y", "name": "Y" }"#, r#"{ "id": "x", "name": "Y" }"#);
        let err = MorphologicalField::from_json_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dimensions[0].conditions[1].id"), "{msg}");
        assert!(msg.contains("duplicate"), "{msg}");
    }

    #[test]
    fn rejects_duplicate_dimension() {
        let text = two_dims().replace(r#""id": "b""#, r#""id": "a""#);
        let err = MorphologicalField::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("dimensions[1].id"), "{err}");
    }

    #[test]
    fn rejects_bad_ids_and_unknown_cluster() {
        let text = two_dims().replace(r#""id": "a""#, r#""id": "Bad_Id""#);
        assert!(MorphologicalField::from_json_str(&text).is_err());

        let text = two_dims().replace(r#""cluster": "control""#, r#""cluster": "economy""#);
        let err = MorphologicalField::from_json_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dimensions[0].cluster"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn rejects_empty_structures() {
        let err = MorphologicalField::new("e", "E", vec![], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::Structural { .. }));
        assert!(MorphologicalField::from_sizes("z", &[2, 0]).is_err());
    }

    #[test]
    fn kebab_ids() {
        assert!(is_kebab_id("from-20-to-40"));
        assert!(is_kebab_id("a1"));
        assert!(!is_kebab_id("a--b"));
        assert!(!is_kebab_id("-a"));
        assert!(!is_kebab_id("A"));
        assert!(!is_kebab_id("a.b"));
        assert!(!is_kebab_id(""));
    }
}
