//! Two-level concept hierarchy used to seed synthetic documents.

use serde::{Deserialize, Serialize};

const BUILTIN: &str = include_str!("../../data/concept_hierarchy.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericConcept {
    pub generic: String,
    pub specific: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptHierarchy {
    pub topic: String,
    pub concepts: Vec<GenericConcept>,
}

impl ConceptHierarchy {
    /// The shipped politics hierarchy: 10 generic concepts with 4 specific each.
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN).expect("bundled hierarchy parses")
    }

    pub fn generics(&self) -> impl Iterator<Item = &str> {
        self.concepts.iter().map(|g| g.generic.as_str())
    }

    pub fn specifics(&self) -> impl Iterator<Item = &str> {
        self.concepts.iter().flat_map(|g| g.specific.iter().map(String::as_str))
    }

    pub fn generic_of(&self, specific: &str) -> Option<&str> {
        self.concepts
            .iter()
            .find(|g| g.specific.iter().any(|s| s == specific))
            .map(|g| g.generic.as_str())
    }

    pub fn contains_specific(&self, name: &str) -> bool {
        self.generic_of(name).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn builtin_shape() {
        let h = ConceptHierarchy::builtin();
        assert_eq!(h.topic, "politics");
        assert_eq!(h.concepts.len(), 10);
        assert!(h.concepts.iter().all(|g| g.specific.len() == 4));
        let specific: Vec<&str> = h.specifics().collect();
        assert_eq!(specific.len(), 40);
        assert_eq!(specific.iter().collect::<HashSet<_>>().len(), 40);
        assert_eq!(h.generic_of("Air Pollution"), Some("Environment"));
        assert_eq!(h.generic_of("Second Amendment Rights"), Some("Gun Control"));
        assert_eq!(h.generic_of("Environment"), None);
    }
}
