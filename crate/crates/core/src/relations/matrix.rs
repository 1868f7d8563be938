use std::collections::BTreeMap;

use crate::corpus::EntityType;

/// How many relations of one pair type an entity may take part in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cardinality {
    /// Each participating entity at most once.
    OneToOne,
    /// The `one` side may link to many partners; each partner to one `one`.
    OneToMany { one: EntityType },
    /// No uniqueness constraint (pairs only allowed by the permissive matrix).
    Unconstrained,
}

/// Allowed unordered entity-type pairs and their cardinality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMatrix {
    rules: BTreeMap<(EntityType, EntityType), Cardinality>,
    permissive: bool,
}

fn key(a: EntityType, b: EntityType) -> (EntityType, EntityType) {
    (a.min(b), a.max(b))
}

impl Default for RelationMatrix {
    fn default() -> Self {
        use EntityType::*;
        let mut rules = BTreeMap::new();
        for other in [Cy, Py, Increase, Decrease] {
            rules.insert(key(Kpi, other), Cardinality::OneToOne);
        }
        rules.insert(key(Kpi, Davon), Cardinality::OneToMany { one: Kpi });
        rules.insert(key(Davon, DavonCy), Cardinality::OneToOne);
        rules.insert(key(Davon, DavonPy), Cardinality::OneToOne);
        Self {
            rules,
            permissive: false,
        }
    }
}

impl RelationMatrix {
    /// Every pair of span types allowed; pairs outside the default matrix are
    /// unconstrained during pruning.
    pub fn permissive() -> Self {
        Self {
            permissive: true,
            ..Self::default()
        }
    }

    pub fn is_permissive(&self) -> bool {
        self.permissive
    }

    pub fn allows(&self, a: EntityType, b: EntityType) -> bool {
        if a == EntityType::None || b == EntityType::None {
            return false;
        }
        self.permissive || self.rules.contains_key(&key(a, b))
    }

    pub fn cardinality(&self, a: EntityType, b: EntityType) -> Option<Cardinality> {
        if !self.allows(a, b) {
            return None;
        }
        Some(self.rules.get(&key(a, b)).copied().unwrap_or(Cardinality::Unconstrained))
    }

    /// Allowed pairs of the strict matrix, for display.
    pub fn pairs(&self) -> impl Iterator<Item = ((EntityType, EntityType), Cardinality)> + '_ {
        self.rules.iter().map(|(k, c)| (*k, *c))
    }
}
