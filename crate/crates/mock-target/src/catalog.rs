use std::collections::BTreeSet;
use std::fmt;

/// Seeded bugs of the v1 catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BugId {
    B1,
    B2,
    B3,
    B4,
    B5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manifestation {
    Status500,
    Hang5000Ms,
    LeakBody,
    SchemaBreach,
}

impl BugId {
    pub const ALL: [BugId; 5] = [BugId::B1, BugId::B2, BugId::B3, BugId::B4, BugId::B5];

    pub fn as_str(self) -> &'static str {
        match self {
            BugId::B1 => "B1",
            BugId::B2 => "B2",
            BugId::B3 => "B3",
            BugId::B4 => "B4",
            BugId::B5 => "B5",
        }
    }

    pub fn parse(s: &str) -> Option<BugId> {
        Self::ALL.into_iter().find(|b| b.as_str().eq_ignore_ascii_case(s))
    }

    pub fn trigger(self) -> &'static str {
        match self {
            BugId::B1 => "GET /items/{id} with id < 0",
            BugId::B2 => "POST /users with a name longer than 256 characters",
            BugId::B3 => "GET /search with a single quote in q",
            BugId::B4 => "GET /slow with ms > 2000",
            BugId::B5 => "GET /profile/{id} with id > 99999 (authorized)",
        }
    }

    pub fn manifestation(self) -> Manifestation {
        match self {
            BugId::B1 => Manifestation::Status500,
            BugId::B2 => Manifestation::LeakBody,
            BugId::B3 => Manifestation::Status500,
            BugId::B4 => Manifestation::Hang5000Ms,
            BugId::B5 => Manifestation::SchemaBreach,
        }
    }
}

impl fmt::Display for BugId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which bugs are armed. Disarmed bugs behave as if fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BugCatalog {
    enabled: BTreeSet<BugId>,
}

impl Default for BugCatalog {
    fn default() -> Self {
        Self::v1()
    }
}

impl BugCatalog {
    pub fn v1() -> Self {
        BugCatalog {
            enabled: BugId::ALL.into_iter().collect(),
        }
    }

    pub fn none() -> Self {
        BugCatalog {
            enabled: BTreeSet::new(),
        }
    }

    pub fn only<I: IntoIterator<Item = BugId>>(bugs: I) -> Self {
        BugCatalog {
            enabled: bugs.into_iter().collect(),
        }
    }

    pub fn armed(&self, bug: BugId) -> bool {
        self.enabled.contains(&bug)
    }

    pub fn bugs(&self) -> impl Iterator<Item = BugId> + '_ {
        self.enabled.iter().copied()
    }
}
