use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The classification task a label belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    DissectionGesture,
    SuturingGesture,
    Subphase,
    Skill,
}

const DISSECTION: &[&str] = &["c", "h", "k", "m", "p", "r"];
const SUTURING: &[&str] = &["R1", "R2", "L1", "C1"];
const SUBPHASE: &[&str] = &["needle_handling", "needle_driving", "needle_withdrawal"];
const SKILL: &[&str] = &["low", "high"];

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::DissectionGesture,
        TaskKind::SuturingGesture,
        TaskKind::Subphase,
        TaskKind::Skill,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::DissectionGesture => "dissection_gesture",
            TaskKind::SuturingGesture => "suturing_gesture",
            TaskKind::Subphase => "subphase",
            TaskKind::Skill => "skill",
        }
    }

    pub fn taxonomy(self) -> Taxonomy {
        Taxonomy::for_task(self)
    }

    /// The task whose taxonomy has exactly `n` categories.
    pub fn with_category_count(n: usize) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|t| t.codes().len() == n)
    }

    fn codes(self) -> &'static [&'static str] {
        match self {
            TaskKind::DissectionGesture => DISSECTION,
            TaskKind::SuturingGesture => SUTURING,
            TaskKind::Subphase => SUBPHASE,
            TaskKind::Skill => SKILL,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Taxonomy(format!("unknown task kind {s:?}")))
    }
}

/// Ordered category codes of one task. Row `i` of a prototype bank and
/// column `i` of every probability vector refer to `categories[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub task_kind: TaskKind,
    pub categories: Vec<String>,
}

impl Taxonomy {
    pub fn for_task(task_kind: TaskKind) -> Self {
        Taxonomy {
            task_kind,
            categories: task_kind.codes().iter().map(|c| c.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == code)
    }

    pub fn require_index(&self, code: &str) -> Result<usize> {
        self.index_of(code).ok_or_else(|| {
            Error::Taxonomy(format!(
                "label {code:?} is not a {} category (expected one of {:?})",
                self.task_kind, self.categories
            ))
        })
    }

    pub fn code(&self, index: usize) -> &str {
        &self.categories[index]
    }
}
