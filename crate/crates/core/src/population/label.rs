//! Ulam-Harris particle labels and the genealogy arena that backs them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Path of 1-based child indices from the initial particle; empty for the
/// root. `3.2` is the second child of the third child of the root.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ParticleLabel(Vec<u32>);

impl ParticleLabel {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn from_path(path: Vec<u32>) -> Self {
        Self(path)
    }

    pub fn path(&self) -> &[u32] {
        &self.0
    }

    pub fn child(&self, index: u32) -> Self {
        let mut p = self.0.clone();
        p.push(index);
        Self(p)
    }

    pub fn parent(&self) -> Option<Self> {
        (!self.0.is_empty()).then(|| Self(self.0[..self.0.len() - 1].to_vec()))
    }

    /// Number of ancestors.
    pub fn generation(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    /// Strict ancestry: `self` is a proper prefix of `other`.
    pub fn is_ancestor_of(&self, other: &Self) -> bool {
        self.0.len() < other.0.len() && other.0.starts_with(&self.0)
    }
}

impl fmt::Display for ParticleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for ParticleLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Ok(Self::root());
        }
        s.split('.')
            .map(|part| match part.parse::<u32>() {
                Ok(0) | Err(_) => Err(Error::Parse(format!(
                    "bad label component {part:?} in {s:?}"
                ))),
                Ok(n) => Ok(n),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl From<ParticleLabel> for String {
    fn from(l: ParticleLabel) -> Self {
        l.to_string()
    }
}

impl TryFrom<String> for ParticleLabel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

pub type NodeId = u32;

/// Sentinel node for runs that do not track genealogy.
pub const UNTRACKED: NodeId = NodeId::MAX;

/// Append-only arena of every particle ever born: parent link, child index
/// and birth time. Node 0 is the initial particle.
#[derive(Debug, Clone)]
pub struct Genealogy {
    parent: Vec<NodeId>,
    index: Vec<u32>,
    birth: Vec<f64>,
}

impl Default for Genealogy {
    fn default() -> Self {
        Self::new()
    }
}

impl Genealogy {
    pub fn new() -> Self {
        Self {
            parent: vec![UNTRACKED],
            index: vec![0],
            birth: vec![0.0],
        }
    }

    pub const ROOT: NodeId = 0;

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn add_child(&mut self, parent: NodeId, index: u32, birth: f64) -> NodeId {
        let id = self.parent.len() as NodeId;
        self.parent.push(parent);
        self.index.push(index);
        self.birth.push(birth);
        id
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        match self.parent[node as usize] {
            UNTRACKED => None,
            p => Some(p),
        }
    }

    pub fn birth_time(&self, node: NodeId) -> f64 {
        self.birth[node as usize]
    }

    pub fn label(&self, node: NodeId) -> ParticleLabel {
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            path.push(self.index[cur as usize]);
            cur = p;
        }
        path.reverse();
        ParticleLabel(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        let l = ParticleLabel::root().child(3).child(2);
        assert_eq!(l.to_string(), "3.2");
        assert_eq!(l.generation(), 2);
        assert_eq!("3.2".parse::<ParticleLabel>().unwrap(), l);
        assert_eq!("".parse::<ParticleLabel>().unwrap(), ParticleLabel::root());
        assert!("3..2".parse::<ParticleLabel>().is_err());
        assert!("0".parse::<ParticleLabel>().is_err());
        assert!("x".parse::<ParticleLabel>().is_err());
    }

    #[test]
    fn ancestry_is_strict_prefix() {
        let root = ParticleLabel::root();
        let a = root.child(3);
        let b = a.child(2);
        assert!(root.is_ancestor_of(&a));
        assert!(root.is_ancestor_of(&b));
        assert!(a.is_ancestor_of(&b));
        assert!(!b.is_ancestor_of(&a));
        assert!(!a.is_ancestor_of(&a));
        assert!(!root.child(1).is_ancestor_of(&b));
        assert_eq!(b.parent(), Some(a));
    }

    #[test]
    fn children_of_three() {
        let p = ParticleLabel::root().child(3);
        let kids: Vec<String> = (1..=3).map(|i| p.child(i).to_string()).collect();
        assert_eq!(kids, ["3.1", "3.2", "3.3"]);
    }

    #[test]
    fn genealogy_labels() {
        let mut g = Genealogy::new();
        let a = g.add_child(Genealogy::ROOT, 1, 0.5);
        let b = g.add_child(Genealogy::ROOT, 2, 0.5);
        let c = g.add_child(b, 1, 0.9);
        assert_eq!(g.label(Genealogy::ROOT), ParticleLabel::root());
        assert_eq!(g.label(a).to_string(), "1");
        assert_eq!(g.label(c).to_string(), "2.1");
        assert_eq!(g.parent(c), Some(b));
        assert_eq!(g.parent(Genealogy::ROOT), None);
        assert_eq!(g.birth_time(c), 0.9);
    }
}
