//! Digraph overlay that defines which replicas a node multicasts to.
//!
//! Only the full-mesh preset is consumed by the leaderless engine. Chain and
//! star are provided as validated presets for experimentation with other
//! multicast patterns.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::ReplicaId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OverlayError {
    #[error("overlay needs at least one replica")]
    Empty,
    #[error("replica {0} is not part of the overlay")]
    UnknownNode(ReplicaId),
    #[error("self edge on {0}")]
    SelfEdge(ReplicaId),
}

/// Named overlay presets selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OverlayKind {
    #[default]
    Mesh,
    Chain,
    Star,
}

impl fmt::Display for OverlayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlayKind::Mesh => "mesh",
            OverlayKind::Chain => "chain",
            OverlayKind::Star => "star",
        })
    }
}

impl FromStr for OverlayKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mesh" => Ok(OverlayKind::Mesh),
            "chain" => Ok(OverlayKind::Chain),
            "star" => Ok(OverlayKind::Star),
            other => Err(format!("unknown overlay '{other}' (expected mesh|chain|star)")),
        }
    }
}

/// Directed multicast graph over replica ids `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Overlay {
    nodes: BTreeSet<ReplicaId>,
    // successor lists kept sorted so multicast order is deterministic
    successors: BTreeMap<ReplicaId, BTreeSet<ReplicaId>>,
}

impl Overlay {
    /// Builds an overlay from an explicit edge list, rejecting self edges and
    /// edges that mention nodes outside `nodes`.
    pub fn from_edges(
        nodes: impl IntoIterator<Item = ReplicaId>,
        edges: impl IntoIterator<Item = (ReplicaId, ReplicaId)>,
    ) -> Result<Self, OverlayError> {
        let nodes: BTreeSet<ReplicaId> = nodes.into_iter().collect();
        if nodes.is_empty() {
            return Err(OverlayError::Empty);
        }
        let mut successors: BTreeMap<ReplicaId, BTreeSet<ReplicaId>> =
            nodes.iter().map(|n| (*n, BTreeSet::new())).collect();
        for (from, to) in edges {
            if from == to {
                return Err(OverlayError::SelfEdge(from));
            }
            if !nodes.contains(&to) {
                return Err(OverlayError::UnknownNode(to));
            }
            successors
                .get_mut(&from)
                .ok_or(OverlayError::UnknownNode(from))?
                .insert(to);
        }
        Ok(Overlay { nodes, successors })
    }

    /// Every ordered pair of distinct replicas.
    pub fn full_mesh(n: usize) -> Result<Self, OverlayError> {
        let ids = ids(n)?;
        let edges = ids
            .iter()
            .flat_map(|a| ids.iter().filter(move |b| *b != a).map(move |b| (*a, *b)));
        Overlay::from_edges(ids.iter().copied(), edges)
    }

    /// Edges `(i, i+1)`.
    pub fn chain(n: usize) -> Result<Self, OverlayError> {
        let ids = ids(n)?;
        let edges = ids.windows(2).map(|w| (w[0], w[1]));
        Overlay::from_edges(ids.iter().copied(), edges)
    }

    /// Bidirectional edges between `center` and every other replica.
    pub fn star(center: ReplicaId, n: usize) -> Result<Self, OverlayError> {
        let ids = ids(n)?;
        if center.index() >= n {
            return Err(OverlayError::UnknownNode(center));
        }
        let edges = ids
            .iter()
            .filter(|x| **x != center)
            .flat_map(|x| [(center, *x), (*x, center)]);
        Overlay::from_edges(ids.iter().copied(), edges)
    }

    pub fn preset(kind: OverlayKind, n: usize) -> Result<Self, OverlayError> {
        match kind {
            OverlayKind::Mesh => Overlay::full_mesh(n),
            OverlayKind::Chain => Overlay::chain(n),
            OverlayKind::Star => Overlay::star(ReplicaId(0), n),
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = ReplicaId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// All edges, sorted by `(from, to)`.
    pub fn edges(&self) -> Vec<(ReplicaId, ReplicaId)> {
        self.successors
            .iter()
            .flat_map(|(from, tos)| tos.iter().map(move |to| (*from, *to)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.successors.values().map(BTreeSet::len).sum()
    }

    /// Successors of `origin`, ascending by replica id.
    pub fn multicast_targets(&self, origin: ReplicaId) -> Result<Vec<ReplicaId>, OverlayError> {
        self.successors
            .get(&origin)
            .map(|s| s.iter().copied().collect())
            .ok_or(OverlayError::UnknownNode(origin))
    }

    /// True when every node reaches every other node along directed edges.
    pub fn is_strongly_connected(&self) -> bool {
        self.nodes.iter().all(|start| self.reachable_from(*start).len() == self.nodes.len())
    }

    /// True when every node multicasts directly to all others.
    pub fn is_full_mesh(&self) -> bool {
        let n = self.nodes.len();
        self.successors.values().all(|s| s.len() == n - 1)
    }

    fn reachable_from(&self, start: ReplicaId) -> BTreeSet<ReplicaId> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for next in &self.successors[&n] {
                if seen.insert(*next) {
                    queue.push_back(*next);
                }
            }
        }
        seen
    }
}

fn ids(n: usize) -> Result<Vec<ReplicaId>, OverlayError> {
    if n == 0 {
        return Err(OverlayError::Empty);
    }
    Ok((0..n).map(ReplicaId::from).collect())
}
