use crate::belief::{dominates, BeliefError, BeliefNode};
use crate::planner::BeliefQueue;
use crate::{NodeId, VertexId};

/// Arena of belief nodes with per-vertex membership lists. Removed nodes
/// leave a tombstone so ids stay stable.
#[derive(Clone, Debug, Default)]
pub struct BeliefTree {
    nodes: Vec<Option<BeliefNode>>,
    by_vertex: Vec<Vec<NodeId>>,
    removed: usize,
}

/// Outcome of [`BeliefTree::append_belief`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Append {
    Accepted { id: NodeId, removed: Vec<NodeId> },
    Rejected,
}

impl BeliefTree {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&mut self, v: VertexId) -> &mut Vec<NodeId> {
        if v.0 >= self.by_vertex.len() {
            self.by_vertex.resize_with(v.0 + 1, Vec::new);
        }
        &mut self.by_vertex[v.0]
    }

    fn insert(&mut self, node: BeliefNode) -> NodeId {
        let id = NodeId(self.nodes.len());
        let vertex = node.vertex;
        if let Some(p) = node.parent {
            self.nodes[p.0].as_mut().expect("parent is live").children.push(id);
        }
        self.nodes.push(Some(node));
        self.slot(vertex).push(id);
        id
    }

    /// Adds a parentless node without a dominance check.
    pub fn insert_root(&mut self, mut node: BeliefNode) -> NodeId {
        node.parent = None;
        self.insert(node)
    }

    pub fn get(&self, id: NodeId) -> Option<&BeliefNode> {
        self.nodes.get(id.0).and_then(Option::as_ref)
    }

    pub fn get_mut(&mut self, id: NodeId) -> Option<&mut BeliefNode> {
        self.nodes.get_mut(id.0).and_then(Option::as_mut)
    }

    pub fn is_live(&self, id: NodeId) -> bool {
        self.get(id).is_some()
    }

    pub fn at_vertex(&self, v: VertexId) -> &[NodeId] {
        self.by_vertex.get(v.0).map_or(&[], Vec::as_slice)
    }

    /// Ids ever allocated, including removed ones.
    pub fn created(&self) -> usize {
        self.nodes.len()
    }

    pub fn removed(&self) -> usize {
        self.removed
    }

    pub fn live(&self) -> usize {
        self.nodes.len() - self.removed
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &BeliefNode)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.as_ref().map(|n| (NodeId(i), n)))
    }

    /// Ids from the root down to `id`.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.get(cur).and_then(|n| n.parent) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// `id` and all of its descendants, parents before children.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if let Some(node) = self.get(n) {
                out.push(n);
                stack.extend(node.children.iter().rev());
            }
        }
        out
    }

    /// Removes `id` with its descendants and purges them from `queue`.
    pub fn remove_subtree(&mut self, id: NodeId, queue: &mut BeliefQueue) -> Vec<NodeId> {
        let doomed = self.subtree(id);
        if let Some(p) = self.get(id).and_then(|n| n.parent) {
            if let Some(parent) = self.get_mut(p) {
                parent.children.retain(|&c| c != id);
            }
        }
        for &n in &doomed {
            let node = self.nodes[n.0].take().expect("subtree nodes are live");
            self.by_vertex[node.vertex.0].retain(|&m| m != n);
            queue.remove(n);
            self.removed += 1;
        }
        doomed
    }

    /// Adds `new` under its parent unless an incumbent at the same vertex
    /// dominates it or carries an identical triple. Incumbents dominated by
    /// `new` are removed with their subtrees.
    pub fn append_belief(&mut self, new: BeliefNode, eps: f64, queue: &mut BeliefQueue) -> Result<Append, BeliefError> {
        let mut dominated = Vec::new();
        for &id in self.at_vertex(new.vertex) {
            let inc = self.get(id).expect("vertex lists hold live nodes");
            if inc.same_triple(&new) || dominates(inc, &new, eps)? {
                return Ok(Append::Rejected);
            }
            if dominates(&new, inc, eps)? {
                dominated.push(id);
            }
        }
        if let Some(parent) = new.parent {
            if !self.is_live(parent) {
                return Ok(Append::Rejected);
            }
            // Never cut the branch the newcomer hangs from.
            let ancestors = self.path_to(parent);
            if dominated.iter().any(|d| ancestors.contains(d)) {
                return Ok(Append::Rejected);
            }
        }
        let mut removed = Vec::new();
        for id in dominated {
            if self.is_live(id) {
                removed.extend(self.remove_subtree(id, queue));
            }
        }
        let id = self.insert(new);
        Ok(Append::Accepted { id, removed })
    }
}
