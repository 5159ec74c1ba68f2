use std::sync::Arc;

/// Directed pairs `(sender, receiver)` of the complete graph on `n` nodes,
/// ordered by receiver and then sender. This is the row order of every
/// per-edge tensor, so edges into one node are contiguous.
pub fn edge_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for j in 0..n {
        for i in 0..n {
            if i != j {
                out.push((i, j));
            }
        }
    }
    out
}

/// Row of pair `(i, j)` in [`edge_pairs`] order.
pub fn edge_index(n: usize, sender: usize, receiver: usize) -> usize {
    debug_assert!(sender != receiver && sender < n && receiver < n);
    receiver * (n - 1) + if sender < receiver { sender } else { sender - 1 }
}

/// Index maps for a batch of equally sized complete graphs stacked row-wise.
#[derive(Clone, Debug)]
pub struct GraphLayout {
    pub batch: usize,
    pub nodes: usize,
    pub senders: Arc<[usize]>,
    pub receivers: Arc<[usize]>,
}

impl GraphLayout {
    pub fn new(batch: usize, nodes: usize) -> Self {
        let pairs = edge_pairs(nodes);
        let mut senders = Vec::with_capacity(batch * pairs.len());
        let mut receivers = Vec::with_capacity(batch * pairs.len());
        for b in 0..batch {
            for &(i, j) in &pairs {
                senders.push(b * nodes + i);
                receivers.push(b * nodes + j);
            }
        }
        GraphLayout {
            batch,
            nodes,
            senders: senders.into(),
            receivers: receivers.into(),
        }
    }

    pub fn edges_per_graph(&self) -> usize {
        self.nodes * (self.nodes - 1)
    }

    pub fn node_rows(&self) -> usize {
        self.batch * self.nodes
    }

    pub fn edge_rows(&self) -> usize {
        self.batch * self.edges_per_graph()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_order_and_index_agree() {
        for n in 2..7 {
            let pairs = edge_pairs(n);
            assert_eq!(pairs.len(), n * (n - 1));
            for (e, &(i, j)) in pairs.iter().enumerate() {
                assert_eq!(edge_index(n, i, j), e);
            }
        }
        assert_eq!(edge_pairs(12).len(), 132);
    }

    #[test]
    fn batch_offsets() {
        let l = GraphLayout::new(2, 3);
        assert_eq!(l.edge_rows(), 12);
        assert_eq!(&l.senders[6..8], &[4, 5]);
        assert_eq!(&l.receivers[6..8], &[3, 3]);
    }
}
