//! Per-request accounting of which images went where and when they finished.
//!
//! Every image of a batch has an id. Ids are handed out to nodes in order
//! when work is issued, marked when a node reports them done, and returned
//! to the pool when a node disconnects with work outstanding, so the
//! remainder can be issued again. The ledger also keeps a simulated clock
//! per node: a node works through its orders in arrival order, an order
//! starts when both the node is free and the order has been issued, and
//! the node's clock advances by the elapsed time each result reports.

use std::collections::{BTreeMap, VecDeque};
use std::ops::Range;

use thiserror::Error;

use super::event::WorkResult;
use crate::outcome::NodeOutcome;
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("cannot issue {wanted} images, only {available} unassigned")]
    PoolExhausted { wanted: u64, available: u64 },
    #[error("result from node `{0}`, which has no open order")]
    NoOpenOrder(NodeId),
    #[error("node `{node}` reported {reported} images against {remaining} outstanding")]
    Overflow { node: NodeId, reported: u64, remaining: u64 },
    #[error("correct count {correct} exceeds {images} images")]
    TooManyCorrect { correct: u64, images: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Order {
    ids: VecDeque<Range<u64>>,
    remaining: u64,
    issue_ms: u64,
    started: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct NodeBook {
    orders: VecDeque<Order>,
    clock_ms: u64,
    last_result_ms: Option<u64>,
    images: u64,
    correct: u64,
}

/// What a disconnected node left behind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reclaimed {
    pub images: u64,
    /// Simulated time at which the node stopped.
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkLedger {
    start_ms: u64,
    marks: Vec<u8>,
    pool: VecDeque<Range<u64>>,
    nodes: BTreeMap<NodeId, NodeBook>,
}

fn take(ranges: &mut VecDeque<Range<u64>>, mut count: u64) -> VecDeque<Range<u64>> {
    let mut out = VecDeque::new();
    while count > 0 {
        let Some(front) = ranges.front_mut() else { break };
        let n = (front.end - front.start).min(count);
        out.push_back(front.start..front.start + n);
        front.start += n;
        if front.start == front.end {
            ranges.pop_front();
        }
        count -= n;
    }
    out
}

impl WorkLedger {
    /// Ledger for a batch of `batch` images whose first broadcast happens
    /// at `start_ms`; every node is idle at that time.
    pub fn new(batch: u64, start_ms: u64) -> Self {
        let mut pool = VecDeque::new();
        if batch > 0 {
            pool.push_back(0..batch);
        }
        Self {
            start_ms,
            marks: vec![0; batch as usize],
            pool,
            nodes: BTreeMap::new(),
        }
    }

    pub fn batch(&self) -> u64 {
        self.marks.len() as u64
    }

    pub fn start_ms(&self) -> u64 {
        self.start_ms
    }

    /// Images not currently assigned to any node.
    pub fn unissued(&self) -> u64 {
        self.pool.iter().map(|r| r.end - r.start).sum()
    }

    /// Images not yet reported done.
    pub fn outstanding(&self) -> u64 {
        self.unissued()
            + self
                .nodes
                .values()
                .flat_map(|b| &b.orders)
                .map(|o| o.remaining)
                .sum::<u64>()
    }

    /// Every image is done and every node has answered every order.
    pub fn is_complete(&self) -> bool {
        self.pool.is_empty() && self.nodes.values().all(|b| b.orders.is_empty())
    }

    pub fn issue(&mut self, node: &NodeId, images: u64, issue_ms: u64) -> Result<(), LedgerError> {
        let available = self.unissued();
        if images > available {
            return Err(LedgerError::PoolExhausted { wanted: images, available });
        }
        let ids = take(&mut self.pool, images);
        let start = self.start_ms;
        let book = self.nodes.entry(node.clone()).or_insert_with(|| NodeBook {
            orders: VecDeque::new(),
            clock_ms: start,
            last_result_ms: None,
            images: 0,
            correct: 0,
        });
        book.orders.push_back(Order { ids, remaining: images, issue_ms, started: false });
        Ok(())
    }

    /// Applies a result to the node's oldest open order.
    pub fn record(&mut self, result: &WorkResult) -> Result<(), LedgerError> {
        if result.top5_correct > result.images_done {
            return Err(LedgerError::TooManyCorrect {
                correct: result.top5_correct,
                images: result.images_done,
            });
        }
        let node = &result.node_id;
        let book = self
            .nodes
            .get_mut(node)
            .filter(|b| !b.orders.is_empty())
            .ok_or_else(|| LedgerError::NoOpenOrder(node.clone()))?;
        let order = book.orders.front_mut().expect("checked non-empty");
        if result.images_done > order.remaining {
            return Err(LedgerError::Overflow {
                node: node.clone(),
                reported: result.images_done,
                remaining: order.remaining,
            });
        }
        if !order.started {
            book.clock_ms = book.clock_ms.max(order.issue_ms);
            order.started = true;
        }
        book.clock_ms += result.elapsed_ms;
        book.last_result_ms = Some(book.clock_ms);
        book.images += result.images_done;
        book.correct += result.top5_correct;

        for range in take(&mut order.ids, result.images_done) {
            for id in range {
                self.marks[id as usize] = self.marks[id as usize].saturating_add(1);
            }
        }
        order.remaining -= result.images_done;
        if order.remaining == 0 {
            book.orders.pop_front();
        }
        Ok(())
    }

    /// Returns a departed node's unfinished images to the pool.
    pub fn reclaim(&mut self, node: &NodeId) -> Reclaimed {
        let Some(book) = self.nodes.get_mut(node) else {
            return Reclaimed { images: 0, at_ms: self.start_ms };
        };
        let at_ms = match book.orders.front() {
            Some(o) if !o.started => book.clock_ms.max(o.issue_ms),
            _ => book.clock_ms,
        };
        let mut images = 0;
        for order in book.orders.drain(..) {
            images += order.remaining;
            self.pool.extend(order.ids);
        }
        Reclaimed { images, at_ms }
    }

    /// Simulated time at which the node has finished everything reported so far.
    pub fn clock_ms(&self, node: &NodeId) -> u64 {
        self.nodes.get(node).map_or(self.start_ms, |b| b.clock_ms)
    }

    /// Latest result time over all nodes.
    pub fn finish_ms(&self) -> u64 {
        self.nodes
            .values()
            .filter_map(|b| b.last_result_ms)
            .fold(self.start_ms, u64::max)
    }

    /// Images reported done at least once.
    pub fn completed(&self) -> u64 {
        self.marks.iter().filter(|&&m| m > 0).count() as u64
    }

    /// Extra completions beyond the first, summed over images.
    pub fn duplicates(&self) -> u64 {
        self.marks.iter().map(|&m| u64::from(m.saturating_sub(1))).sum()
    }

    pub fn correct(&self) -> u64 {
        self.nodes.values().map(|b| b.correct).sum()
    }

    /// Per-node totals, in node id order.
    pub fn node_outcomes(&self) -> Vec<NodeOutcome> {
        self.nodes
            .iter()
            .map(|(id, b)| NodeOutcome {
                node_id: id.clone(),
                elapsed: b.last_result_ms.map_or(0, |t| t - self.start_ms) as f64 / 1000.0,
                images: b.images,
                correct: b.correct,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(node: &str, images: u64, correct: u64, ms: u64) -> WorkResult {
        WorkResult {
            request_id: 1,
            node_id: NodeId::from(node),
            images_done: images,
            top5_correct: correct,
            elapsed_ms: ms,
        }
    }

    #[test]
    fn straight_completion() {
        let mut l = WorkLedger::new(10, 100);
        l.issue(&"a".into(), 4, 100).unwrap();
        l.issue(&"b".into(), 6, 100).unwrap();
        assert_eq!(l.outstanding(), 10);
        l.record(&result("a", 4, 3, 1000)).unwrap();
        assert!(!l.is_complete());
        l.record(&result("b", 6, 6, 500)).unwrap();
        assert!(l.is_complete());
        assert_eq!(l.finish_ms(), 1100);
        assert_eq!(l.completed(), 10);
        assert_eq!(l.duplicates(), 0);
        assert_eq!(l.correct(), 9);
    }

    #[test]
    fn reclaim_and_reissue() {
        let mut l = WorkLedger::new(10, 0);
        l.issue(&"a".into(), 5, 0).unwrap();
        l.issue(&"b".into(), 5, 0).unwrap();
        l.record(&result("a", 2, 2, 400)).unwrap();
        let r = l.reclaim(&"a".into());
        assert_eq!(r, Reclaimed { images: 3, at_ms: 400 });
        assert_eq!(l.unissued(), 3);
        l.issue(&"b".into(), 3, 400).unwrap();
        l.record(&result("b", 5, 5, 1000)).unwrap();
        l.record(&result("b", 3, 3, 600)).unwrap();
        assert!(l.is_complete());
        // second order waits for the first: max(1000, 400) + 600
        assert_eq!(l.clock_ms(&"b".into()), 1600);
        assert_eq!(l.completed(), 10);
        assert_eq!(l.duplicates(), 0);
    }

    #[test]
    fn late_issue_waits_for_issue_time() {
        let mut l = WorkLedger::new(4, 0);
        l.issue(&"a".into(), 2, 0).unwrap();
        l.record(&result("a", 2, 0, 100)).unwrap();
        l.issue(&"a".into(), 2, 900).unwrap();
        l.record(&result("a", 2, 0, 100)).unwrap();
        assert_eq!(l.finish_ms(), 1000);
    }

    #[test]
    fn zero_image_orders_still_need_an_answer() {
        let mut l = WorkLedger::new(3, 0);
        l.issue(&"a".into(), 3, 0).unwrap();
        l.issue(&"b".into(), 0, 0).unwrap();
        l.record(&result("a", 3, 3, 10)).unwrap();
        assert!(!l.is_complete());
        l.record(&result("b", 0, 0, 0)).unwrap();
        assert!(l.is_complete());
    }

    #[test]
    fn rejects_bad_results() {
        let mut l = WorkLedger::new(3, 0);
        assert!(matches!(l.record(&result("a", 1, 0, 1)), Err(LedgerError::NoOpenOrder(_))));
        l.issue(&"a".into(), 2, 0).unwrap();
        assert!(matches!(l.record(&result("a", 3, 0, 1)), Err(LedgerError::Overflow { .. })));
        assert!(matches!(l.record(&result("a", 1, 2, 1)), Err(LedgerError::TooManyCorrect { .. })));
        assert!(matches!(l.issue(&"b".into(), 2, 0), Err(LedgerError::PoolExhausted { .. })));
    }

    #[test]
    fn reclaim_before_any_result_uses_issue_time() {
        let mut l = WorkLedger::new(5, 0);
        l.issue(&"a".into(), 5, 250).unwrap();
        assert_eq!(l.reclaim(&"a".into()), Reclaimed { images: 5, at_ms: 250 });
        assert_eq!(l.reclaim(&"zz".into()).images, 0);
    }
}
