use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub time_ms: f64,
    pub seq: u64,
    pub kind: EventKind<P>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind<P> {
    GatewayToggle,
    HostFailure(usize),
    User(P),
}

struct Entry<P>(Event<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    // BinaryHeap is a max-heap: invert so the earliest (time, seq) is on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.time_ms.total_cmp(&self.0.time_ms).then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

/// Time-ordered queue; equal timestamps pop in insertion order.
pub struct EventQueue<P> {
    heap: BinaryHeap<Entry<P>>,
    next_seq: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self { heap: BinaryHeap::new(), next_seq: 0 }
    }
}

impl<P> EventQueue<P> {
    pub fn push(&mut self, time_ms: f64, kind: EventKind<P>) -> u64 {
        assert!(time_ms.is_finite(), "event time must be finite");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event { time_ms, seq, kind }));
        seq
    }

    /// Sequence number the next pushed event will receive.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.0.time_ms)
    }

    pub fn pop(&mut self) -> Option<Event<P>> {
        self.heap.pop().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
