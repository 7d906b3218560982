use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::hybrid::{AckRecord, MessageId, Transmission};

/// Simulation time in microseconds.
pub type SimTime = u64;

pub fn ms_to_time(ms: f64) -> SimTime {
    debug_assert!(ms.is_finite() && ms >= 0.0);
    (ms * 1000.0).round() as SimTime
}

pub fn time_to_ms(t: SimTime) -> f64 {
    t as f64 / 1000.0
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Platoon member (by index) is due to beacon.
    BeaconDue(usize),
    /// A frame reaches a platoon receiver. `decoded` is false for frames
    /// that were sensed but lost.
    Delivery {
        tx: Transmission,
        receiver: usize,
        send_time: SimTime,
        snir_db: f64,
        decoded: bool,
    },
    /// Acknowledgment arriving back at the sender.
    Ack { sender: usize, ack: AckRecord, message: MessageId },
    MobilityTick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Time-ordered queue; events at equal times pop in insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: SimTime, kind: EventKind) {
        self.heap.push(Event {
            time,
            seq: self.next_seq,
            kind,
        });
        self.next_seq += 1;
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn clear(&mut self) {
        self.heap.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_by_time_then_insertion() {
        let mut q = EventQueue::new();
        q.push(50, EventKind::BeaconDue(0));
        q.push(10, EventKind::BeaconDue(1));
        q.push(50, EventKind::BeaconDue(2));
        q.push(10, EventKind::MobilityTick);
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| (e.time, e.kind)).collect();
        assert_eq!(
            order,
            vec![
                (10, EventKind::BeaconDue(1)),
                (10, EventKind::MobilityTick),
                (50, EventKind::BeaconDue(0)),
                (50, EventKind::BeaconDue(2)),
            ]
        );
    }

    #[test]
    fn time_conversion() {
        assert_eq!(ms_to_time(100.0), 100_000);
        assert_eq!(ms_to_time(0.5), 500);
        assert_eq!(time_to_ms(99_500), 99.5);
    }
}
