//! Hybrid communication layer.
//!
//! Maps a communication mode onto per-RAT segments, turns per-segment
//! deliveries into reception reports, and keeps the sender-side reception
//! evaluation vector with its success-reception (SR) counter.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::RatKind;
use crate::scenario::VehicleId;

/// Communication mode. Integer codes are the agent's action indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum CommMode {
    SingleItsG5 = 0,
    SingleLte = 1,
    HybridRedundant = 2,
    HybridDivision = 3,
}

impl CommMode {
    pub const ALL: [CommMode; 4] = [
        CommMode::SingleItsG5,
        CommMode::SingleLte,
        CommMode::HybridRedundant,
        CommMode::HybridDivision,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn segments(self) -> &'static [Segment] {
        const G5: Segment = Segment::new(RatKind::ItsG5, 1.0);
        const LTE: Segment = Segment::new(RatKind::LteV2xPc5, 1.0);
        const G5_HALF: Segment = Segment::new(RatKind::ItsG5, 0.5);
        const LTE_HALF: Segment = Segment::new(RatKind::LteV2xPc5, 0.5);
        match self {
            CommMode::SingleItsG5 => &[G5],
            CommMode::SingleLte => &[LTE],
            CommMode::HybridRedundant => &[G5, LTE],
            CommMode::HybridDivision => &[G5_HALF, LTE_HALF],
        }
    }

    /// Inverse of [`CommMode::segments`].
    pub fn from_segments(segments: &[Segment]) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.segments() == segments)
    }

    pub fn uses(self, rat: RatKind) -> bool {
        self.segments().iter().any(|s| s.rat == rat)
    }
}

impl fmt::Display for CommMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommMode::SingleItsG5 => "single-its-g5",
            CommMode::SingleLte => "single-lte",
            CommMode::HybridRedundant => "redundant",
            CommMode::HybridDivision => "division",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub rat: RatKind,
    pub payload_fraction: f64,
}

impl Segment {
    pub const fn new(rat: RatKind, payload_fraction: f64) -> Self {
        Self { rat, payload_fraction }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MessageId(pub u64);

pub const DEFAULT_PAYLOAD_BYTES: u32 = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub id: MessageId,
    pub sender: VehicleId,
    pub sequence: u64,
    pub payload_bytes: u32,
    pub mode: CommMode,
    pub send_time_ms: f64,
    pub segments: Vec<Segment>,
}

impl Message {
    pub fn new(id: MessageId, sender: VehicleId, sequence: u64, mode: CommMode, send_time_ms: f64) -> Self {
        Self {
            id,
            sender,
            sequence,
            payload_bytes: DEFAULT_PAYLOAD_BYTES,
            mode,
            send_time_ms,
            segments: mode.segments().to_vec(),
        }
    }
}

/// One per-RAT frame of a message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub message: MessageId,
    pub sender: VehicleId,
    pub segment_index: u8,
    pub rat: RatKind,
    pub payload_fraction: f64,
    pub payload_bytes: u32,
}

/// Fans a message out into one transmission per segment.
pub fn transmit(msg: &Message) -> Result<Vec<Transmission>> {
    if CommMode::from_segments(&msg.segments) != Some(msg.mode) {
        return Err(Error::Protocol(format!(
            "message {:?}: segments {:?} do not match mode {}",
            msg.id, msg.segments, msg.mode
        )));
    }
    Ok(msg
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| Transmission {
            message: msg.id,
            sender: msg.sender,
            segment_index: i as u8,
            rat: s.rat,
            payload_fraction: s.payload_fraction,
            payload_bytes: (msg.payload_bytes as f64 * s.payload_fraction).ceil() as u32,
        })
        .collect())
}

/// Reception report alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Report {
    Missed = 0,
    Received = 1,
    Duplicate = 2,
}

impl Report {
    pub fn value(self) -> u8 {
        self as u8
    }
}

/// Report for one receiver given which segments reached it.
pub fn reception_report(mode: CommMode, delivered: &[bool]) -> Result<Report> {
    if delivered.len() != mode.segments().len() {
        return Err(Error::Protocol(format!(
            "{mode}: expected {} segment flags, got {}",
            mode.segments().len(),
            delivered.len()
        )));
    }
    let n = delivered.iter().filter(|&&d| d).count();
    Ok(match (mode, n) {
        (_, 0) => Report::Missed,
        (CommMode::HybridRedundant, 2) => Report::Duplicate,
        (CommMode::HybridDivision, 1) => Report::Missed,
        _ => Report::Received,
    })
}

/// Bit set of delivered segment indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct SegmentMask(pub u8);

impl SegmentMask {
    pub fn with(self, segment: u8) -> Self {
        SegmentMask(self.0 | (1 << segment))
    }

    pub fn contains(self, segment: u8) -> bool {
        self.0 & (1 << segment) != 0
    }

    pub fn flags(self, n: usize) -> Vec<bool> {
        (0..n as u8).map(|i| self.contains(i)).collect()
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }
}

/// Number of complete, usable copies of a message the mask represents.
pub fn complete_copies(mode: CommMode, mask: SegmentMask) -> u8 {
    match mode {
        CommMode::HybridDivision => u8::from(mask.count() == 2),
        _ => mask.count() as u8,
    }
}

/// Acknowledgment returned over the ITS-G5 service channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckRecord {
    pub receiver: VehicleId,
    pub message: MessageId,
    pub copies: u8,
    pub first_copy_latency_ms: f64,
    pub segments: SegmentMask,
}

/// How the SR counter judges a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SrRule {
    /// Every neighbor reported exactly one copy; a duplicate breaks the round.
    ExactlyOne,
    /// Every neighbor got the message, duplicates included.
    #[default]
    AtLeastOne,
}

impl SrRule {
    pub fn accepts(self, report: Report) -> bool {
        match self {
            SrRule::ExactlyOne => report == Report::Received,
            SrRule::AtLeastOne => report != Report::Missed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    /// One entry per expected neighbor, in the order given.
    pub reports: Vec<(VehicleId, Report)>,
    pub perfect: bool,
}

/// Sender-side reception evaluation vector.
#[derive(Debug, Clone, Default)]
pub struct ReceptionVector {
    acks: BTreeMap<VehicleId, AckRecord>,
    sr_counter: u32,
}

impl ReceptionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sr_counter(&self) -> u32 {
        self.sr_counter
    }

    /// Current report for `receiver`, if any ack arrived this round.
    pub fn report(&self, receiver: VehicleId, mode: CommMode) -> Option<Report> {
        self.acks
            .get(&receiver)
            .map(|a| reception_report(mode, &a.segments.flags(mode.segments().len())).unwrap_or(Report::Missed))
    }

    pub fn acks(&self) -> impl Iterator<Item = &AckRecord> {
        self.acks.values()
    }

    /// Merges an acknowledgment. Repeated acks from the same receiver keep
    /// the larger copy count and the union of delivered segments.
    pub fn record_ack(&mut self, ack: AckRecord) {
        self.acks
            .entry(ack.receiver)
            .and_modify(|prev| {
                prev.copies = prev.copies.max(ack.copies);
                prev.segments = SegmentMask(prev.segments.0 | ack.segments.0);
                prev.first_copy_latency_ms = prev.first_copy_latency_ms.min(ack.first_copy_latency_ms);
            })
            .or_insert(ack);
    }

    /// Closes the round: neighbors without an ack report zero, the SR
    /// counter advances on a perfect round and the reports are cleared.
    pub fn finalize_round(&mut self, mode: CommMode, expected: &[VehicleId], rule: SrRule) -> RoundOutcome {
        let reports: Vec<_> = expected
            .iter()
            .map(|&id| (id, self.report(id, mode).unwrap_or(Report::Missed)))
            .collect();
        let perfect = reports.iter().all(|&(_, r)| rule.accepts(r));
        if perfect {
            self.sr_counter += 1;
        }
        self.acks.clear();
        RoundOutcome { reports, perfect }
    }

    /// Game start.
    pub fn reset(&mut self) {
        self.acks.clear();
        self.sr_counter = 0;
    }
}

/// Packet reception ratio of a game: SR target over messages sent.
pub fn prr_game(sr_target: u32, n_sent: u64) -> Result<f64> {
    if sr_target == 0 || n_sent < sr_target as u64 {
        return Err(Error::Accounting(format!(
            "prr with sr_target {sr_target} and {n_sent} messages sent"
        )));
    }
    Ok(sr_target as f64 / n_sent as f64)
}

/// Running reception counts for the duplicated-message statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DuplicateCounter {
    pub received: u64,
    pub duplicated: u64,
}

impl DuplicateCounter {
    pub fn add(&mut self, copies: u8) {
        if copies >= 1 {
            self.received += 1;
        }
        if copies >= 2 {
            self.duplicated += 1;
        }
    }

    pub fn merge(&mut self, other: DuplicateCounter) {
        self.received += other.received;
        self.duplicated += other.duplicated;
    }

    /// Percentage of received messages that arrived twice; 0 when nothing
    /// was received.
    pub fn percentage(&self) -> f64 {
        if self.received == 0 {
            0.0
        } else {
            100.0 * self.duplicated as f64 / self.received as f64
        }
    }
}

/// Duplicated-message percentage over a set of final acknowledgments.
pub fn duplicated_message_stats<'a>(acks: impl IntoIterator<Item = &'a AckRecord>) -> f64 {
    let mut c = DuplicateCounter::default();
    for a in acks {
        c.add(a.copies);
    }
    c.percentage()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ack(receiver: u32, copies: u8, mask: u8) -> AckRecord {
        AckRecord {
            receiver: VehicleId(receiver),
            message: MessageId(1),
            copies,
            first_copy_latency_ms: 5.0,
            segments: SegmentMask(mask),
        }
    }

    #[test]
    fn action_codes() {
        for (i, m) in CommMode::ALL.iter().enumerate() {
            assert_eq!(m.index(), i);
            assert_eq!(CommMode::from_index(i), Some(*m));
        }
        assert_eq!(CommMode::from_index(4), None);
    }

    #[test]
    fn mode_segment_bijection() {
        for m in CommMode::ALL {
            assert_eq!(CommMode::from_segments(m.segments()), Some(m));
        }
        assert_eq!(CommMode::from_segments(&[]), None);
    }

    #[test]
    fn transmit_fans_out_per_segment() {
        let msg = |mode| Message::new(MessageId(7), VehicleId(0), 0, mode, 0.0);
        let red = transmit(&msg(CommMode::HybridRedundant)).unwrap();
        assert_eq!(red.len(), 2);
        assert_eq!((red[0].payload_fraction, red[1].payload_fraction), (1.0, 1.0));
        assert_eq!((red[0].rat, red[1].rat), (RatKind::ItsG5, RatKind::LteV2xPc5));

        let single = transmit(&msg(CommMode::SingleItsG5)).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].rat, RatKind::ItsG5);

        let div = transmit(&msg(CommMode::HybridDivision)).unwrap();
        assert_eq!((div[0].payload_fraction, div[1].payload_fraction), (0.5, 0.5));
        assert_eq!(div[0].payload_bytes, 150);
    }

    #[test]
    fn malformed_segments_rejected() {
        let mut msg = Message::new(MessageId(1), VehicleId(0), 0, CommMode::HybridDivision, 0.0);
        msg.segments.pop();
        assert!(matches!(transmit(&msg), Err(Error::Protocol(_))));
    }

    #[test]
    fn report_values() {
        use CommMode::*;
        assert_eq!(reception_report(HybridRedundant, &[true, true]).unwrap(), Report::Duplicate);
        assert_eq!(reception_report(HybridRedundant, &[true, false]).unwrap(), Report::Received);
        assert_eq!(reception_report(HybridRedundant, &[false, false]).unwrap(), Report::Missed);
        assert_eq!(reception_report(HybridDivision, &[true, false]).unwrap(), Report::Missed);
        assert_eq!(reception_report(HybridDivision, &[true, true]).unwrap(), Report::Received);
        assert_eq!(reception_report(SingleLte, &[true]).unwrap(), Report::Received);
        assert_eq!(reception_report(SingleItsG5, &[false]).unwrap(), Report::Missed);
        assert!(reception_report(SingleItsG5, &[true, true]).is_err());
    }

    #[test]
    fn record_ack_single_entry() {
        let mut v = ReceptionVector::new();
        v.record_ack(ack(3, 1, 0b01));
        assert_eq!(v.report(VehicleId(3), CommMode::SingleItsG5), Some(Report::Received));
        v.record_ack(ack(3, 2, 0b11));
        v.record_ack(ack(3, 1, 0b01));
        assert_eq!(v.acks().count(), 1);
        assert_eq!(v.acks().next().unwrap().copies, 2);
        assert_eq!(v.report(VehicleId(3), CommMode::HybridRedundant), Some(Report::Duplicate));
    }

    #[test]
    fn silent_neighbor_reports_zero() {
        let mut v = ReceptionVector::new();
        v.record_ack(ack(1, 1, 0b1));
        let out = v.finalize_round(CommMode::SingleItsG5, &[VehicleId(1), VehicleId(2)], SrRule::AtLeastOne);
        assert_eq!(out.reports, vec![(VehicleId(1), Report::Received), (VehicleId(2), Report::Missed)]);
        assert!(!out.perfect);
        assert_eq!(v.sr_counter(), 0);
    }

    #[test]
    fn perfect_round_increments_sr() {
        let mut v = ReceptionVector::new();
        let expected: Vec<_> = (1..=4).map(VehicleId).collect();
        for id in 1..=4 {
            v.record_ack(ack(id, 1, 0b1));
        }
        let out = v.finalize_round(CommMode::SingleLte, &expected, SrRule::ExactlyOne);
        assert!(out.perfect);
        assert_eq!(v.sr_counter(), 1);
        // cleaned after the round
        assert_eq!(v.acks().count(), 0);
    }

    #[test]
    fn duplicate_breaks_strict_rule_only() {
        let expected: Vec<_> = (1..=4).map(VehicleId).collect();
        for (rule, perfect) in [(SrRule::ExactlyOne, false), (SrRule::AtLeastOne, true)] {
            let mut v = ReceptionVector::new();
            v.record_ack(ack(1, 2, 0b11));
            for id in 2..=4 {
                v.record_ack(ack(id, 1, 0b01));
            }
            let out = v.finalize_round(CommMode::HybridRedundant, &expected, rule);
            assert_eq!(out.perfect, perfect, "{rule:?}");
            assert_eq!(v.sr_counter(), u32::from(perfect));
        }
    }

    #[test]
    fn empty_neighborhood_is_vacuously_perfect() {
        let mut v = ReceptionVector::new();
        assert!(v.finalize_round(CommMode::SingleItsG5, &[], SrRule::ExactlyOne).perfect);
        assert_eq!(v.sr_counter(), 1);
        v.reset();
        assert_eq!(v.sr_counter(), 0);
    }

    #[test]
    fn prr_arithmetic() {
        assert_eq!(prr_game(100, 100).unwrap(), 1.0);
        assert_eq!(prr_game(100, 125).unwrap(), 0.8);
        assert!(matches!(prr_game(100, 99), Err(Error::Accounting(_))));
    }

    #[test]
    fn duplicate_percentages() {
        let singles: Vec<_> = (0..10).map(|i| ack(i, 1, 0b1)).collect();
        assert_eq!(duplicated_message_stats(&singles), 0.0);
        let doubles: Vec<_> = (0..10).map(|i| ack(i, 2, 0b11)).collect();
        assert_eq!(duplicated_message_stats(&doubles), 100.0);
        assert_eq!(duplicated_message_stats(&[]), 0.0);

        let mut c = DuplicateCounter::default();
        for i in 0..10_718u32 {
            c.add(if i < 7119 { 2 } else { 1 });
        }
        assert!((c.percentage() - 66.42).abs() < 0.01);
    }

    #[test]
    fn division_copies_need_both_halves() {
        assert_eq!(complete_copies(CommMode::HybridDivision, SegmentMask(0b01)), 0);
        assert_eq!(complete_copies(CommMode::HybridDivision, SegmentMask(0b11)), 1);
        assert_eq!(complete_copies(CommMode::HybridRedundant, SegmentMask(0b11)), 2);
    }
}
