use std::collections::BTreeMap;

use num_rational::Ratio;

use super::Message;
use crate::error::{Error, Result};

/// Cumulative payload accounting. Per-radar counters charge every broadcast
/// once; per-link counters charge every delivery. JSON framing bytes are
/// tracked apart from the payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkStats {
    period_us: u64,
    epochs: u64,
    sent_bits: Vec<u64>,
    sent_messages: Vec<u64>,
    wire_bytes: Vec<u64>,
    link_bits: BTreeMap<(usize, usize), u64>,
    link_messages: BTreeMap<(usize, usize), u64>,
}

impl LinkStats {
    /// `period` is the update period in seconds, kept to microsecond precision.
    pub fn new(n_radars: usize, period: f64) -> Result<Self> {
        let period_us = (period * 1e6).round();
        if !(period_us >= 1.0 && period_us < u64::MAX as f64) {
            return Err(Error::config(format!(
                "update period {period} s is not representable in microseconds"
            )));
        }
        Ok(Self {
            period_us: period_us as u64,
            epochs: 0,
            sent_bits: vec![0; n_radars],
            sent_messages: vec![0; n_radars],
            wire_bytes: vec![0; n_radars],
            link_bits: BTreeMap::new(),
            link_messages: BTreeMap::new(),
        })
    }

    pub fn account(&mut self, msg: &Message) {
        let h = msg.sender();
        self.sent_bits[h] += msg.payload_bits();
        self.sent_messages[h] += 1;
    }

    pub fn account_delivery(&mut self, receiver: usize, msg: &Message) {
        let key = (msg.sender(), receiver);
        *self.link_bits.entry(key).or_default() += msg.payload_bits();
        *self.link_messages.entry(key).or_default() += 1;
    }

    pub fn account_wire(&mut self, sender: usize, bytes: u64) {
        self.wire_bytes[sender] += bytes;
    }

    pub fn tick(&mut self) {
        self.epochs += 1;
    }

    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    pub fn n_radars(&self) -> usize {
        self.sent_bits.len()
    }

    pub fn sent_bits(&self, radar: usize) -> u64 {
        self.sent_bits[radar]
    }

    pub fn sent_messages(&self, radar: usize) -> u64 {
        self.sent_messages[radar]
    }

    pub fn wire_bytes(&self, radar: usize) -> u64 {
        self.wire_bytes[radar]
    }

    pub fn total_bits(&self) -> u64 {
        self.sent_bits.iter().sum()
    }

    pub fn link_bits(&self, sender: usize, receiver: usize) -> u64 {
        self.link_bits.get(&(sender, receiver)).copied().unwrap_or(0)
    }

    pub fn link_messages(&self, sender: usize, receiver: usize) -> u64 {
        self.link_messages.get(&(sender, receiver)).copied().unwrap_or(0)
    }

    /// Elapsed simulated time in seconds.
    pub fn elapsed(&self) -> Ratio<u128> {
        Ratio::new(self.epochs as u128 * self.period_us as u128, 1_000_000)
    }

    fn rate(&self, bits: u64) -> Ratio<u128> {
        if self.epochs == 0 {
            return Ratio::from_integer(0);
        }
        Ratio::new(bits as u128 * 1_000_000, self.epochs as u128 * self.period_us as u128)
    }

    /// Broadcast payload rate of `radar` in bit/s.
    pub fn rate_bps(&self, radar: usize) -> Ratio<u128> {
        self.rate(self.sent_bits[radar])
    }

    pub fn link_rate_bps(&self, sender: usize, receiver: usize) -> Ratio<u128> {
        self.rate(self.link_bits(sender, receiver))
    }

    pub fn total_rate_bps(&self) -> Ratio<u128> {
        self.rate(self.total_bits())
    }

    pub fn rate_bps_f64(&self, radar: usize) -> f64 {
        ratio_to_f64(self.rate_bps(radar))
    }
}

pub fn ratio_to_f64(r: Ratio<u128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sidelink::{CoopMessage, FedMessage};
    use proptest::prelude::*;

    fn coop(sender: usize, n: usize) -> Message {
        Message::Coop(CoopMessage {
            sender,
            epoch: 0,
            points: vec![[0.0; 3]; n],
        })
    }

    fn fed(sender: usize, m: usize) -> Message {
        Message::Fed(FedMessage {
            sender,
            epoch: 0,
            values: vec![0.0; 2 + 14 * m],
        })
    }

    fn rate_after(msg: impl Fn() -> Message, updates: u64) -> Ratio<u128> {
        let mut s = LinkStats::new(1, 0.01).unwrap();
        for _ in 0..updates {
            s.account(&msg());
            s.tick();
        }
        s.rate_bps(0)
    }

    #[test]
    fn reference_operating_points() {
        assert_eq!(rate_after(|| coop(0, 625), 100), Ratio::from_integer(12_000_000));
        assert_eq!(rate_after(|| coop(0, 815), 100), Ratio::from_integer(15_648_000));
        assert_eq!(rate_after(|| fed(0, 3), 100), Ratio::from_integer(281_600));
    }

    #[test]
    fn idle_link_has_zero_rate() {
        let mut s = LinkStats::new(2, 0.01).unwrap();
        assert_eq!(s.rate_bps(0), Ratio::from_integer(0));
        s.tick();
        assert_eq!(s.rate_bps(1), Ratio::from_integer(0));
        assert_eq!(s.link_rate_bps(0, 1), Ratio::from_integer(0));
    }

    #[test]
    fn deliveries_are_per_link() {
        let mut s = LinkStats::new(3, 0.01).unwrap();
        let m = fed(0, 3);
        s.account(&m);
        s.account_delivery(1, &m);
        s.account_delivery(2, &m);
        s.tick();
        assert_eq!(s.sent_bits(0), 2816);
        assert_eq!(s.link_bits(0, 1), 2816);
        assert_eq!(s.link_bits(0, 2), 2816);
        assert_eq!(s.link_bits(1, 0), 0);
        assert_eq!(s.elapsed(), Ratio::new(1, 100));
    }

    #[test]
    fn rejects_sub_microsecond_period() {
        assert!(LinkStats::new(1, 1e-9).is_err());
    }

    proptest! {
        #[test]
        fn accounting_is_linear(a in 0usize..2000, b in 0usize..2000, m in 0usize..8) {
            let mut both = LinkStats::new(1, 0.01).unwrap();
            both.account(&coop(0, a));
            both.account(&fed(0, m));
            both.account(&coop(0, b));
            prop_assert_eq!(both.sent_bits(0), coop(0, a).payload_bits() + fed(0, m).payload_bits() + coop(0, b).payload_bits());
            prop_assert_eq!(both.sent_messages(0), 3);
        }
    }
}
