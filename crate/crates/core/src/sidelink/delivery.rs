use std::collections::VecDeque;

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Message, Topology};
use crate::error::{Error, Result};

/// Per-radar clock offsets relative to the receiver plus sub-period jitter.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClockModel {
    /// `Delta t_h` in seconds; radars beyond the list are synchronized.
    pub offsets: Vec<f64>,
    /// Standard deviation of the residual timing error in seconds.
    pub jitter_std: f64,
}

impl ClockModel {
    pub fn synchronized() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.offsets.iter().find(|o| !o.is_finite()) {
            return Err(Error::config(format!("clock offset {bad} is not finite")));
        }
        if !(self.jitter_std.is_finite() && self.jitter_std >= 0.0) {
            return Err(Error::config(format!(
                "clock jitter {} must be finite and >= 0",
                self.jitter_std
            )));
        }
        Ok(())
    }

    pub fn offset(&self, radar: usize) -> f64 {
        self.offsets.get(radar).copied().unwrap_or(0.0)
    }

    /// Offset of `radar` in whole update periods. Negative offsets would
    /// deliver future data and are clamped to zero.
    pub fn lag_epochs(&self, radar: usize, dt: f64) -> u64 {
        let lag = (self.offset(radar) / dt).round();
        if lag < 0.0 {
            warn!("radar {radar}: negative clock offset clamped to zero lag");
            0
        } else {
            lag as u64
        }
    }
}

/// Recent outgoing messages of every radar, deep enough to serve the
/// largest clock lag.
#[derive(Clone, Debug)]
pub struct MessageBuffer {
    depth: usize,
    history: Vec<VecDeque<Message>>,
}

impl MessageBuffer {
    pub fn new(n_radars: usize, max_lag: u64) -> Self {
        Self {
            depth: max_lag as usize + 1,
            history: vec![VecDeque::new(); n_radars],
        }
    }

    pub fn push(&mut self, msg: Message) {
        let h = &mut self.history[msg.sender()];
        h.push_back(msg);
        while h.len() > self.depth {
            h.pop_front();
        }
    }

    pub fn get(&self, sender: usize, epoch: u64) -> Option<&Message> {
        self.history.get(sender)?.iter().rev().find(|m| m.epoch() == epoch)
    }
}

/// A message as it reaches a receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct Delivery {
    pub message: Message,
    /// Epochs between the content and the receiver's current epoch.
    pub lag: u64,
}

/// Inbox of every radar at `epoch`: from each neighbor `h`, the message it
/// produced `lag_h` epochs earlier, ordered by sender. Nothing arrives from a
/// sender whose lag reaches before epoch 0. With nonzero jitter, each
/// delivery is displaced coherently by `N(0, (speed * jitter)^2)` per axis.
pub fn deliver<R: Rng + ?Sized>(
    topology: &Topology,
    buffer: &MessageBuffer,
    clock: &ClockModel,
    epoch: u64,
    dt: f64,
    speed: f64,
    rng: &mut R,
) -> Vec<Vec<Delivery>> {
    let spread = speed * clock.jitter_std;
    (0..topology.n_radars())
        .map(|k| {
            topology
                .neighbors(k)
                .iter()
                .filter_map(|&h| {
                    let lag = clock.lag_epochs(h, dt);
                    let msg = buffer.get(h, epoch.checked_sub(lag)?)?;
                    let message = if spread > 0.0 {
                        let dx: f64 = rng.sample(StandardNormal);
                        let dy: f64 = rng.sample(StandardNormal);
                        msg.shifted(spread * dx, spread * dy)
                    } else {
                        msg.clone()
                    };
                    Some(Delivery { message, lag })
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sidelink::CoopMessage;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn msg(sender: usize, epoch: u64) -> Message {
        Message::Coop(CoopMessage {
            sender,
            epoch,
            points: vec![[sender as f64, epoch as f64, 0.0]],
        })
    }

    fn run(clock: &ClockModel, epochs: u64) -> Vec<Vec<Vec<Delivery>>> {
        let topo = Topology::fully_connected(3).unwrap();
        let max_lag = (0..3).map(|h| clock.lag_epochs(h, 0.01)).max().unwrap();
        let mut buf = MessageBuffer::new(3, max_lag);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        (0..epochs)
            .map(|t| {
                for h in 0..3 {
                    buf.push(msg(h, t));
                }
                deliver(&topo, &buf, clock, t, 0.01, 1.0, &mut rng)
            })
            .collect()
    }

    #[test]
    fn synchronized_delivers_current_epoch() {
        let out = run(&ClockModel::synchronized(), 4);
        for (t, inboxes) in out.iter().enumerate() {
            for (k, inbox) in inboxes.iter().enumerate() {
                assert_eq!(inbox.len(), 2);
                for d in inbox {
                    assert_ne!(d.message.sender(), k);
                    assert_eq!(d.message.epoch(), t as u64);
                    assert_eq!(d.message, msg(d.message.sender(), t as u64));
                }
            }
        }
    }

    #[test]
    fn one_period_offset_delivers_previous_epoch() {
        let clock = ClockModel {
            offsets: vec![0.0, 0.01, 0.0],
            jitter_std: 0.0,
        };
        let out = run(&clock, 3);
        // radar 1 is one period late: nothing at epoch 0, then t-1
        assert!(out[0][0].iter().all(|d| d.message.sender() != 1));
        for t in 1..3u64 {
            let d = out[t as usize][0].iter().find(|d| d.message.sender() == 1).unwrap();
            assert_eq!(d.message.epoch(), t - 1);
            assert_eq!(d.lag, 1);
        }
    }

    #[test]
    fn offsets_round_to_periods() {
        let clock = ClockModel {
            offsets: vec![0.004, 0.006, -0.02],
            jitter_std: 0.0,
        };
        assert_eq!(clock.lag_epochs(0, 0.01), 0);
        assert_eq!(clock.lag_epochs(1, 0.01), 1);
        assert_eq!(clock.lag_epochs(2, 0.01), 0);
        assert_eq!(clock.lag_epochs(7, 0.01), 0);
    }

    #[test]
    fn jitter_shifts_coherently() {
        let clock = ClockModel {
            offsets: vec![],
            jitter_std: 0.005,
        };
        let topo = Topology::fully_connected(2).unwrap();
        let mut buf = MessageBuffer::new(2, 0);
        buf.push(Message::Coop(CoopMessage {
            sender: 0,
            epoch: 0,
            points: vec![[1.0, 1.0, 0.5], [2.0, 3.0, 0.7]],
        }));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inbox = deliver(&topo, &buf, &clock, 0, 0.01, 1.2, &mut rng);
        let Message::Coop(m) = &inbox[1][0].message else {
            unreachable!()
        };
        let d0 = m.points[0][0] - 1.0;
        let d1 = m.points[1][0] - 2.0;
        assert!((d0 - d1).abs() < 1e-12);
        assert!(d0 != 0.0 && d0.abs() < 6.0 * 1.2 * 0.005);
        assert_eq!(m.points[0][2], 0.5);
    }

    #[test]
    fn buffer_keeps_only_needed_depth() {
        let mut buf = MessageBuffer::new(1, 1);
        for t in 0..5 {
            buf.push(msg(0, t));
        }
        assert!(buf.get(0, 4).is_some());
        assert!(buf.get(0, 3).is_some());
        assert!(buf.get(0, 2).is_none());
    }
}
