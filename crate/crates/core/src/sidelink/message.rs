use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::mixture::{GaussianComponent, GaussianMixture};
use crate::sensor::{Frame, PointCloud};
use crate::Point3;

/// Every transmitted number is a 64-bit float.
pub const BITS_PER_VALUE: u64 = 64;

/// `beta`, mean (3), covariance (9) and point count per component.
pub const FED_VALUES_PER_COMPONENT: usize = 14;

/// Largest integer a 64-bit float carries exactly.
const MAX_EXACT: f64 = 9_007_199_254_740_992.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Coop,
    Fed,
}

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Coop => "coop",
            MessageKind::Fed => "fed",
        }
    }
}

/// Preprocessed global-frame cloud of one radar.
#[derive(Clone, Debug, PartialEq)]
pub struct CoopMessage {
    pub sender: usize,
    pub epoch: u64,
    pub points: Vec<[f64; 3]>,
}

impl CoopMessage {
    pub fn value_count(&self) -> usize {
        3 * self.points.len()
    }

    pub fn payload_bits(&self) -> u64 {
        BITS_PER_VALUE * self.value_count() as u64
    }
}

/// Flattened local-posterior parameters:
/// `Q_k, M_k, (beta, mu[3], sigma[9], Q_km) * M_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FedMessage {
    pub sender: usize,
    pub epoch: u64,
    pub values: Vec<f64>,
}

impl FedMessage {
    pub fn value_count(&self) -> usize {
        self.values.len()
    }

    pub fn payload_bits(&self) -> u64 {
        BITS_PER_VALUE * self.value_count() as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Coop(CoopMessage),
    Fed(FedMessage),
}

impl Message {
    pub fn sender(&self) -> usize {
        match self {
            Message::Coop(m) => m.sender,
            Message::Fed(m) => m.sender,
        }
    }

    pub fn epoch(&self) -> u64 {
        match self {
            Message::Coop(m) => m.epoch,
            Message::Fed(m) => m.epoch,
        }
    }

    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Coop(_) => MessageKind::Coop,
            Message::Fed(_) => MessageKind::Fed,
        }
    }

    pub fn payload_bits(&self) -> u64 {
        match self {
            Message::Coop(m) => m.payload_bits(),
            Message::Fed(m) => m.payload_bits(),
        }
    }

    /// Payload as a flat value list, the form used on the wire.
    pub fn values(&self) -> Vec<f64> {
        match self {
            Message::Coop(m) => m.points.iter().flatten().copied().collect(),
            Message::Fed(m) => m.values.clone(),
        }
    }

    pub fn from_values(kind: MessageKind, sender: usize, epoch: u64, values: Vec<f64>) -> Result<Self> {
        Ok(match kind {
            MessageKind::Coop => {
                if !values.len().is_multiple_of(3) {
                    return Err(Error::Codec(format!(
                        "coop payload of {} values is not a list of 3D points",
                        values.len()
                    )));
                }
                Message::Coop(CoopMessage {
                    sender,
                    epoch,
                    points: values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
                })
            }
            MessageKind::Fed => {
                let msg = FedMessage { sender, epoch, values };
                decode_fed(&msg)?;
                Message::Fed(msg)
            }
        })
    }

    /// Shift every transmitted xy position by `(dx, dy)`.
    pub fn shifted(&self, dx: f64, dy: f64) -> Message {
        match self {
            Message::Coop(m) => Message::Coop(CoopMessage {
                points: m.points.iter().map(|p| [p[0] + dx, p[1] + dy, p[2]]).collect(),
                ..m.clone()
            }),
            Message::Fed(m) => {
                let mut values = m.values.clone();
                let n = (values.len().saturating_sub(2)) / FED_VALUES_PER_COMPONENT;
                for c in 0..n {
                    let base = 2 + c * FED_VALUES_PER_COMPONENT;
                    values[base + 1] += dx;
                    values[base + 2] += dy;
                }
                Message::Fed(FedMessage { values, ..m.clone() })
            }
        }
    }
}

pub fn encode_coop(cloud: &PointCloud) -> Result<CoopMessage> {
    cloud.expect_frame(Frame::Global)?;
    Ok(CoopMessage {
        sender: cloud.radar_id,
        epoch: cloud.epoch,
        points: cloud.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
    })
}

pub fn decode_coop(msg: &CoopMessage) -> PointCloud {
    PointCloud::new(
        Frame::Global,
        msg.points.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(),
        msg.epoch,
        msg.sender,
    )
}

fn count_value(n: u64) -> Result<f64> {
    let v = n as f64;
    if v >= MAX_EXACT {
        return Err(Error::Codec(format!("count {n} is not exactly representable")));
    }
    Ok(v)
}

fn value_count(v: f64, what: &str) -> Result<u64> {
    if v.fract() != 0.0 || !(0.0..MAX_EXACT).contains(&v) {
        return Err(Error::Codec(format!("{what} must be a non-negative integer, got {v}")));
    }
    Ok(v as u64)
}

pub fn encode_fed(mixture: &GaussianMixture, sender: usize, epoch: u64) -> Result<FedMessage> {
    mixture.validate()?;
    let mut values = Vec::with_capacity(2 + FED_VALUES_PER_COMPONENT * mixture.len());
    values.push(count_value(mixture.total_points)?);
    values.push(count_value(mixture.len() as u64)?);
    for c in &mixture.components {
        values.push(c.weight);
        values.extend_from_slice(&[c.mean.x, c.mean.y, c.mean.z]);
        // row-major; the matrix is symmetric so the order only matters for bit-exactness
        for r in 0..3 {
            for k in 0..3 {
                values.push(c.covariance[(r, k)]);
            }
        }
        values.push(count_value(c.point_count)?);
    }
    Ok(FedMessage { sender, epoch, values })
}

pub fn decode_fed(msg: &FedMessage) -> Result<GaussianMixture> {
    let v = &msg.values;
    if v.len() < 2 {
        return Err(Error::Codec(format!(
            "fed payload of {} values lacks its header",
            v.len()
        )));
    }
    let total_points = value_count(v[0], "Q_k")?;
    let m = value_count(v[1], "M_k")? as usize;
    let expected = m
        .checked_mul(FED_VALUES_PER_COMPONENT)
        .and_then(|x| x.checked_add(2))
        .ok_or_else(|| Error::Codec(format!("M_k = {m} overflows")))?;
    if v.len() != expected {
        return Err(Error::Codec(format!(
            "fed payload announces {m} components ({expected} values) but carries {}",
            v.len()
        )));
    }
    let components = v[2..]
        .chunks_exact(FED_VALUES_PER_COMPONENT)
        .map(|c| {
            Ok(GaussianComponent {
                weight: c[0],
                mean: Point3::new(c[1], c[2], c[3]),
                covariance: Matrix3::from_row_slice(&c[4..13]),
                point_count: value_count(c[13], "Q_km")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mixture = GaussianMixture {
        components,
        total_points,
    };
    mixture.validate()?;
    Ok(mixture)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn component(w: f64, x: f64, n: u64) -> GaussianComponent {
        GaussianComponent {
            weight: w,
            mean: Point3::new(x, 2.0, 1.1),
            covariance: Matrix3::new(0.04, 0.01, 0.0, 0.01, 0.05, 0.002, 0.0, 0.002, 0.2),
            point_count: n,
        }
    }

    fn three() -> GaussianMixture {
        GaussianMixture {
            components: vec![
                component(0.5, 1.0, 300),
                component(0.3, 2.0, 180),
                component(0.2, 3.0, 120),
            ],
            total_points: 600,
        }
    }

    #[test]
    fn coop_sizes() {
        let empty = PointCloud::new(Frame::Global, vec![], 0, 0);
        assert_eq!(encode_coop(&empty).unwrap().payload_bits(), 0);
        let one = PointCloud::new(Frame::Global, vec![Point3::new(1.0, 2.0, 3.0)], 0, 0);
        assert_eq!(encode_coop(&one).unwrap().payload_bits(), 192);
        let many = PointCloud::new(Frame::Global, vec![Point3::origin(); 625], 0, 0);
        assert_eq!(encode_coop(&many).unwrap().payload_bits(), 120_000);
    }

    #[test]
    fn coop_requires_global_frame() {
        let local = PointCloud::new(Frame::Local, vec![], 0, 0);
        assert!(encode_coop(&local).is_err());
    }

    #[test]
    fn fed_sizes() {
        let msg = encode_fed(&three(), 1, 5).unwrap();
        assert_eq!(msg.value_count(), 44);
        assert_eq!(msg.payload_bits(), 2816);
        let one = GaussianMixture {
            components: vec![component(1.0, 1.0, 10)],
            total_points: 10,
        };
        assert_eq!(encode_fed(&one, 0, 0).unwrap().value_count(), 16);
        let empty = encode_fed(&GaussianMixture::empty(), 0, 0).unwrap();
        assert_eq!(empty.values, vec![0.0, 0.0]);
        assert!(decode_fed(&empty).unwrap().is_empty());
    }

    #[test]
    fn fed_round_trip() {
        let m = three();
        let msg = encode_fed(&m, 2, 9).unwrap();
        assert_eq!(decode_fed(&msg).unwrap(), m);
    }

    #[test]
    fn fed_refuses_indefinite_covariance() {
        let mut m = three();
        m.components[1].covariance[(0, 0)] = -1.0;
        assert!(matches!(encode_fed(&m, 0, 0), Err(Error::InvalidMixture(_))));
    }

    #[test]
    fn fed_decode_checks_layout() {
        let mut msg = encode_fed(&three(), 0, 0).unwrap();
        msg.values.pop();
        assert!(decode_fed(&msg).is_err());
        let bad = FedMessage {
            sender: 0,
            epoch: 0,
            values: vec![1.5, 0.0],
        };
        assert!(decode_fed(&bad).is_err());
    }

    #[test]
    fn shift_moves_means_only() {
        let msg = Message::Fed(encode_fed(&three(), 0, 0).unwrap());
        let moved = decode_fed(match &msg.shifted(0.1, -0.2) {
            Message::Fed(f) => f,
            _ => unreachable!(),
        })
        .unwrap();
        for (a, b) in moved.components.iter().zip(&three().components) {
            assert_eq!(a.mean.x, b.mean.x + 0.1);
            assert_eq!(a.mean.y, b.mean.y - 0.2);
            assert_eq!(a.mean.z, b.mean.z);
            assert_eq!(a.covariance, b.covariance);
        }
    }

    proptest! {
        #[test]
        fn coop_round_trip_is_bit_exact(pts in prop::collection::vec(prop::array::uniform3(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO), 0..50)) {
            let cloud = PointCloud::new(Frame::Global, pts.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(), 4, 1);
            let back = decode_coop(&encode_coop(&cloud).unwrap());
            prop_assert_eq!(back.points.len(), cloud.points.len());
            for (a, b) in back.points.iter().zip(&cloud.points) {
                for i in 0..3 {
                    prop_assert_eq!(a[i].to_bits(), b[i].to_bits());
                }
            }
        }

        #[test]
        fn fed_round_trip_is_bit_exact(ws in prop::collection::vec(0.01f64..1.0, 0..6), x in -10.0f64..10.0, n in 0u64..1_000_000) {
            let total: f64 = ws.iter().sum();
            let mut comps: Vec<GaussianComponent> = ws.iter().map(|w| component(w / total, x, n)).collect();
            if let Some(last) = comps.last_mut() {
                let head: f64 = ws[..ws.len() - 1].iter().map(|w| w / total).sum();
                last.weight = 1.0 - head;
            }
            let m = GaussianMixture { components: comps, total_points: n * ws.len() as u64 };
            let msg = encode_fed(&m, 0, 0).unwrap();
            prop_assert_eq!(msg.value_count(), 2 + 14 * ws.len());
            let back = encode_fed(&decode_fed(&msg).unwrap(), 0, 0).unwrap();
            let a: Vec<u64> = msg.values.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
