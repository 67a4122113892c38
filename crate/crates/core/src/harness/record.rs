use crate::Point2;

/// Ground truth of one target at one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthState {
    pub id: u32,
    pub position: Point2,
    /// Nearest landmark on the target's own path.
    pub landmark: String,
}

/// What one radar concluded at one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarEpoch {
    pub radar: usize,
    /// MAP estimates in descending posterior order.
    pub estimates: Vec<Point2>,
    /// Estimate assigned to each ground-truth target (same order as the
    /// epoch's `truth`), present only when the epoch is resolved.
    pub assigned: Vec<Option<Point2>>,
    /// At least as many estimates as live targets.
    pub resolved: bool,
    pub raw_points: usize,
    /// Points surviving preprocessing (`Q_k`).
    pub cloud_points: usize,
    /// Components of the mixture behind this radar's posterior.
    pub components: usize,
    /// Payload bits this radar broadcast during the epoch.
    pub bits_sent: u64,
    /// `D_KL(global || federated)`.
    pub kl_fed: Option<f64>,
    /// `D_KL(global || local)`.
    pub kl_local: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub truth: Vec<TruthState>,
    pub radars: Vec<RadarEpoch>,
}

impl EpochRecord {
    /// Landmarks of all targets joined with `+`, e.g. `C+I`.
    pub fn position_key(&self) -> String {
        self.truth
            .iter()
            .map(|t| t.landmark.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }
}
