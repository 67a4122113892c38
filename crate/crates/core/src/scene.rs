//! Ground-truth scene process: targets walking piecewise-linear landmark
//! trajectories, each represented per epoch by a scatter of true points.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Point2, Point3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub label: String,
    pub position: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: u32,
    pub waypoints: Vec<String>,
    /// Walking speed, m/s.
    pub speed: f64,
    /// Per-axis standard deviation of the body point scatter, meters.
    pub body_extent: [f64; 3],
    pub points_per_frame: usize,
    /// Height of the scatter center above the floor, meters.
    #[serde(default = "default_center_height")]
    pub center_height: f64,
}

fn default_center_height() -> f64 {
    1.0
}

impl TargetSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(Error::config(format!("target {}: speed must be >= 0", self.id)));
        }
        if self.body_extent.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::config(format!(
                "target {}: body_extent components must be > 0",
                self.id
            )));
        }
        if self.points_per_frame < 1 {
            return Err(Error::config(format!(
                "target {}: points_per_frame must be >= 1",
                self.id
            )));
        }
        if self.waypoints.is_empty() {
            return Err(Error::config(format!("target {}: no waypoints", self.id)));
        }
        Ok(())
    }
}

/// Landmark lookup table with unique labels.
#[derive(Clone, Debug, Default)]
pub struct LandmarkMap {
    by_label: HashMap<String, Point2>,
}

impl LandmarkMap {
    pub fn new(landmarks: &[Landmark]) -> Result<Self> {
        let mut by_label = HashMap::with_capacity(landmarks.len());
        for lm in landmarks {
            if !lm.position.iter().all(|c| c.is_finite()) {
                return Err(Error::config(format!("landmark {}: non-finite position", lm.label)));
            }
            let p = Point2::new(lm.position[0], lm.position[1]);
            if by_label.insert(lm.label.clone(), p).is_some() {
                return Err(Error::config(format!("duplicate landmark label {}", lm.label)));
            }
        }
        Ok(Self { by_label })
    }

    pub fn get(&self, label: &str) -> Result<Point2> {
        self.by_label
            .get(label)
            .copied()
            .ok_or_else(|| Error::config(format!("unknown landmark label {label:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Point2)> {
        self.by_label.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn trajectory(&self, waypoints: &[String]) -> Result<Trajectory> {
        let vertices = waypoints.iter().map(|w| self.get(w)).collect::<Result<Vec<_>>>()?;
        Ok(Trajectory::new(vertices, waypoints.to_vec()))
    }
}

/// Polyline parameterized by arc length.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    vertices: Vec<Point2>,
    labels: Vec<String>,
    cumulative: Vec<f64>,
}

impl Trajectory {
    pub fn new(vertices: Vec<Point2>, labels: Vec<String>) -> Self {
        assert!(!vertices.is_empty(), "trajectory needs at least one vertex");
        let mut cumulative = Vec::with_capacity(vertices.len());
        let mut total = 0.0;
        cumulative.push(0.0);
        for w in vertices.windows(2) {
            total += (w[1] - w[0]).norm();
            cumulative.push(total);
        }
        Self {
            vertices,
            labels,
            cumulative,
        }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Position after travelling `s` meters from the start, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Point2 {
        if s <= 0.0 || self.vertices.len() == 1 {
            return self.vertices[0];
        }
        if s >= self.length() {
            return *self.vertices.last().unwrap();
        }
        // first segment whose end lies beyond s
        let seg = self.cumulative.partition_point(|&c| c <= s) - 1;
        let seg_len = self.cumulative[seg + 1] - self.cumulative[seg];
        if seg_len == 0.0 {
            return self.vertices[seg];
        }
        let frac = (s - self.cumulative[seg]) / seg_len;
        self.vertices[seg] + (self.vertices[seg + 1] - self.vertices[seg]) * frac
    }
}

/// Centers visited at constant `speed`, sampled every `dt` seconds. The
/// final landmark is always the last sample.
pub fn landmark_path(landmarks: &LandmarkMap, waypoints: &[String], speed: f64, dt: f64) -> Result<Vec<Point2>> {
    if !(dt > 0.0) {
        return Err(Error::config("dt must be > 0"));
    }
    if waypoints.is_empty() {
        return Err(Error::config("path needs at least one waypoint"));
    }
    let traj = landmarks.trajectory(waypoints)?;
    if traj.vertices.len() == 1 {
        return Ok(vec![traj.vertices[0]]);
    }
    if !(speed > 0.0) {
        return Err(Error::config("speed must be > 0"));
    }
    let step = speed * dt;
    let total = traj.length();
    let n_full = (total / step + 1e-9).floor() as usize;
    let mut out: Vec<Point2> = (0..=n_full).map(|i| traj.point_at(i as f64 * step)).collect();
    if (n_full as f64) * step < total - 1e-9 {
        out.push(traj.point_at(total));
    }
    // snap the endpoint exactly
    *out.last_mut().unwrap() = *traj.vertices.last().unwrap();
    Ok(out)
}

/// A target with its waypoint labels resolved against the landmark map.
#[derive(Clone, Debug)]
pub struct Target {
    pub spec: TargetSpec,
    pub path: Trajectory,
}

impl Target {
    pub fn new(spec: TargetSpec, landmarks: &LandmarkMap) -> Result<Self> {
        spec.validate()?;
        let path = landmarks.trajectory(&spec.waypoints)?;
        Ok(Self { spec, path })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetState {
    pub id: u32,
    /// Arc length travelled along the trajectory, meters.
    pub progress: f64,
    pub center: Point2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenePoint {
    pub target_id: u32,
    pub position: Point3,
}

/// Ground truth at one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub epoch: u64,
    pub points: Vec<ScenePoint>,
    pub targets: Vec<TargetState>,
}

impl Scene {
    /// Epoch-0 scene: every target at its first waypoint.
    pub fn initial<R: Rng + ?Sized>(targets: &[Target], rng: &mut R) -> Self {
        let states: Vec<TargetState> = targets
            .iter()
            .map(|t| TargetState {
                id: t.spec.id,
                progress: 0.0,
                center: t.path.point_at(0.0),
            })
            .collect();
        let points = sample_points(targets, &states, rng);
        Scene {
            epoch: 0,
            points,
            targets: states,
        }
    }

    pub fn centers(&self) -> Vec<(u32, Point2)> {
        self.targets.iter().map(|t| (t.id, t.center)).collect()
    }
}

/// One Markov step: move every target by `speed * dt` along its path and
/// resample its body points. Only `scene` (not earlier epochs) is read.
pub fn advance_scene<R: Rng + ?Sized>(scene: &Scene, targets: &[Target], dt: f64, rng: &mut R) -> Scene {
    debug_assert!(dt > 0.0);
    let states: Vec<TargetState> = scene
        .targets
        .iter()
        .map(|st| {
            let target = targets
                .iter()
                .find(|t| t.spec.id == st.id)
                .expect("scene state refers to unknown target");
            let progress = (st.progress + target.spec.speed * dt).min(target.path.length());
            TargetState {
                id: st.id,
                progress,
                center: target.path.point_at(progress),
            }
        })
        .collect();
    let points = sample_points(targets, &states, rng);
    Scene {
        epoch: scene.epoch + 1,
        points,
        targets: states,
    }
}

fn sample_points<R: Rng + ?Sized>(targets: &[Target], states: &[TargetState], rng: &mut R) -> Vec<ScenePoint> {
    let mut points = Vec::with_capacity(targets.iter().map(|t| t.spec.points_per_frame).sum());
    for st in states {
        let spec = &targets.iter().find(|t| t.spec.id == st.id).unwrap().spec;
        let [ex, ey, ez] = spec.body_extent;
        for _ in 0..spec.points_per_frame {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            let dz: f64 = rng.sample(StandardNormal);
            points.push(ScenePoint {
                target_id: st.id,
                position: Point3::new(
                    st.center.x + ex * dx,
                    st.center.y + ey * dy,
                    spec.center_height + ez * dz,
                ),
            });
        }
    }
    points
}
