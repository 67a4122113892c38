//! Per-radar observation model and point-cloud preprocessing.
//!
//! A radar sees the scene in its own frame (x along boresight, y to the
//! left, z up). [`observe`] censors true points by field of view, range and
//! a detection model with occlusion, adds isotropic noise and appends
//! uniformly scattered outliers. [`preprocess`] brings the cloud into the
//! global frame and strips density outliers with [`dbscan`].

mod dbscan;

pub use dbscan::{dbscan, ClusterResult};

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Scene;
use crate::{Point2, Point3};

/// Radar placement in the global frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadarPose {
    pub position: Point3,
    yaw: f64,
}

impl RadarPose {
    pub fn new(position: Point3, yaw: f64) -> Self {
        Self {
            position,
            yaw: normalize_angle(yaw),
        }
    }

    /// Boresight azimuth in the global frame, in (-pi, pi].
    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn local_to_global(&self, p: &Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        Point3::new(
            c * p.x - s * p.y + self.position.x,
            s * p.x + c * p.y + self.position.y,
            p.z + self.position.z,
        )
    }

    pub fn global_to_local(&self, p: &Point3) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        let d = p - self.position;
        Point3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }
}

pub(crate) fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarModel {
    /// Half-angle of the azimuth field of view, radians.
    pub fov_azimuth: f64,
    pub max_range: f64,
    pub range_resolution: f64,
    /// Radians.
    pub azimuth_resolution: f64,
    pub noise_sigma: f64,
    /// Poisson mean of outliers per frame.
    pub outlier_rate: f64,
    /// Range below which every in-view point is detected.
    pub detection_range_ref: f64,
    /// Lateral distance from a nearer target's center that casts a shadow.
    pub occlusion_width: f64,
    /// Detection probability multiplier inside a shadow.
    pub occlusion_attenuation: f64,
    /// Outliers are drawn with local z uniform in `[-outlier_height, outlier_height]`.
    pub outlier_height: f64,
}

impl Default for RadarModel {
    fn default() -> Self {
        Self {
            fov_azimuth: 60f64.to_radians(),
            max_range: 10.0,
            range_resolution: 0.042,
            azimuth_resolution: 25f64.to_radians(),
            noise_sigma: 0.05,
            outlier_rate: 5.0,
            detection_range_ref: 4.0,
            occlusion_width: 0.3,
            occlusion_attenuation: 0.1,
            outlier_height: 1.0,
        }
    }
}

impl RadarModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fov_azimuth", self.fov_azimuth),
            ("max_range", self.max_range),
            ("range_resolution", self.range_resolution),
            ("azimuth_resolution", self.azimuth_resolution),
            ("detection_range_ref", self.detection_range_ref),
            ("occlusion_width", self.occlusion_width),
            ("outlier_height", self.outlier_height),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("radar model: {name} must be > 0")));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::config("radar model: noise_sigma must be >= 0"));
        }
        if !(self.outlier_rate.is_finite() && self.outlier_rate >= 0.0) {
            return Err(Error::config("radar model: outlier_rate must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.occlusion_attenuation) {
            return Err(Error::config("radar model: occlusion_attenuation must be in [0, 1]"));
        }
        Ok(())
    }

    /// Per-point detection probability ignoring occlusion.
    pub fn detection_probability(&self, range: f64) -> f64 {
        if range <= 0.0 {
            1.0
        } else {
            (self.detection_range_ref / range).powi(2).min(1.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Local,
    Global,
}

impl Frame {
    pub fn name(self) -> &'static str {
        match self {
            Frame::Local => "radar-local",
            Frame::Global => "global",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub frame: Frame,
    pub points: Vec<Point3>,
    pub epoch: u64,
    pub radar_id: usize,
}

impl PointCloud {
    pub fn new(frame: Frame, points: Vec<Point3>, epoch: u64, radar_id: usize) -> Self {
        Self {
            frame,
            points,
            epoch,
            radar_id,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn expect_frame(&self, frame: Frame) -> Result<()> {
        if self.frame == frame {
            Ok(())
        } else {
            Err(Error::FrameMismatch {
                expected: frame.name(),
                found: self.frame.name(),
            })
        }
    }
}

/// Ground-truth provenance of an observed point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Target(u32),
    Outlier,
}

/// [`observe`] that also returns where every point came from.
pub fn observe_tagged<R: Rng + ?Sized>(
    scene: &Scene,
    radar_id: usize,
    pose: &RadarPose,
    model: &RadarModel,
    rng: &mut R,
) -> (PointCloud, Vec<Origin>) {
    let radar_xy = Point2::new(pose.position.x, pose.position.y);
    let centers: Vec<(u32, Point2, f64)> = scene
        .targets
        .iter()
        .map(|t| (t.id, t.center, (t.center - radar_xy).norm()))
        .collect();

    let mut points = Vec::new();
    let mut origins = Vec::new();
    for sp in &scene.points {
        // Draw every random number up front so the stream does not depend
        // on which points get censored.
        let u: f64 = rng.random();
        let n: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];

        let local = pose.global_to_local(&sp.position);
        let horizontal = local.x.hypot(local.y);
        let azimuth = local.y.atan2(local.x);
        if azimuth.abs() > model.fov_azimuth || horizontal > model.max_range {
            continue;
        }
        let range = local.coords.norm();
        let mut p_detect = model.detection_probability(range);
        let xy = Point2::new(sp.position.x, sp.position.y);
        for &(id, c, c_range) in &centers {
            if id != sp.target_id
                && c_range < horizontal
                && segment_distance(&radar_xy, &xy, &c) < model.occlusion_width
            {
                p_detect *= model.occlusion_attenuation;
            }
        }
        if u >= p_detect {
            continue;
        }
        let s = model.noise_sigma;
        points.push(Point3::new(local.x + s * n[0], local.y + s * n[1], local.z + s * n[2]));
        origins.push(Origin::Target(sp.target_id));
    }

    if model.outlier_rate > 0.0 {
        let count = Poisson::new(model.outlier_rate)
            .expect("validated outlier rate")
            .sample(rng) as usize;
        for _ in 0..count {
            let az = rng.random_range(-model.fov_azimuth..=model.fov_azimuth);
            let r = model.max_range * rng.random::<f64>().sqrt();
            let z = rng.random_range(-model.outlier_height..=model.outlier_height);
            points.push(Point3::new(r * az.cos(), r * az.sin(), z));
            origins.push(Origin::Outlier);
        }
    }

    (PointCloud::new(Frame::Local, points, scene.epoch, radar_id), origins)
}

/// Raw radar-local point cloud for one frame.
pub fn observe<R: Rng + ?Sized>(
    scene: &Scene,
    radar_id: usize,
    pose: &RadarPose,
    model: &RadarModel,
    rng: &mut R,
) -> PointCloud {
    observe_tagged(scene, radar_id, pose, model, rng).0
}

fn segment_distance(a: &Point2, b: &Point2, p: &Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

pub fn to_global_frame(cloud: &PointCloud, pose: &RadarPose) -> Result<PointCloud> {
    cloud.expect_frame(Frame::Local)?;
    let points = cloud.points.iter().map(|p| pose.local_to_global(p)).collect();
    Ok(PointCloud::new(Frame::Global, points, cloud.epoch, cloud.radar_id))
}

pub fn to_local_frame(cloud: &PointCloud, pose: &RadarPose) -> Result<PointCloud> {
    cloud.expect_frame(Frame::Global)?;
    let points = cloud.points.iter().map(|p| pose.global_to_local(p)).collect();
    Ok(PointCloud::new(Frame::Local, points, cloud.epoch, cloud.radar_id))
}

/// Output of [`preprocess`].
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    /// Surviving points in the global frame.
    pub cloud: PointCloud,
    /// Cluster labels aligned with `cloud.points`; contains no outliers.
    pub clusters: ClusterResult,
    /// Indices into the raw cloud that were dropped as outliers.
    pub removed: Vec<usize>,
}

pub fn preprocess(cloud: &PointCloud, pose: &RadarPose, eps: f64, min_pts: usize) -> Result<Preprocessed> {
    let global = to_global_frame(cloud, pose)?;
    let full = dbscan(&global.points, eps, min_pts);
    let mut kept = Vec::with_capacity(global.len());
    let mut labels = Vec::with_capacity(global.len());
    let mut removed = Vec::new();
    for (i, (p, label)) in global.points.iter().zip(&full.labels).enumerate() {
        match label {
            Some(c) => {
                kept.push(*p);
                labels.push(Some(*c));
            }
            None => removed.push(i),
        }
    }
    Ok(Preprocessed {
        cloud: PointCloud::new(Frame::Global, kept, cloud.epoch, cloud.radar_id),
        clusters: ClusterResult {
            labels,
            n_clusters: full.n_clusters,
        },
        removed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ScenePoint, TargetState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet_model() -> RadarModel {
        RadarModel {
            noise_sigma: 0.0,
            outlier_rate: 0.0,
            detection_range_ref: 100.0,
            ..RadarModel::default()
        }
    }

    fn scene_of(points: &[(u32, Point3)], centers: &[(u32, Point2)]) -> Scene {
        Scene {
            epoch: 4,
            points: points
                .iter()
                .map(|&(target_id, position)| ScenePoint { target_id, position })
                .collect(),
            targets: centers
                .iter()
                .map(|&(id, center)| TargetState {
                    id,
                    progress: 0.0,
                    center,
                })
                .collect(),
        }
    }

    #[test]
    fn yaw_is_normalized() {
        let pose = RadarPose::new(Point3::origin(), 3.0 * PI);
        assert!((pose.yaw() - PI).abs() < 1e-12);
        let pose = RadarPose::new(Point3::origin(), -PI);
        assert!((pose.yaw() - PI).abs() < 1e-12);
    }

    #[test]
    fn noiseless_boresight_point_is_observed_exactly() {
        let pose = RadarPose::new(Point3::origin(), 0.0);
        let scene = scene_of(&[(1, Point3::new(2.0, 0.0, 0.0))], &[(1, Point2::new(2.0, 0.0))]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cloud = observe(&scene, 0, &pose, &quiet_model(), &mut rng);
        assert_eq!(cloud.frame, Frame::Local);
        assert_eq!(cloud.points, vec![Point3::new(2.0, 0.0, 0.0)]);
    }

    #[test]
    fn point_outside_fov_is_censored() {
        let pose = RadarPose::new(Point3::origin(), 0.0);
        let scene = scene_of(&[(1, Point3::new(0.0, 2.0, 0.0))], &[(1, Point2::new(0.0, 2.0))]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(observe(&scene, 0, &pose, &quiet_model(), &mut rng).is_empty());
    }

    #[test]
    fn outlier_count_matches_poisson_mean() {
        let pose = RadarPose::new(Point3::origin(), 0.0);
        let model = RadarModel {
            outlier_rate: 5.0,
            ..RadarModel::default()
        };
        let scene = scene_of(&[], &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let frames = 10_000;
        let total: usize = (0..frames)
            .map(|_| observe(&scene, 0, &pose, &model, &mut rng).len())
            .sum();
        let mean = total as f64 / frames as f64;
        assert!((mean - 5.0).abs() < 0.15, "mean outliers {mean}");
    }

    #[test]
    fn outliers_stay_inside_fov_sector() {
        let pose = RadarPose::new(Point3::origin(), 0.0);
        let model = RadarModel {
            outlier_rate: 50.0,
            ..RadarModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cloud = observe(&scene_of(&[], &[]), 0, &pose, &model, &mut rng);
        for p in &cloud.points {
            assert!(p.y.atan2(p.x).abs() <= model.fov_azimuth + 1e-12);
            assert!(p.x.hypot(p.y) <= model.max_range);
        }
    }

    #[test]
    fn occluder_attenuates_points_behind_it() {
        let pose = RadarPose::new(Point3::origin(), 0.0);
        let model = RadarModel {
            occlusion_attenuation: 0.0,
            ..quiet_model()
        };
        let scene = scene_of(
            &[(1, Point3::new(2.0, 0.0, 1.0)), (2, Point3::new(4.0, 0.05, 1.0))],
            &[(1, Point2::new(2.0, 0.0)), (2, Point2::new(4.0, 0.0))],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (cloud, origins) = observe_tagged(&scene, 0, &pose, &model, &mut rng);
        assert_eq!(cloud.len(), 1);
        assert_eq!(origins, vec![Origin::Target(1)]);
    }

    #[test]
    fn global_frame_examples() {
        let p = Point3::new(0.3, -1.2, 0.7);
        let identity = RadarPose::new(Point3::origin(), 0.0);
        let local = PointCloud::new(Frame::Local, vec![p], 0, 0);
        assert_eq!(to_global_frame(&local, &identity).unwrap().points, vec![p]);

        let pose = RadarPose::new(Point3::new(1.0, 0.0, 0.0), PI / 2.0);
        let local = PointCloud::new(Frame::Local, vec![Point3::new(2.0, 0.0, 0.0)], 0, 0);
        let g = to_global_frame(&local, &pose).unwrap();
        assert_eq!(g.frame, Frame::Global);
        assert!((g.points[0] - Point3::new(1.0, 2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn wrong_frame_is_rejected() {
        let pose = RadarPose::new(Point3::origin(), 0.0);
        let global = PointCloud::new(Frame::Global, vec![], 0, 0);
        assert!(matches!(
            to_global_frame(&global, &pose),
            Err(Error::FrameMismatch { .. })
        ));
        assert!(preprocess(&global, &pose, 0.3, 5).is_err());
    }

    #[test]
    fn preprocess_keeps_clean_cluster() {
        let pose = RadarPose::new(Point3::new(0.5, -0.5, 1.0), 0.4);
        let pts: Vec<Point3> = (0..30)
            .map(|i| Point3::new(3.0 + 0.01 * (i % 5) as f64, 0.01 * (i / 5) as f64, 0.0))
            .collect();
        let local = PointCloud::new(Frame::Local, pts, 0, 0);
        let out = preprocess(&local, &pose, 0.3, 5).unwrap();
        assert_eq!(out.cloud, to_global_frame(&local, &pose).unwrap());
        assert!(out.removed.is_empty());
        assert_eq!(out.clusters.n_clusters, 1);
    }

    #[test]
    fn preprocess_drops_isolated_point() {
        let pose = RadarPose::new(Point3::origin(), 0.0);
        let local = PointCloud::new(Frame::Local, vec![Point3::new(1.0, 1.0, 1.0)], 0, 0);
        let out = preprocess(&local, &pose, 0.3, 5).unwrap();
        assert!(out.cloud.is_empty());
        assert_eq!(out.removed, vec![0]);
    }

    #[test]
    fn preprocess_removes_injected_outliers() {
        let pose = RadarPose::new(Point3::new(0.0, 0.0, 1.0), 0.0);
        let model = RadarModel {
            noise_sigma: 0.02,
            outlier_rate: 0.0,
            detection_range_ref: 100.0,
            ..RadarModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let body: Vec<(u32, Point3)> = (0..200)
            .map(|_| {
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                let dz: f64 = rng.sample(StandardNormal);
                (1, Point3::new(3.0 + 0.1 * dx, 0.1 * dy, 1.0 + 0.2 * dz))
            })
            .collect();
        let scene = scene_of(&body, &[(1, Point2::new(3.0, 0.0))]);
        let (mut cloud, mut origins) = observe_tagged(&scene, 0, &pose, &model, &mut rng);
        assert_eq!(cloud.len(), 200);
        for far in [
            Point3::new(8.0, 3.0, 0.5),
            Point3::new(7.0, -3.5, -0.5),
            Point3::new(9.0, 0.0, 0.9),
            Point3::new(5.5, 2.5, -0.9),
            Point3::new(6.0, -1.5, 0.0),
        ] {
            cloud.points.push(far);
            origins.push(Origin::Outlier);
        }
        let out = preprocess(&cloud, &pose, 0.3, 5).unwrap();
        assert_eq!(out.cloud.len(), 200);
        let oracle: Vec<usize> = origins
            .iter()
            .enumerate()
            .filter(|(_, o)| **o == Origin::Outlier)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(out.removed, oracle);
    }

    proptest::proptest! {
        #[test]
        fn round_trip_frames(x in -5.0f64..5.0, y in -5.0f64..5.0, z in -2.0f64..2.0,
                             px in -3.0f64..3.0, py in -3.0f64..3.0, yaw in -7.0f64..7.0) {
            let pose = RadarPose::new(Point3::new(px, py, 1.0), yaw);
            let g = PointCloud::new(Frame::Global, vec![Point3::new(x, y, z)], 0, 0);
            let back = to_global_frame(&to_local_frame(&g, &pose).unwrap(), &pose).unwrap();
            proptest::prop_assert!((back.points[0] - g.points[0]).norm() < 1e-12);
        }

        #[test]
        fn censoring_is_monotone(seed in 0u64..200, shrink in 0.1f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<(u32, Point3)> = (0..80)
                .map(|i| (i % 2, Point3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), 1.0)))
                .collect();
            let scene = scene_of(&pts, &[(0, Point2::new(2.0, 0.5)), (1, Point2::new(3.0, -1.0))]);
            let pose = RadarPose::new(Point3::origin(), 0.2);
            let wide = RadarModel { max_range: 8.0, ..RadarModel::default() };
            let narrow = RadarModel {
                fov_azimuth: wide.fov_azimuth * shrink,
                max_range: wide.max_range * shrink,
                ..wide.clone()
            };
            let detected = |m: &RadarModel| {
                let mut r = ChaCha8Rng::seed_from_u64(seed + 1000);
                observe_tagged(&scene, 0, &pose, m, &mut r).1.iter().filter(|o| **o != Origin::Outlier).count()
            };
            proptest::prop_assert!(detected(&narrow) <= detected(&wide));
        }
    }
}
