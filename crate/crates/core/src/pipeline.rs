//! End-to-end processing of an RGB-D stream with detections.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::{debug, warn};
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::evaluation::Trajectory;
use crate::geometry::{Intrinsics, PoseSE3};
use crate::image::DepthImage;
use crate::io::{normalize_key, DetectionSet, FrameBundle, KeyValues, TumSequence};
use crate::mapping::{fuse_frame, voxel_downsample, PointCloud};
use crate::odometry::{estimate_pose_frames, OdometryConfig, OdometryFrame};
use crate::separation::DualBoxFilter;
use crate::tracking::{center_point, mean_depth, to_world, AssociationConfig, Track, Tracker};

/// Fused maps are compacted once they grow past this many points.
const MAP_COMPACT_THRESHOLD: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub filter: DualBoxFilter,
    /// When false, odometry and fusion see the raw depth. Human parts are
    /// still separated so tracking keeps working.
    pub filter_enabled: bool,
    pub association: AssociationConfig,
    pub odometry: OdometryConfig,
    pub voxel: f64,
    pub fuse: bool,
    pub fuse_stride: usize,
    pub depth_scale: Option<f64>,
    /// Largest gap between a frame and the detections assigned to it, seconds.
    pub detection_max_dt: f64,
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            filter: DualBoxFilter::default(),
            filter_enabled: true,
            association: AssociationConfig::default(),
            odometry: OdometryConfig::default(),
            voxel: 0.02,
            fuse: true,
            fuse_stride: 4,
            depth_scale: None,
            detection_max_dt: 0.02,
            fx: None,
            fy: None,
            cx: None,
            cy: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("invalid value '{value}' for {key}")))
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "lambda",
        "bin-width",
        "bg-margin",
        "human-margin",
        "confidence",
        "filter",
        "gate",
        "max-misses",
        "pyramid-levels",
        "max-iterations",
        "convergence-eps",
        "huber-delta",
        "discontinuity",
        "max-correspondence-distance",
        "finest-stride",
        "normal-radius",
        "min-valid-pixels",
        "voxel",
        "fuse",
        "fuse-stride",
        "depth-scale",
        "detection-max-dt",
        "fx",
        "fy",
        "cx",
        "cy",
    ];

    /// Sets one option by name. `_` and `-` are interchangeable in names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let k = key.as_str();
        match k {
            "lambda" => self.filter.lambda = parse_value(k, value)?,
            "bin-width" => self.filter.bin_width = parse_value(k, value)?,
            "bg-margin" => self.filter.bg_margin = parse_value(k, value)?,
            "human-margin" => self.filter.human_margin = parse_value(k, value)?,
            "confidence" => self.filter.confidence = parse_value(k, value)?,
            "filter" => self.filter_enabled = parse_value(k, value)?,
            "gate" => self.association.gate = parse_value(k, value)?,
            "max-misses" => self.association.max_misses = parse_value(k, value)?,
            "pyramid-levels" => self.odometry.pyramid_levels = parse_value(k, value)?,
            "max-iterations" => self.odometry.max_iterations = parse_value(k, value)?,
            "convergence-eps" => self.odometry.convergence_eps = parse_value(k, value)?,
            "huber-delta" => self.odometry.huber_delta = parse_value(k, value)?,
            "discontinuity" => self.odometry.discontinuity = parse_value(k, value)?,
            "max-correspondence-distance" => self.odometry.max_correspondence_distance = parse_value(k, value)?,
            "finest-stride" => self.odometry.finest_stride = parse_value(k, value)?,
            "normal-radius" => self.odometry.normal_radius = parse_value(k, value)?,
            "min-valid-pixels" => self.odometry.min_valid_pixels = parse_value(k, value)?,
            "voxel" => self.voxel = parse_value(k, value)?,
            "fuse" => self.fuse = parse_value(k, value)?,
            "fuse-stride" => self.fuse_stride = parse_value(k, value)?,
            "depth-scale" => self.depth_scale = Some(parse_value(k, value)?),
            "detection-max-dt" => self.detection_max_dt = parse_value(k, value)?,
            "fx" => self.fx = Some(parse_value(k, value)?),
            "fy" => self.fy = Some(parse_value(k, value)?),
            "cx" => self.cx = Some(parse_value(k, value)?),
            "cy" => self.cy = Some(parse_value(k, value)?),
            _ => return Err(Error::InvalidInput(format!("unknown option '{key}'"))),
        }
        Ok(())
    }

    /// Applies every entry of a `key = value` file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let kv = KeyValues::read(path)?;
        for key in kv.keys() {
            let value = kv.get_str(key).unwrap_or_default();
            self.set(key, value)
                .map_err(|e| Error::parse(path, kv.line_of(key), e.to_string()))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.odometry.validate()?;
        if !(self.association.gate > 0.0) {
            return Err(Error::InvalidInput(format!("gate {} must be positive", self.association.gate)));
        }
        if !(self.voxel > 0.0) || self.fuse_stride == 0 || !(self.detection_max_dt >= 0.0) {
            return Err(Error::InvalidInput("voxel, fuse-stride and detection-max-dt must be positive".into()));
        }
        if let Some(s) = self.depth_scale {
            if !(s > 0.0) {
                return Err(Error::InvalidInput(format!("depth-scale {s} must be positive")));
            }
        }
        Ok(())
    }

    /// Intrinsics from the config, falling back to `recorded` per field.
    pub fn intrinsics(&self, recorded: Option<Intrinsics>, width: usize, height: usize) -> Result<Intrinsics> {
        let pick = |mine: Option<f64>, theirs: Option<f64>, name: &str| {
            mine.or(theirs)
                .ok_or_else(|| Error::InvalidInput(format!("no camera intrinsics: {name} missing")))
        };
        Intrinsics::new(
            pick(self.fx, recorded.map(|k| k.fx), "fx")?,
            pick(self.fy, recorded.map(|k| k.fy), "fy")?,
            pick(self.cx, recorded.map(|k| k.cx), "cx")?,
            pick(self.cy, recorded.map(|k| k.cy), "cy")?,
            width,
            height,
        )
    }
}

/// Wall-clock milliseconds per stage for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTiming {
    pub timestamp: f64,
    pub filter_ms: f64,
    pub odometry_ms: f64,
    pub tracking_ms: f64,
    pub fusion_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub pose: PoseSE3,
    /// False when odometry failed and the previous pose was kept.
    pub odometry_ok: bool,
    /// World-space human centers fed to the tracker.
    pub observations: Vec<Vector3<f64>>,
    pub timing: FrameTiming,
}

/// Stateful per-frame processor.
pub struct Pipeline {
    cfg: PipelineConfig,
    k: Intrinsics,
    tracker: Tracker,
    prev: Option<OdometryFrame>,
    pose: PoseSE3,
    velocity: PoseSE3,
    trajectory: Trajectory,
    map: PointCloud,
    timings: Vec<FrameTiming>,
    failures: Vec<f64>,
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, k: Intrinsics) -> Result<Self> {
        cfg.validate()?;
        k.validate()?;
        Ok(Pipeline {
            tracker: Tracker::new(cfg.association)?,
            cfg,
            k,
            prev: None,
            pose: PoseSE3::identity(),
            velocity: PoseSE3::identity(),
            trajectory: Trajectory::new(),
            map: PointCloud::default(),
            timings: Vec::new(),
            failures: Vec::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn process(&mut self, frame: &FrameBundle) -> Result<FrameResult> {
        let depth = &frame.depth;
        if depth.width() != self.k.width || depth.height() != self.k.height {
            return Err(Error::InvalidInput(format!(
                "frame at {} is {}x{}, expected {}x{}",
                frame.timestamp,
                depth.width(),
                depth.height(),
                self.k.width,
                self.k.height
            )));
        }

        let start = Instant::now();
        let sep = self.cfg.filter.apply(depth, &frame.detections)?;
        let filter_ms = ms(start);
        let odo_input: &DepthImage = if self.cfg.filter_enabled { &sep.background } else { depth };

        let start = Instant::now();
        let current = OdometryFrame::new(odo_input, &self.k, &self.cfg.odometry);
        let mut odometry_ok = true;
        if let Some(prev) = &self.prev {
            match estimate_pose_frames(prev, &current, &self.velocity, &self.cfg.odometry) {
                Ok(r) if !r.diverged => {
                    self.pose = self.pose.compose(&r.pose).orthonormalized();
                    self.velocity = r.pose;
                }
                Ok(r) => {
                    warn!("odometry diverged at t={} after {} iterations; keeping previous pose", frame.timestamp, r.iterations);
                    odometry_ok = false;
                }
                Err(e) => {
                    warn!("odometry failed at t={}: {e}; keeping previous pose", frame.timestamp);
                    odometry_ok = false;
                }
            }
            if !odometry_ok {
                self.velocity = PoseSE3::identity();
                self.failures.push(frame.timestamp);
            }
        }
        self.prev = Some(current);
        let odometry_ms = ms(start);

        let start = Instant::now();
        let mut observations = Vec::with_capacity(sep.parts.len());
        for part in &sep.parts {
            match mean_depth(part).and_then(|d| center_point(&part.detection, d, &self.k)) {
                Ok(p) => observations.push(to_world(&p, &self.pose)),
                Err(e) => debug!("skipping detection at t={}: {e}", frame.timestamp),
            }
        }
        self.tracker.associate(frame.timestamp, &observations)?;
        let tracking_ms = ms(start);

        let start = Instant::now();
        if self.cfg.fuse {
            fuse_frame(&mut self.map, odo_input, frame.color.as_ref(), &self.pose, &self.k, self.cfg.fuse_stride);
            if self.map.len() > MAP_COMPACT_THRESHOLD {
                self.map = voxel_downsample(&self.map, self.cfg.voxel)?;
            }
        }
        let fusion_ms = ms(start);

        self.trajectory.push(frame.timestamp, self.pose)?;
        let timing = FrameTiming {
            timestamp: frame.timestamp,
            filter_ms,
            odometry_ms,
            tracking_ms,
            fusion_ms,
        };
        self.timings.push(timing);
        Ok(FrameResult {
            pose: self.pose,
            odometry_ok,
            observations,
            timing,
        })
    }

    pub fn finish(self) -> Result<PipelineOutput> {
        let map = if self.cfg.fuse {
            voxel_downsample(&self.map, self.cfg.voxel)?
        } else {
            PointCloud::default()
        };
        Ok(PipelineOutput {
            camera: self.trajectory,
            tracks: self.tracker.all_tracks(),
            map,
            timings: self.timings,
            odometry_failures: self.failures,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Camera-to-world pose per frame; the first frame defines the world.
    pub camera: Trajectory,
    pub tracks: Vec<Track>,
    pub map: PointCloud,
    pub timings: Vec<FrameTiming>,
    /// Timestamps where odometry failed.
    pub odometry_failures: Vec<f64>,
}

/// Runs the pipeline over a whole sequence. Each frame gets the detections
/// closest in time, within `detection_max_dt`.
pub fn run_pipeline(seq: &TumSequence, dets: &DetectionSet, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let mut pipeline: Option<Pipeline> = None;
    for frame in seq.frames() {
        let mut frame = frame?;
        frame.detections = dets.nearest(frame.timestamp, cfg.detection_max_dt).to_vec();
        let p = match pipeline.as_mut() {
            Some(p) => p,
            None => {
                let k = cfg.intrinsics(seq.intrinsics(), frame.depth.width(), frame.depth.height())?;
                pipeline.insert(Pipeline::new(cfg.clone(), k)?)
            }
        };
        p.process(&frame)?;
    }
    match pipeline {
        Some(p) => p.finish(),
        None => Err(Error::InvalidInput(format!("sequence {} has no frames", seq.dir.display()))),
    }
}
