use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use log::{info, warn};

use dynscene_core::evaluation::{evaluate, Trajectory};
use dynscene_core::io::{read_detections, read_obj, read_trajectory, read_tum_sequence, write_obj, write_ply, write_trajectory};
use dynscene_core::placement::{human_to_world, transform_mesh};
use dynscene_core::synthetic::generate_sequence;
use dynscene_core::{run_pipeline, Error, PipelineConfig, PipelineOutput, PoseSE3, SyntheticScene};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn key_help(key: &str) -> &'static str {
    match key {
        "lambda" => "Box magnification factor [1.2]",
        "bin-width" => "Depth histogram bin width, m [0.2]",
        "bg-margin" => "Background interval margin, m [0.1]",
        "human-margin" => "Human interval margin, m [0.2]",
        "confidence" => "Minimum detection confidence, exclusive [0.5]",
        "filter" => "Enable the dual-box filter [true]",
        "gate" => "Largest track association distance, m [0.8]",
        "max-misses" => "Missed frames before a track ends [15]",
        "pyramid-levels" => "Odometry pyramid levels [3]",
        "max-iterations" => "Gauss-Newton iterations per level [10]",
        "convergence-eps" => "Step norm that ends a level [1e-6]",
        "huber-delta" => "Huber threshold on residuals, m [0.05]",
        "discontinuity" => "Depth jump that invalidates a normal, m [0.1]",
        "max-correspondence-distance" => "Largest point pair distance, m [0.1]",
        "finest-stride" => "Pixel stride at the finest level [4]",
        "normal-radius" => "Normal stencil half-width, px; 0 scales with width [0]",
        "min-valid-pixels" => "Valid pixels needed per frame [1000]",
        "voxel" => "Map voxel size, m [0.02]",
        "fuse" => "Build the point-cloud map [true]",
        "fuse-stride" => "Pixel stride when fusing [4]",
        "depth-scale" => "Raw units per meter [from metadata, else 5000]",
        "detection-max-dt" => "Detection to frame time tolerance, s [0.02]",
        "fx" | "fy" | "cx" | "cy" => "Intrinsic override [from metadata]",
        _ => "",
    }
}

fn cli() -> Command {
    let mut run = Command::new("run")
        .about("Filter, track and map a dataset; writes trajectories, map.ply and timing.csv")
        .arg(Arg::new("dataset").required(true).value_parser(value_parser!(PathBuf)))
        .arg(Arg::new("detections").required(true).value_parser(value_parser!(PathBuf)))
        .arg(Arg::new("out").required(true).value_parser(value_parser!(PathBuf)))
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(value_parser!(PathBuf))
                .help("key = value file; flags below override it"),
        )
        .arg(
            Arg::new("no-filter")
                .long("no-filter")
                .action(ArgAction::SetTrue)
                .help("Feed raw depth to odometry and mapping"),
        );
    for key in PipelineConfig::KEYS {
        run = run.arg(
            Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .help(key_help(key))
                .help_heading("Pipeline options"),
        );
    }

    Command::new("dynscene")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Dynamic-scene RGB-D pipeline with dual bounding-box filtering")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("simulate")
                .about("Render a synthetic dataset from a TOML scene description")
                .arg(Arg::new("scene").required(true).value_parser(value_parser!(PathBuf)))
                .arg(Arg::new("out").required(true).value_parser(value_parser!(PathBuf))),
        )
        .subcommand(run)
        .subcommand(
            Command::new("evaluate")
                .about("Absolute trajectory error after rigid alignment")
                .arg(Arg::new("estimate").required(true).value_parser(value_parser!(PathBuf)))
                .arg(Arg::new("groundtruth").required(true).value_parser(value_parser!(PathBuf)))
                .arg(
                    Arg::new("max-dt")
                        .long("max-dt")
                        .default_value("0.02")
                        .value_parser(value_parser!(f64))
                        .help("Largest timestamp gap for a pose pair, seconds"),
                )
                .arg(
                    Arg::new("errors")
                        .long("errors")
                        .value_name("FILE")
                        .value_parser(value_parser!(PathBuf))
                        .help("Per-frame error table [default: <estimate>_errors.csv]"),
                ),
        )
        .subcommand(
            Command::new("place-mesh")
                .about("Place a body mesh at a tracked human position")
                .arg(Arg::new("mesh").required(true).value_parser(value_parser!(PathBuf)))
                .arg(Arg::new("track").required(true).value_parser(value_parser!(PathBuf)))
                .arg(Arg::new("poses").required(true).value_parser(value_parser!(PathBuf)))
                .arg(Arg::new("frame").required(true).value_parser(value_parser!(usize)))
                .arg(Arg::new("out").required(true).value_parser(value_parser!(PathBuf)))
                .arg(
                    Arg::new("max-dt")
                        .long("max-dt")
                        .default_value("0.02")
                        .value_parser(value_parser!(f64))
                        .help("Largest gap between the track point and its camera pose, seconds"),
                ),
        )
}

fn path<'a>(m: &'a ArgMatches, name: &str) -> &'a Path {
    m.get_one::<PathBuf>(name).expect("required argument")
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_file(p: &Path, text: &str) -> Result<(), Error> {
    fs::write(p, text).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn simulate(m: &ArgMatches) -> Result<(), Error> {
    let scene = SyntheticScene::load(path(m, "scene"))?;
    let out = path(m, "out");
    create_dir(out)?;
    let seq = generate_sequence(&scene, out)?;
    println!("wrote {} frames and {} detections to {}", seq.timestamps.len(), seq.detections, out.display());
    Ok(())
}

fn pipeline_config(m: &ArgMatches) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::default();
    if let Some(file) = m.get_one::<PathBuf>("config") {
        cfg.apply_file(file)?;
    }
    for key in PipelineConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    if m.get_flag("no-filter") {
        cfg.filter_enabled = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_outputs(out: &Path, result: &PipelineOutput) -> Result<(), Error> {
    create_dir(out)?;
    write_trajectory(&out.join("camera_trajectory.txt"), &result.camera)?;
    for track in &result.tracks {
        let mut traj = Trajectory::new();
        for (t, p) in &track.points {
            traj.push(*t, PoseSE3::from_translation(*p))?;
        }
        write_trajectory(&out.join(format!("track_{}.txt", track.id)), &traj)?;
    }
    write_ply(&out.join("map.ply"), &result.map)?;
    let mut csv = String::from("timestamp,filter_ms,odometry_ms,tracking_ms,fusion_ms\n");
    for t in &result.timings {
        let _ = writeln!(
            csv,
            "{:.6},{:.4},{:.4},{:.4},{:.4}",
            t.timestamp, t.filter_ms, t.odometry_ms, t.tracking_ms, t.fusion_ms
        );
    }
    write_file(&out.join("timing.csv"), &csv)
}

fn run(m: &ArgMatches) -> Result<(), Error> {
    let cfg = pipeline_config(m)?;
    let seq = read_tum_sequence(path(m, "dataset"), cfg.depth_scale)?;
    let dets = read_detections(path(m, "detections"))?;
    info!("{} frames, {} detection groups", seq.len(), dets.len());
    let result = run_pipeline(&seq, &dets, &cfg)?;
    if !result.odometry_failures.is_empty() {
        warn!("odometry failed on {} frames", result.odometry_failures.len());
    }
    let out = path(m, "out");
    write_outputs(out, &result)?;

    let n = result.timings.len().max(1) as f64;
    let mean = |f: fn(&dynscene_core::FrameTiming) -> f64| result.timings.iter().map(f).sum::<f64>() / n;
    println!(
        "{} frames, {} tracks, {} map points; mean ms per frame: filter {:.3}, odometry {:.3}, tracking {:.3}, fusion {:.3}",
        result.timings.len(),
        result.tracks.len(),
        result.map.len(),
        mean(|t| t.filter_ms),
        mean(|t| t.odometry_ms),
        mean(|t| t.tracking_ms),
        mean(|t| t.fusion_ms)
    );
    Ok(())
}

fn default_error_path(est: &Path) -> PathBuf {
    let stem = est.file_stem().and_then(|s| s.to_str()).unwrap_or("estimate");
    est.with_file_name(format!("{stem}_errors.csv"))
}

fn evaluate_cmd(m: &ArgMatches) -> Result<(), Error> {
    let est = read_trajectory(path(m, "estimate"))?;
    let gt = read_trajectory(path(m, "groundtruth"))?;
    let max_dt = *m.get_one::<f64>("max-dt").expect("has default");
    let report = evaluate(&est, &gt, max_dt)?;
    let table = m
        .get_one::<PathBuf>("errors")
        .cloned()
        .unwrap_or_else(|| default_error_path(path(m, "estimate")));
    let mut csv = String::from("timestamp,error_m\n");
    for (t, e) in &report.errors {
        let _ = writeln!(csv, "{t:.6},{e:.9}");
    }
    write_file(&table, &csv)?;
    println!("{:.6}", report.rmse);
    Ok(())
}

fn place_mesh(m: &ArgMatches) -> Result<(), Error> {
    let mesh = read_obj(path(m, "mesh"))?;
    let track = read_trajectory(path(m, "track"))?;
    let poses = read_trajectory(path(m, "poses"))?;
    let frame = *m.get_one::<usize>("frame").expect("required");
    let max_dt = *m.get_one::<f64>("max-dt").expect("has default");
    let point = track.poses().get(frame).ok_or_else(|| {
        Error::InvalidInput(format!("frame {frame} out of range, track has {} points", track.len()))
    })?;
    let camera = poses.nearest(point.stamp, max_dt).ok_or_else(|| {
        Error::InvalidInput(format!("no camera pose within {max_dt} s of t={}", point.stamp))
    })?;
    let placement = human_to_world(&camera.pose.rotation, &point.pose.translation)?;
    write_obj(path(m, "out"), &transform_mesh(&mesh, &placement))
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_DATA
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match matches.subcommand() {
        Some(("simulate", m)) => simulate(m),
        Some(("run", m)) => run(m),
        Some(("evaluate", m)) => evaluate_cmd(m),
        Some(("place-mesh", m)) => place_mesh(m),
        _ => unreachable!("subcommand is required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        cli().debug_assert();
    }

    #[test]
    fn every_key_is_documented() {
        for key in PipelineConfig::KEYS {
            assert!(!key_help(key).is_empty(), "{key}");
        }
    }

    #[test]
    fn flags_override_config() {
        let m = cli()
            .try_get_matches_from(["dynscene", "run", "d", "x.txt", "o", "--lambda", "1.5", "--no-filter"])
            .unwrap();
        let (_, sub) = m.subcommand().unwrap();
        let cfg = pipeline_config(sub).unwrap();
        assert_eq!(cfg.filter.lambda, 1.5);
        assert!(!cfg.filter_enabled);
    }

    #[test]
    fn error_classes() {
        assert_eq!(exit_code(&Error::InvalidInput("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::RankDeficient("x".into())), EXIT_NUMERICAL);
    }
}
