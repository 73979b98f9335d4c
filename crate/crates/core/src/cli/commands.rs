use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ArgMatches;

use super::config::{Layers, RunConfig};
use super::Failure;
use crate::error::{Error, Result};
use crate::flow::{farneback_flow, FlowField};
use crate::formats::{
    read_flo, read_frame_sequence, read_imu_csv, read_lmap, read_pgm, render_viz, sequence_file_name,
    write_flo, write_lmap, write_mask_pgm, write_pgm, write_ppm,
};
use crate::imu_sync::{estimate_offset, vertical_motion_series};
use crate::looming::{
    detect_moving, estimate_foe_trimmed, looming_transform, DetectionMask, FocusOfExpansion, LoomingMap,
};
use crate::raster::{center_crop, Frame};
use crate::scene::{render_frame, true_flow, true_mask};
use crate::par;

type CmdResult = std::result::Result<(), Failure>;

/// Wraps errors of one stage.
trait Stage<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, Failure>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::new(name, e))
    }
}

fn path_arg<'a>(m: &'a ArgMatches, name: &str) -> &'a Path {
    m.get_one::<PathBuf>(name).expect("required by clap")
}

fn io_at(path: &Path, e: std::io::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_at(path, e))
}

pub(super) fn dispatch(name: &str, m: &ArgMatches, layers: &Layers, cfg: &RunConfig) -> CmdResult {
    match name {
        "sim" => sim(m, cfg),
        "flow" => flow(m, cfg),
        "transform" => transform(m, cfg),
        "foe" => foe(m, cfg),
        "detect" => detect(m, cfg),
        "viz" => viz(m, layers),
        "sync" => sync(m, cfg),
        "pipeline" => pipeline(m, cfg),
        other => unreachable!("unknown subcommand {other}"),
    }
}

fn sim(m: &ArgMatches, cfg: &RunConfig) -> CmdResult {
    let scene = &cfg.scene;
    scene.validate().stage("scene")?;
    let out = path_arg(m, "out");
    create_dir(out).stage("output")?;
    let frames = par::map_indices(scene.frames, |t| render_frame(scene, t));
    for (t, frame) in frames.into_iter().enumerate() {
        let frame = frame.stage("render")?;
        write_pgm(&frame, out.join(sequence_file_name(t))).stage("output")?;
    }
    fs::write(out.join("scene.cfg"), cfg.to_config_text())
        .map_err(|e| io_at(&out.join("scene.cfg"), e))
        .stage("output")?;
    if m.get_flag("truth") {
        let dir = out.join("truth");
        create_dir(&dir).stage("output")?;
        for t in 0..scene.frames.saturating_sub(1) {
            let flow = true_flow(scene, t).stage("render")?;
            write_flo(&flow, dir.join(format!("flow_{t:06}.flo"))).stage("output")?;
            let mask = true_mask(scene, t).stage("render")?;
            write_mask_pgm(&mask, dir.join(format!("mask_{t:06}.pgm"))).stage("output")?;
        }
    }
    Ok(())
}

fn flow(m: &ArgMatches, cfg: &RunConfig) -> CmdResult {
    let f1 = read_pgm(path_arg(m, "frame1")).stage("ingest")?;
    let f2 = read_pgm(path_arg(m, "frame2")).stage("ingest")?;
    let (w, h) = (f1.width().min(f2.width()), f1.height().min(f2.height()));
    let field = farneback_flow(&center_crop(&f1, w, h), &center_crop(&f2, w, h), &cfg.flow).stage("flow")?;
    write_flo(&field, path_arg(m, "out")).stage("output")
}

fn transform_flow(flow: &FlowField, cfg: &RunConfig) -> Result<LoomingMap> {
    let (w, h) = flow.dims();
    let k = cfg.intrinsics_for(w, h);
    looming_transform(flow, Some(&k), cfg.mode, &cfg.looming)
}

fn transform(m: &ArgMatches, cfg: &RunConfig) -> CmdResult {
    let flow = read_flo(path_arg(m, "flow")).stage("ingest")?;
    let map = transform_flow(&flow, cfg).stage("transform")?;
    write_lmap(&map, path_arg(m, "out")).stage("output")
}

/// FoE of `flow` with the configured border excluded.
fn fit_foe(flow: &FlowField, cfg: &RunConfig) -> Result<(FlowField, FocusOfExpansion)> {
    let mut masked = flow.clone();
    masked.invalidate_border(cfg.border);
    let foe = estimate_foe_trimmed(&masked, cfg.looming.tau_mag, cfg.detect.tau_dir, cfg.trim_rounds)?;
    Ok((masked, foe))
}

fn foe(m: &ArgMatches, cfg: &RunConfig) -> CmdResult {
    let flow = read_flo(path_arg(m, "flow")).stage("ingest")?;
    let (_, foe) = fit_foe(&flow, cfg).stage("foe")?;
    println!("{} {} {} {}", foe.x0, foe.y0, foe.rms_residual, foe.condition);
    Ok(())
}

fn parse_point(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::InvalidArgument(format!("expected X0,Y0, got `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let x: f64 = a.trim().parse().map_err(|_| bad())?;
    let y: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(bad());
    }
    Ok((x, y))
}

fn detect(m: &ArgMatches, cfg: &RunConfig) -> CmdResult {
    let flow = read_flo(path_arg(m, "flow")).stage("ingest")?;
    let (masked, foe) = match m.get_one::<String>("foe") {
        Some(p) => {
            let (x0, y0) = parse_point(p).stage("detect")?;
            let mut masked = flow.clone();
            masked.invalidate_border(cfg.border);
            let foe = FocusOfExpansion {
                x0,
                y0,
                rms_residual: f64::NAN,
                condition: f64::NAN,
                samples: 0,
            };
            (masked, foe)
        }
        None => fit_foe(&flow, cfg).stage("foe")?,
    };
    let mask = detect_moving(&masked, &foe, &cfg.detect);
    write_mask_pgm(&mask, path_arg(m, "out")).stage("output")?;
    println!("{}", mask.components.len());
    Ok(())
}

fn viz(m: &ArgMatches, layers: &Layers) -> CmdResult {
    // The mode is checked only when the user asked for one.
    let expected = match layers.get("mode") {
        Some(s) => Some(s.parse().stage("viz")?),
        None => None,
    };
    let map = read_lmap(path_arg(m, "map"), expected).stage("ingest")?;
    write_ppm(&render_viz(&map), path_arg(m, "out")).stage("output")
}

/// `.flo` files given directly, or all `.flo` files of one directory in
/// name order.
fn flow_paths(args: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if let [dir] = args {
        if dir.is_dir() {
            let mut out = Vec::new();
            for entry in fs::read_dir(dir).map_err(|e| io_at(dir, e))? {
                let p = entry.map_err(|e| io_at(dir, e))?.path();
                if p.extension().is_some_and(|x| x == "flo") {
                    out.push(p);
                }
            }
            out.sort();
            return Ok(out);
        }
    }
    Ok(args.to_vec())
}

fn sync(m: &ArgMatches, cfg: &RunConfig) -> CmdResult {
    let imu = read_imu_csv(path_arg(m, "imu")).stage("ingest")?;
    let args: Vec<PathBuf> = m.get_many::<PathBuf>("flows").expect("required").cloned().collect();
    let paths = flow_paths(&args).stage("ingest")?;
    let flows = paths.iter().map(read_flo).collect::<Result<Vec<_>>>().stage("ingest")?;
    let trace = vertical_motion_series(&flows, cfg.fps).stage("sync")?;
    let a = estimate_offset(&imu, &trace, cfg.search_window).stage("sync")?;
    println!("{} {} {}", a.offset, a.peak, a.lag_frames);
    Ok(())
}

/// Everything computed for one frame pair, waiting to be written.
struct PairResult {
    index: u64,
    next: u64,
    flow: FlowField,
    map: LoomingMap,
    foe: Result<FocusOfExpansion>,
    mask: Option<DetectionMask>,
}

fn process_pair(f1: &Frame, f2: &Frame, cfg: &RunConfig) -> std::result::Result<PairResult, Failure> {
    let index = f1.time_index();
    let flow = farneback_flow(f1, f2, &cfg.flow).map_err(|e| Failure::new("flow", e).at_pair(index))?;
    let map = transform_flow(&flow, cfg).map_err(|e| Failure::new("transform", e).at_pair(index))?;
    let (foe, mask) = match fit_foe(&flow, cfg) {
        Ok((masked, foe)) => {
            let mask = detect_moving(&masked, &foe, &cfg.detect);
            (Ok(foe), Some(mask))
        }
        Err(e @ Error::DegenerateGeometry { .. }) => (Err(e), None),
        Err(e) => return Err(Failure::new("foe", e).at_pair(index)),
    };
    Ok(PairResult {
        index,
        next: f2.time_index(),
        flow,
        map,
        foe,
        mask,
    })
}

/// Writes artifacts and log lines strictly in frame order.
struct Committer {
    out: PathBuf,
    log: BufWriter<File>,
    degenerate: usize,
}

impl Committer {
    fn log_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.log, "{line}")?;
        self.log.flush()?;
        Ok(())
    }

    fn commit(&mut self, r: PairResult) -> Result<()> {
        let i = r.index;
        write_flo(&r.flow, self.out.join(format!("flow_{i:06}.flo")))?;
        write_lmap(&r.map, self.out.join(format!("ratio_{i:06}.lmap")))?;
        write_ppm(&render_viz(&r.map), self.out.join(format!("viz_{i:06}.ppm")))?;
        let head = format!("pair {i:06} frames {}->{}:", r.index, r.next);
        match (&r.foe, &r.mask) {
            (Ok(foe), Some(mask)) => {
                write_mask_pgm(mask, self.out.join(format!("mask_{i:06}.pgm")))?;
                self.log_line(&format!(
                    "{head} foe {:.6} {:.6} rms {:.6e} condition {:.6e} samples {} components {} moving {}",
                    foe.x0,
                    foe.y0,
                    foe.rms_residual,
                    foe.condition,
                    foe.samples,
                    mask.components.len(),
                    mask.moving_count()
                ))
            }
            (Err(e), _) => {
                self.degenerate += 1;
                eprintln!("loomflow: warning: frame {i}: {e}; detection skipped");
                self.log_line(&format!("{head} {e}; detection skipped"))
            }
            (Ok(_), None) => unreachable!("mask exists whenever the FoE does"),
        }
    }
}

/// Frame pairs computed concurrently per batch before committing in order.
const BATCH: usize = 8;

fn pipeline(m: &ArgMatches, cfg: &RunConfig) -> CmdResult {
    let dir = path_arg(m, "frames_dir");
    if !dir.is_dir() {
        return Err(Failure::new(
            "ingest",
            Error::Format {
                path: dir.to_path_buf(),
                message: "not a directory".into(),
            },
        ));
    }
    let frames = read_frame_sequence(dir).stage("ingest")?;
    if frames.len() < 2 {
        return Err(Failure::new(
            "ingest",
            Error::Format {
                path: dir.to_path_buf(),
                message: format!("need at least 2 frame_NNNNNN.pgm frames, found {}", frames.len()),
            },
        ));
    }
    let w = frames.iter().map(Frame::width).min().unwrap();
    let h = frames.iter().map(Frame::height).min().unwrap();
    let frames: Vec<Frame> = frames.iter().map(|f| center_crop(f, w, h)).collect();

    let out = path_arg(m, "out");
    create_dir(out).stage("output")?;
    let log_path = out.join("run.log");
    let log = File::create(&log_path).map_err(|e| io_at(&log_path, e)).stage("output")?;
    let mut committer = Committer {
        out: out.to_path_buf(),
        log: BufWriter::new(log),
        degenerate: 0,
    };
    let mut header = String::from("# resolved configuration\n");
    header.push_str(&cfg.to_config_text());
    header.push_str(&format!("# input {} frames, {w}x{h}\n", frames.len()));
    committer.log_line(header.trim_end()).stage("output")?;

    let pairs = frames.len() - 1;
    let started = Instant::now();
    for start in (0..pairs).step_by(BATCH) {
        let n = BATCH.min(pairs - start);
        let batch = par::map_indices(n, |k| process_pair(&frames[start + k], &frames[start + k + 1], cfg));
        for r in batch {
            let r = r?;
            let index = r.index;
            committer
                .commit(r)
                .map_err(|e| Failure::new("output", e).at_pair(index))?;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    committer
        .log_line(&format!("summary pairs {pairs} degenerate {}", committer.degenerate))
        .stage("output")?;
    if m.get_flag("bench") {
        let fps = pairs as f64 / elapsed;
        let line = format!("bench {fps:.2} frames/s ({pairs} pairs in {elapsed:.3} s, {w}x{h})");
        eprintln!("loomflow: {line}");
        committer.log_line(&line).stage("output")?;
    }
    Ok(())
}
