//! Sequence layout on disk: `%06d.pgm` frames (binary 8-bit graymap),
//! `groundtruth.txt` with one top-left `x,y,w,h` box per line, and an
//! optional `scenario.json` for synthetic sequences.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::observation::{Frame, SyntheticScenario};
use crate::state::TargetState;

use super::tracker::Sequence;

pub const SCENARIO_FILE: &str = "scenario.json";
pub const GROUND_TRUTH_FILE: &str = "groundtruth.txt";

pub fn frame_file_name(one_based: usize) -> String {
    format!("{one_based:06}.pgm")
}

/// Encodes a frame as binary P5, intensities scaled to 0..=255.
pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend(frame.pixels.iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn decode_pgm(bytes: &[u8], index: usize) -> Result<Frame> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Parse("only binary P5 graymaps are supported".into()));
    }
    let parse = |s: String| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad PGM header field `{s}`")));
    let width = parse(token()?)?;
    let height = parse(token()?)?;
    let maxval = parse(token()?)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte after maxval
    let data = &bytes[(pos + 1).min(bytes.len())..];
    if data.len() < width * height {
        return Err(Error::Parse("PGM pixel data is truncated".into()));
    }
    let pixels = data[..width * height].iter().map(|&b| b as f64 / maxval as f64).collect();
    Frame::new(width, height, index, pixels)
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<TargetState>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(n, line)| {
            let vals: Vec<f64> = line
                .split(|c: char| c == ',' || c == '\t' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse(format!("groundtruth line {}: `{line}`", n + 1)))?;
            if vals.len() != 4 {
                return Err(Error::Parse(format!("groundtruth line {}: expected x,y,w,h", n + 1)));
            }
            Ok(TargetState::from_corner_box(vals[0], vals[1], vals[2], vals[3]))
        })
        .collect()
}

pub fn format_ground_truth(boxes: &[TargetState]) -> String {
    boxes
        .iter()
        .map(|b| {
            let [x1, y1, _, _] = b.corners();
            format!("{},{},{},{}\n", x1, y1, b.size[0], b.size[1])
        })
        .collect()
}

/// Writes scenario, frames and ground truth into `dir`.
pub fn write_scenario_dir(dir: &Path, scenario: &SyntheticScenario) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(SCENARIO_FILE))?);
    serde_json::to_writer_pretty(&mut w, scenario)?;
    w.flush()?;
    fs::write(dir.join(GROUND_TRUTH_FILE), format_ground_truth(&scenario.truth))?;
    for t in 0..scenario.len() {
        fs::write(dir.join(frame_file_name(t + 1)), encode_pgm(&scenario.render_frame(t)))?;
    }
    Ok(())
}

pub fn read_scenario(path: &Path) -> Result<SyntheticScenario> {
    let sc: SyntheticScenario = serde_json::from_str(&fs::read_to_string(path)?)?;
    sc.validate()?;
    Ok(sc)
}

fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads a sequence directory. With a `scenario.json`, ground truth comes from
/// the scenario and frames are read from disk when present (rendered
/// otherwise).
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    let scenario_path = dir.join(SCENARIO_FILE);
    let paths = frame_paths(dir)?;
    let read_frames = || -> Result<Vec<Frame>> {
        paths
            .iter()
            .enumerate()
            .map(|(i, p)| decode_pgm(&fs::read(p)?, i))
            .collect()
    };
    if scenario_path.exists() {
        let sc = read_scenario(&scenario_path)?;
        let frames = if paths.is_empty() { sc.render_all() } else { read_frames()? };
        return Ok(Sequence {
            name,
            truth: sc.truth.clone(),
            frames,
            scenario: Some(Arc::new(sc)),
        });
    }
    let truth = parse_ground_truth(&fs::read_to_string(dir.join(GROUND_TRUTH_FILE))?)?;
    Ok(Sequence {
        name,
        frames: read_frames()?,
        truth,
        scenario: None,
    })
}
