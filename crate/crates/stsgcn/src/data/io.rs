//! Sequence file formats: the native plain-text format and foreign CSV
//! ingestion with joint masking.

use super::{PoseSequence, Representation};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// How to parse a foreign CSV pose file: one frame per row,
/// `3 * joints_in_file` columns, optionally keeping a subset of joints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvFormat {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub joints_in_file: usize,
    /// Joint indices to keep, in order. `None` keeps all.
    #[serde(default)]
    pub keep: Option<Vec<usize>>,
    pub representation: Representation,
    pub fps: u32,
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FormatSpec {
    #[default]
    Native,
    Csv(CsvFormat),
}

/// Load a sequence from disk under the given format.
pub fn load_sequence(path: &Path, format: &FormatSpec) -> Result<PoseSequence> {
    match format {
        FormatSpec::Native => load_native(path),
        FormatSpec::Csv(fmt) => load_csv(path, fmt),
    }
}

fn load_native(path: &Path) -> Result<PoseSequence> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        detail: "empty file".into(),
    })?;
    let (joints, rep, fps, frames) = parse_header(path, header)?;
    let mut data = Vec::with_capacity(frames * joints * 3);
    let mut rows = 0;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let before = data.len();
        parse_row(path, lineno + 1, line, ' ', 3 * joints, &mut data)?;
        debug_assert_eq!(data.len() - before, 3 * joints);
    }
    if rows != frames {
        return Err(Error::Parse {
            path: path.into(),
            line: rows + 1,
            detail: format!("header declares {frames} frames, file has {rows}"),
        });
    }
    PoseSequence::new(joints, rep, fps, data)
}

fn parse_header(path: &Path, header: &str) -> Result<(usize, Representation, u32, usize)> {
    let err = |detail: String| Error::Parse {
        path: path.into(),
        line: 1,
        detail,
    };
    let mut parts = header.split_whitespace();
    if parts.next() != Some("POSESEQ") {
        return Err(err("expected POSESEQ header".into()));
    }
    let mut joints = None;
    let mut rep = None;
    let mut fps = None;
    let mut frames = None;
    for kv in parts {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| err(format!("malformed header field '{kv}'")))?;
        match key {
            "v" => joints = Some(value.parse().map_err(|_| err(format!("bad v={value}")))?),
            "rep" => rep = Some(Representation::from_tag(value)?),
            "fps" => fps = Some(value.parse().map_err(|_| err(format!("bad fps={value}")))?),
            "frames" => {
                frames = Some(
                    value
                        .parse()
                        .map_err(|_| err(format!("bad frames={value}")))?,
                )
            }
            other => return Err(err(format!("unknown header field '{other}'"))),
        }
    }
    match (joints, rep, fps, frames) {
        (Some(v), Some(r), Some(f), Some(n)) => Ok((v, r, f, n)),
        _ => Err(err("header must carry v=, rep=, fps= and frames=".into())),
    }
}

fn parse_row(
    path: &Path,
    lineno: usize,
    line: &str,
    delimiter: char,
    expected: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    let before = out.len();
    let fields: Vec<&str> = if delimiter == ' ' {
        line.split_whitespace().collect()
    } else {
        line.split(delimiter).map(str::trim).collect()
    };
    if fields.len() != expected {
        return Err(Error::Parse {
            path: path.into(),
            line: lineno,
            detail: format!("expected {expected} columns, found {}", fields.len()),
        });
    }
    for field in fields {
        let value: f64 = field.parse().map_err(|_| Error::Parse {
            path: path.into(),
            line: lineno,
            detail: format!("'{field}' is not a number"),
        })?;
        if !value.is_finite() {
            out.truncate(before);
            return Err(Error::Data(format!(
                "non-finite value {value} at {}:{lineno}",
                path.display()
            )));
        }
        out.push(value);
    }
    Ok(())
}

fn load_csv(path: &Path, fmt: &CsvFormat) -> Result<PoseSequence> {
    if fmt.joints_in_file == 0 {
        return Err(Error::InvalidConfig("joints_in_file must be positive".into()));
    }
    let keep: Vec<usize> = match &fmt.keep {
        Some(list) => {
            if list.is_empty() {
                return Err(Error::InvalidConfig("joint keep-list is empty".into()));
            }
            for &j in list {
                if j >= fmt.joints_in_file {
                    return Err(Error::InvalidConfig(format!(
                        "keep-list joint {j} out of range for {} file joints",
                        fmt.joints_in_file
                    )));
                }
            }
            list.clone()
        }
        None => (0..fmt.joints_in_file).collect(),
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut row = Vec::with_capacity(3 * fmt.joints_in_file);
    let mut data = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        row.clear();
        parse_row(
            path,
            lineno + 1,
            line,
            fmt.delimiter,
            3 * fmt.joints_in_file,
            &mut row,
        )?;
        for &j in &keep {
            data.extend_from_slice(&row[3 * j..3 * j + 3]);
        }
    }
    PoseSequence::new(keep.len(), fmt.representation, fmt.fps, data)
}

/// Write a sequence in the native format. Refuses to replace an existing
/// file unless `overwrite` is set.
pub fn save_sequence(seq: &PoseSequence, path: &Path, overwrite: bool) -> Result<()> {
    if !overwrite && path.exists() {
        return Err(Error::Data(format!(
            "{} already exists (pass overwrite to replace)",
            path.display()
        )));
    }
    let mut text = String::new();
    let _ = writeln!(
        text,
        "POSESEQ v={} rep={} fps={} frames={}",
        seq.joints(),
        seq.representation().tag(),
        seq.fps(),
        seq.num_frames()
    );
    let w = 3 * seq.joints();
    for f in 0..seq.num_frames() {
        let row = seq.frame(f);
        for (i, value) in row.iter().enumerate() {
            if i > 0 {
                text.push(' ');
            }
            let _ = write!(text, "{value}");
        }
        text.push('\n');
        debug_assert_eq!(row.len(), w);
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn tmpdir() -> std::path::PathBuf {
        static NEXT: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
        let dir = std::env::temp_dir().join(format!(
            "stsgcn-io-{}-{}",
            std::process::id(),
            NEXT.fetch_add(1, std::sync::atomic::Ordering::Relaxed)
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn native_round_trip_is_byte_identical() {
        let dir = tmpdir();
        let path = dir.join("clip.poseseq");
        let mut rng = Rng::new(99);
        let frames: Vec<f64> = (0..2 * 2 * 3).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let seq = PoseSequence::new(2, Representation::Coords3d, 25, frames).unwrap();
        save_sequence(&seq, &path, false).unwrap();
        let loaded = load_sequence(&path, &FormatSpec::Native).unwrap();
        assert_eq!(loaded, seq);
        let path2 = dir.join("clip2.poseseq");
        save_sequence(&loaded, &path2, false).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn save_honors_overwrite_flag() {
        let dir = tmpdir();
        let path = dir.join("clip.poseseq");
        let seq = PoseSequence::new(1, Representation::Coords3d, 25, vec![1.0, 2.0, 3.0]).unwrap();
        save_sequence(&seq, &path, false).unwrap();
        assert!(save_sequence(&seq, &path, false).is_err());
        assert!(save_sequence(&seq, &path, true).is_ok());
    }

    #[test]
    fn csv_identity_mask_loads_in_file_order() {
        let dir = tmpdir();
        let path = dir.join("poses.csv");
        std::fs::write(&path, "1,2,3,4,5,6\n7,8,9,10,11,12\n").unwrap();
        let fmt = CsvFormat {
            delimiter: ',',
            joints_in_file: 2,
            keep: None,
            representation: Representation::Coords3d,
            fps: 50,
        };
        let seq = load_sequence(&path, &FormatSpec::Csv(fmt)).unwrap();
        assert_eq!(seq.num_frames(), 2);
        assert_eq!(seq.joints(), 2);
        assert_eq!(
            seq.values(),
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]
        );
    }

    #[test]
    fn csv_mask_keeps_selected_joints() {
        let dir = tmpdir();
        let path = dir.join("poses.csv");
        std::fs::write(&path, "1,2,3,4,5,6,7,8,9\n").unwrap();
        let fmt = CsvFormat {
            delimiter: ',',
            joints_in_file: 3,
            keep: Some(vec![2, 0]),
            representation: Representation::ExpMap,
            fps: 50,
        };
        let seq = load_sequence(&path, &FormatSpec::Csv(fmt)).unwrap();
        assert_eq!(seq.joints(), 2);
        assert_eq!(seq.values(), &[7.0, 8.0, 9.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn csv_short_row_reports_line_number() {
        let dir = tmpdir();
        let path = dir.join("poses.csv");
        std::fs::write(&path, "1,2,3,4,5,6\n1,2,3,4,5\n").unwrap();
        let fmt = CsvFormat {
            delimiter: ',',
            joints_in_file: 2,
            keep: None,
            representation: Representation::Coords3d,
            fps: 50,
        };
        match load_sequence(&path, &FormatSpec::Csv(fmt)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_value_is_a_data_error() {
        let dir = tmpdir();
        let path = dir.join("poses.csv");
        std::fs::write(&path, "1,2,NaN,4,5,6\n").unwrap();
        let fmt = CsvFormat {
            delimiter: ',',
            joints_in_file: 2,
            keep: None,
            representation: Representation::Coords3d,
            fps: 50,
        };
        assert!(matches!(
            load_sequence(&path, &FormatSpec::Csv(fmt)),
            Err(Error::Data(_))
        ));
    }
}
