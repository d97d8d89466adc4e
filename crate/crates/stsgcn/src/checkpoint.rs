//! Plain-text checkpoint container: every parameter group by name, shape and
//! row-major decimal values, plus batch-norm running statistics. Values are
//! written in shortest round-trip form, so load after save is exact.

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Named checkpoint groups: name -> (shape, row-major values).
pub type Groups = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

const MAGIC: &str = "STSGCN-CKPT v=1";

fn write_group(text: &mut String, name: &str, shape: &[usize], values: &[f64]) {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    let _ = writeln!(text, "group {name} {}", dims.join(","));
    for (i, value) in values.iter().enumerate() {
        if i > 0 {
            text.push(' ');
        }
        let _ = write!(text, "{value}");
    }
    text.push('\n');
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let mut text = String::from(MAGIC);
    text.push('\n');
    params.for_each_param(&mut |name, t| {
        write_group(&mut text, &name, t.shape(), t.data());
    });
    params.for_each_norm_state(&mut |name, state| {
        let c = state.channels();
        write_group(&mut text, &format!("{name}.running_mean"), &[c], &state.running_mean);
        write_group(&mut text, &format!("{name}.running_var"), &[c], &state.running_var);
    });
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Raw named groups from a checkpoint file.
pub fn read_groups(path: &Path) -> Result<Groups> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == MAGIC => {}
        _ => {
            return Err(Error::CheckpointMismatch(format!(
                "{} is not a checkpoint (missing '{MAGIC}' header)",
                path.display()
            )))
        }
    }
    let mut groups = BTreeMap::new();
    let mut pending: Option<(String, Vec<usize>)> = None;
    for (lineno, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("group ") {
            if pending.is_some() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: lineno + 1,
                    detail: "group header without values".into(),
                });
            }
            let mut parts = rest.split_whitespace();
            let name = parts.next().unwrap_or_default().to_string();
            let dims = parts.next().ok_or_else(|| Error::Parse {
                path: path.into(),
                line: lineno + 1,
                detail: "group header missing shape".into(),
            })?;
            let shape: Vec<usize> = dims
                .split(',')
                .map(|d| {
                    d.parse().map_err(|_| Error::Parse {
                        path: path.into(),
                        line: lineno + 1,
                        detail: format!("bad extent '{d}'"),
                    })
                })
                .collect::<Result<_>>()?;
            pending = Some((name, shape));
        } else {
            let (name, shape) = pending.take().ok_or_else(|| Error::Parse {
                path: path.into(),
                line: lineno + 1,
                detail: "values before any group header".into(),
            })?;
            let values: Vec<f64> = trimmed
                .split_whitespace()
                .map(|f| {
                    f.parse().map_err(|_| Error::Parse {
                        path: path.into(),
                        line: lineno + 1,
                        detail: format!("'{f}' is not a number"),
                    })
                })
                .collect::<Result<_>>()?;
            let expected: usize = shape.iter().product();
            if values.len() != expected {
                return Err(Error::Parse {
                    path: path.into(),
                    line: lineno + 1,
                    detail: format!(
                        "group {name}: shape {shape:?} implies {expected} values, found {}",
                        values.len()
                    ),
                });
            }
            groups.insert(name, (shape, values));
        }
    }
    if pending.is_some() {
        return Err(Error::CheckpointMismatch(
            "truncated checkpoint: trailing group header without values".into(),
        ));
    }
    Ok(groups)
}

/// Rebuild model parameters from a checkpoint, verifying that the group set
/// and every shape match what `config` implies. On mismatch the error lists
/// the full expected-vs-found diff.
pub fn load_checkpoint(config: &ModelConfig, path: &Path) -> Result<ModelParams> {
    let mut groups = read_groups(path)?;
    let mut params = ModelParams::init(config, 0)?;
    let mut problems: Vec<String> = Vec::new();

    params.for_each_param_mut(&mut |name, t| match groups.remove(&name) {
        Some((shape, values)) if shape == t.shape() => {
            t.data_mut().copy_from_slice(&values);
        }
        Some((shape, _)) => problems.push(format!(
            "{name}: expected shape {:?}, found {shape:?}",
            t.shape()
        )),
        None => problems.push(format!("{name}: expected shape {:?}, missing", t.shape())),
    });
    params.for_each_norm_state_mut(&mut |name, state| {
        for (suffix, buffer) in [
            ("running_mean", &mut state.running_mean),
            ("running_var", &mut state.running_var),
        ] {
            let key = format!("{name}.{suffix}");
            match groups.remove(&key) {
                Some((shape, values)) if shape == [buffer.len()] => {
                    buffer.copy_from_slice(&values);
                }
                Some((shape, _)) => problems.push(format!(
                    "{key}: expected shape [{}], found {shape:?}",
                    buffer.len()
                )),
                None => problems.push(format!("{key}: expected shape [{}], missing", buffer.len())),
            }
        }
    });
    for (name, (shape, _)) in &groups {
        problems.push(format!("{name}: not expected by config, found shape {shape:?}"));
    }
    if !problems.is_empty() {
        return Err(Error::CheckpointMismatch(format!(
            "{} group(s) differ:\n  {}",
            problems.len(),
            problems.join("\n  ")
        )));
    }
    Ok(params)
}

/// Convenience: checkpointed tensors for one group name.
pub fn group_tensor(groups: &Groups, name: &str) -> Result<Tensor> {
    let (shape, values) = groups
        .get(name)
        .ok_or_else(|| Error::CheckpointMismatch(format!("group {name} not present")))?;
    Tensor::new(shape.clone(), values.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EncoderVariant, ModelConfig};

    fn cfg(variant: EncoderVariant) -> ModelConfig {
        ModelConfig {
            variant,
            joints: 4,
            input_frames: 3,
            output_frames: 2,
            channels: vec![3, 6, 3],
            decoder_stages: 2,
        }
    }

    fn tmp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("stsgcn-ckpt-{}-{name}", std::process::id()))
    }

    #[test]
    fn save_load_round_trips_every_variant() {
        for variant in [
            EncoderVariant::Separable,
            EncoderVariant::Full,
            EncoderVariant::Distinct,
            EncoderVariant::SeparableShared,
        ] {
            let config = cfg(variant);
            let mut params = ModelParams::init(&config, 42).unwrap();
            // make running stats non-default so their round-trip is exercised
            params.for_each_norm_state_mut(&mut |_, s| {
                for (i, m) in s.running_mean.iter_mut().enumerate() {
                    *m = 0.1 * i as f64 + 0.01;
                }
            });
            let path = tmp(&format!("{variant:?}.txt"));
            save_checkpoint(&params, &path).unwrap();
            let loaded = load_checkpoint(&config, &path).unwrap();
            let data = |p: &ModelParams| -> Vec<Vec<f64>> {
                p.flatten().iter().map(|t| t.data().to_vec()).collect()
            };
            assert_eq!(data(&loaded), data(&params), "{variant:?}");
            let mut states = Vec::new();
            loaded.for_each_norm_state(&mut |_, s| states.push(s.clone()));
            let mut states_orig = Vec::new();
            params.for_each_norm_state(&mut |_, s| states_orig.push(s.clone()));
            assert_eq!(states, states_orig);
        }
    }

    #[test]
    fn mismatched_config_reports_shape_diff() {
        let config = cfg(EncoderVariant::Separable);
        let params = ModelParams::init(&config, 0).unwrap();
        let path = tmp("mismatch.txt");
        save_checkpoint(&params, &path).unwrap();

        let mut wider = config.clone();
        wider.joints = 5;
        let err = load_checkpoint(&wider, &path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected shape"), "{msg}");
        assert!(msg.contains("found"), "{msg}");

        let mut other_variant = config;
        other_variant.variant = EncoderVariant::Full;
        let err = load_checkpoint(&other_variant, &path).unwrap_err();
        assert!(err.to_string().contains("space_time"));
    }

    #[test]
    fn non_checkpoint_file_is_rejected() {
        let path = tmp("garbage.txt");
        std::fs::write(&path, "not a checkpoint\n").unwrap();
        assert!(matches!(
            read_groups(&path),
            Err(Error::CheckpointMismatch(_))
        ));
    }
}
