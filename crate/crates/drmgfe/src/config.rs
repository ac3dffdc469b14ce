//! Ini-style study configuration: flat `key = value` lines under [study]
//! and one axis section, plus the built-in presets.
//!
//! Unknown or duplicate keys are rejected with the offending key named, and
//! serialization uses shortest round-trip decimal formatting, so a resolved
//! config embedded in a report reproduces the report exactly when fed back.
//!
//! ```text
//! [study]
//! dim = 1
//! axis = time
//! scheme = drmgfe
//! t_final = 0.1
//! delta = 0.5
//! samples = 500
//! master_seed = 3520617197
//! modes_per_axis = 100
//!
//! [time]
//! mesh_cells = 128
//! dt_ref = 0.000001
//! dt_ladder = 0.01 0.005 0.0025 0.00125 0.000625
//! ```
//!
//! The `[space]` section instead carries `dt`, `cells_ref`, `cells_ladder`.

use crate::fem::Dim;
use crate::harness::{AxisConfig, StudyAxis, StudyConfig};
use crate::scheme::SchemeKind;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Seed used by the presets unless overridden.
pub const DEFAULT_MASTER_SEED: u64 = 0xd1ce_5eed;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected 'key = value' or '[section]', got '{text}'")]
    Malformed { line: usize, text: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key '{key}' in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("duplicate key '{key}' in section [{section}]")]
    DuplicateKey { section: String, key: String },
    #[error("missing required key '{key}' in section [{section}]")]
    MissingKey { section: String, key: String },
    #[error("invalid value for '{key}' in [{section}]: {message}")]
    BadValue {
        section: String,
        key: String,
        message: String,
    },
    #[error("config declares axis = {axis} but provides section [{section}]")]
    AxisSectionMismatch { axis: String, section: String },
}

pub fn scheme_name(kind: SchemeKind) -> &'static str {
    match kind {
        SchemeKind::Drmgfe => "drmgfe",
        SchemeKind::SemiImplicitMilstein => "milstein",
    }
}

pub fn axis_name(axis: StudyAxis) -> &'static str {
    match axis {
        StudyAxis::Time => "time",
        StudyAxis::Space => "space",
    }
}

/// Renders a config in the ini form shown in the module docs.
pub fn to_ini(config: &StudyConfig) -> String {
    let mut out = String::new();
    out.push_str("[study]\n");
    let _ = writeln!(out, "dim = {}", config.dim.as_usize());
    let _ = writeln!(out, "axis = {}", axis_name(config.axis_kind()));
    let _ = writeln!(out, "scheme = {}", scheme_name(config.scheme));
    let _ = writeln!(out, "t_final = {}", config.t_final);
    let _ = writeln!(out, "delta = {}", config.delta);
    let _ = writeln!(out, "samples = {}", config.samples);
    let _ = writeln!(out, "master_seed = {}", config.master_seed);
    let _ = writeln!(out, "modes_per_axis = {}", config.modes_per_axis);
    out.push('\n');
    match &config.axis {
        AxisConfig::Time {
            mesh_cells,
            dt_ladder,
            dt_ref,
        } => {
            out.push_str("[time]\n");
            let _ = writeln!(out, "mesh_cells = {mesh_cells}");
            let _ = writeln!(out, "dt_ref = {dt_ref}");
            let ladder: Vec<String> = dt_ladder.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(out, "dt_ladder = {}", ladder.join(" "));
        }
        AxisConfig::Space {
            cells_ladder,
            cells_ref,
            dt,
        } => {
            out.push_str("[space]\n");
            let _ = writeln!(out, "dt = {dt}");
            let _ = writeln!(out, "cells_ref = {cells_ref}");
            let ladder: Vec<String> = cells_ladder.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "cells_ladder = {}", ladder.join(" "));
        }
    }
    out
}

struct Section {
    name: String,
    entries: BTreeMap<String, (String, usize)>,
}

fn split_sections(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            sections.push(Section {
                name: name.trim().to_string(),
                entries: BTreeMap::new(),
            });
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Malformed {
                line: line_no,
                text: line.to_string(),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let Some(section) = sections.last_mut() else {
            return Err(ConfigError::Malformed {
                line: line_no,
                text: format!("'{key}' appears before any [section]"),
            });
        };
        if section
            .entries
            .insert(key.clone(), (value, line_no))
            .is_some()
        {
            return Err(ConfigError::DuplicateKey {
                section: section.name.clone(),
                key,
            });
        }
    }
    Ok(sections)
}

struct SectionReader {
    name: String,
    entries: BTreeMap<String, (String, usize)>,
    allowed: &'static [&'static str],
}

impl SectionReader {
    fn take(&mut self, key: &str) -> Result<String, ConfigError> {
        self.entries
            .remove(key)
            .map(|(v, _)| v)
            .ok_or_else(|| ConfigError::MissingKey {
                section: self.name.clone(),
                key: key.to_string(),
            })
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, ConfigError> {
        let raw = self.take(key)?;
        raw.parse().map_err(|_| ConfigError::BadValue {
            section: self.name.clone(),
            key: key.to_string(),
            message: format!("cannot parse '{raw}'"),
        })
    }

    fn parse_list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Vec<T>, ConfigError> {
        let raw = self.take(key)?;
        raw.split_whitespace()
            .map(|tok| {
                tok.parse().map_err(|_| ConfigError::BadValue {
                    section: self.name.clone(),
                    key: key.to_string(),
                    message: format!("cannot parse list entry '{tok}'"),
                })
            })
            .collect()
    }

    fn finish(self) -> Result<(), ConfigError> {
        // Callers consume every key they understand, so anything left over
        // is unknown. `allowed` documents the schema for error messages.
        debug_assert!(!self.allowed.is_empty());
        if let Some(key) = self.entries.keys().next() {
            return Err(ConfigError::UnknownKey {
                section: self.name,
                key: key.clone(),
            });
        }
        Ok(())
    }
}

/// Parses the ini form back into a [`StudyConfig`].
pub fn from_ini(text: &str) -> Result<StudyConfig, ConfigError> {
    let mut study: Option<SectionReader> = None;
    let mut axis_section: Option<SectionReader> = None;
    for section in split_sections(text)? {
        let reader = |allowed| SectionReader {
            name: section.name.clone(),
            entries: section.entries.clone(),
            allowed,
        };
        match section.name.as_str() {
            "study" => {
                study = Some(reader(&[
                    "dim",
                    "axis",
                    "scheme",
                    "t_final",
                    "delta",
                    "samples",
                    "master_seed",
                    "modes_per_axis",
                ]))
            }
            "time" => axis_section = Some(reader(&["mesh_cells", "dt_ref", "dt_ladder"])),
            "space" => axis_section = Some(reader(&["dt", "cells_ref", "cells_ladder"])),
            other => return Err(ConfigError::UnknownSection(other.to_string())),
        }
    }
    let mut study = study.ok_or(ConfigError::MissingKey {
        section: "study".into(),
        key: "dim".into(),
    })?;
    let dim = match study.parse::<usize>("dim")? {
        1 => Dim::One,
        2 => Dim::Two,
        other => {
            return Err(ConfigError::BadValue {
                section: "study".into(),
                key: "dim".into(),
                message: format!("dim must be 1 or 2, got {other}"),
            })
        }
    };
    let axis_raw = study.take("axis")?;
    let scheme_raw = study.take("scheme")?;
    let scheme = match scheme_raw.as_str() {
        "drmgfe" => SchemeKind::Drmgfe,
        "milstein" => SchemeKind::SemiImplicitMilstein,
        other => {
            return Err(ConfigError::BadValue {
                section: "study".into(),
                key: "scheme".into(),
                message: format!("scheme must be 'drmgfe' or 'milstein', got '{other}'"),
            })
        }
    };
    let t_final: f64 = study.parse("t_final")?;
    let delta: f64 = study.parse("delta")?;
    let samples: usize = study.parse("samples")?;
    let master_seed: u64 = study.parse("master_seed")?;
    let modes_per_axis: usize = study.parse("modes_per_axis")?;
    study.finish()?;

    let mut section = axis_section.ok_or_else(|| ConfigError::MissingKey {
        section: axis_raw.clone(),
        key: "(axis section)".into(),
    })?;
    let axis = match (axis_raw.as_str(), section.name.clone().as_str()) {
        ("time", "time") => {
            let mesh_cells: usize = section.parse("mesh_cells")?;
            let dt_ref: f64 = section.parse("dt_ref")?;
            let dt_ladder: Vec<f64> = section.parse_list("dt_ladder")?;
            AxisConfig::Time {
                mesh_cells,
                dt_ladder,
                dt_ref,
            }
        }
        ("space", "space") => {
            let dt: f64 = section.parse("dt")?;
            let cells_ref: usize = section.parse("cells_ref")?;
            let cells_ladder: Vec<usize> = section.parse_list("cells_ladder")?;
            AxisConfig::Space {
                cells_ladder,
                cells_ref,
                dt,
            }
        }
        ("time", other) | ("space", other) => {
            return Err(ConfigError::AxisSectionMismatch {
                axis: axis_raw,
                section: other.to_string(),
            })
        }
        (other, _) => {
            return Err(ConfigError::BadValue {
                section: "study".into(),
                key: "axis".into(),
                message: format!("axis must be 'time' or 'space', got '{other}'"),
            })
        }
    };
    section.finish()?;

    Ok(StudyConfig {
        dim,
        scheme,
        t_final,
        delta,
        samples,
        master_seed,
        modes_per_axis,
        axis,
    })
}

/// Reads and parses a config file.
pub fn load(path: &Path) -> Result<StudyConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_ini(&text)
}

/// Built-in study presets: `Paper` mirrors the published experiment
/// settings; `Desk` trades reference resolution and sample count for a
/// bounded runtime.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(format!("preset must be 'paper' or 'desk', got '{other}'")),
        }
    }
}

/// Returns the built-in configuration for a (dim, axis, preset) triple.
pub fn preset(dim: Dim, axis: StudyAxis, tier: Preset) -> StudyConfig {
    let mut config = StudyConfig {
        dim,
        scheme: SchemeKind::Drmgfe,
        t_final: 0.1,
        delta: 0.5,
        samples: 500,
        master_seed: DEFAULT_MASTER_SEED,
        modes_per_axis: match dim {
            Dim::One => 100,
            Dim::Two => 32,
        },
        axis: AxisConfig::Time {
            mesh_cells: 0,
            dt_ladder: vec![],
            dt_ref: 0.0,
        },
    };
    match (dim, axis, tier) {
        (Dim::One, StudyAxis::Time, Preset::Paper) => {
            config.axis = AxisConfig::Time {
                mesh_cells: 128,
                dt_ladder: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4],
                dt_ref: 1e-6,
            };
        }
        (Dim::One, StudyAxis::Time, Preset::Desk) => {
            config.samples = 100;
            config.axis = AxisConfig::Time {
                mesh_cells: 128,
                dt_ladder: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4],
                dt_ref: 1e-5,
            };
        }
        (Dim::One, StudyAxis::Space, Preset::Paper) => {
            config.axis = AxisConfig::Space {
                cells_ladder: vec![16, 32, 64, 128, 256],
                cells_ref: 512,
                dt: 1e-5,
            };
        }
        (Dim::One, StudyAxis::Space, Preset::Desk) => {
            config.samples = 100;
            config.axis = AxisConfig::Space {
                cells_ladder: vec![16, 32, 64, 128, 256],
                cells_ref: 512,
                dt: 1e-5,
            };
        }
        (Dim::Two, StudyAxis::Time, Preset::Paper) => {
            config.axis = AxisConfig::Time {
                mesh_cells: 64,
                dt_ladder: vec![2.5e-4, 1.25e-4, 6.25e-5, 3.125e-5, 1.5625e-5],
                dt_ref: 1e-6,
            };
        }
        (Dim::Two, StudyAxis::Time, Preset::Desk) => {
            config.samples = 50;
            config.axis = AxisConfig::Time {
                mesh_cells: 32,
                dt_ladder: vec![2.5e-4, 1.25e-4, 6.25e-5, 3.125e-5],
                dt_ref: 1e-5,
            };
        }
        (Dim::Two, StudyAxis::Space, Preset::Paper) => {
            config.axis = AxisConfig::Space {
                cells_ladder: vec![8, 16, 32, 64, 128],
                cells_ref: 256,
                dt: 1e-4,
            };
        }
        (Dim::Two, StudyAxis::Space, Preset::Desk) => {
            config.samples = 50;
            config.axis = AxisConfig::Space {
                cells_ladder: vec![8, 16, 32, 64],
                cells_ref: 128,
                dt: 1e-4,
            };
        }
    }
    config
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ini_roundtrip_all_presets() {
        for dim in [Dim::One, Dim::Two] {
            for axis in [StudyAxis::Time, StudyAxis::Space] {
                for tier in [Preset::Paper, Preset::Desk] {
                    let config = preset(dim, axis, tier);
                    let text = to_ini(&config);
                    let back = from_ini(&text).unwrap();
                    assert_eq!(back, config, "{dim:?} {axis:?} {tier:?}\n{text}");
                }
            }
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let config = preset(Dim::One, StudyAxis::Time, Preset::Desk);
        let text = to_ini(&config) + "typo_key = 3\n";
        match from_ini(&text) {
            Err(ConfigError::UnknownKey { key, .. }) => assert_eq!(key, "typo_key"),
            other => panic!("expected UnknownKey, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_missing_keys_are_named() {
        let config = preset(Dim::One, StudyAxis::Time, Preset::Desk);
        let text = to_ini(&config) + "dt_ref = 0.001\n";
        assert!(matches!(
            from_ini(&text),
            Err(ConfigError::DuplicateKey { .. })
        ));

        let text = to_ini(&config).replace("delta = 0.5\n", "");
        match from_ini(&text) {
            Err(ConfigError::MissingKey { key, .. }) => assert_eq!(key, "delta"),
            other => panic!("expected MissingKey, got {other:?}"),
        }
    }

    #[test]
    fn axis_section_mismatch_detected() {
        let config = preset(Dim::One, StudyAxis::Time, Preset::Desk);
        let text = to_ini(&config).replace("axis = time", "axis = space");
        assert!(matches!(
            from_ini(&text),
            Err(ConfigError::AxisSectionMismatch { .. })
        ));
    }

    #[test]
    fn unknown_section_rejected() {
        let text = "[studyx]\ndim = 1\n";
        assert!(matches!(
            from_ini(text),
            Err(ConfigError::UnknownSection(_))
        ));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let config = preset(Dim::Two, StudyAxis::Space, Preset::Desk);
        let mut text = String::from("# leading comment\n\n; another\n");
        text.push_str(&to_ini(&config));
        assert_eq!(from_ini(&text).unwrap(), config);
    }
}
