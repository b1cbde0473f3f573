//! Study configuration: a flat `key = value` file plus `--set` overrides.
//!
//! Level lists hold base-2 exponents. `dt_levels = 4,5,6` means
//! `Δt = T·2^-4, T·2^-5, T·2^-6`, while `h_levels = 3` means `h = 1/8`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    ModelSpace,
    ModelTime,
    Tdr,
    Sdr,
    Total,
    DeterministicCn,
}

impl StudyKind {
    pub const ALL: [StudyKind; 6] = [
        StudyKind::ModelSpace,
        StudyKind::ModelTime,
        StudyKind::Tdr,
        StudyKind::Sdr,
        StudyKind::Total,
        StudyKind::DeterministicCn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::ModelSpace => "model-space",
            StudyKind::ModelTime => "model-time",
            StudyKind::Tdr => "tdr",
            StudyKind::Sdr => "sdr",
            StudyKind::Total => "total",
            StudyKind::DeterministicCn => "deterministic-cn",
        }
    }
}

impl FromStr for StudyKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        StudyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = StudyKind::ALL.iter().map(|k| k.name()).collect();
                CliError::Config(format!(
                    "unknown study `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Resolution being refined in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Dt,
    Dx,
    Dtau,
    H,
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            SweepAxis::Dt => "dt",
            SweepAxis::Dx => "dx",
            SweepAxis::Dtau => "dtau",
            SweepAxis::H => "h",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "dt" => Ok(SweepAxis::Dt),
            "dx" => Ok(SweepAxis::Dx),
            "dtau" => Ok(SweepAxis::Dtau),
            "h" => Ok(SweepAxis::H),
            _ => Err(CliError::Config(format!(
                "unknown axis `{s}` (expected dt, dx, dtau or h)"
            ))),
        }
    }
}

/// Spectral truncation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    /// Tail rule for modeling studies, `4·J★` for solver studies.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub axis: SweepAxis,
    pub horizon: f64,
    pub seed: u64,
    /// Monte Carlo samples per level; 0 disables the cross-check.
    pub samples: usize,
    pub k: Truncation,
    pub dt_levels: Vec<u32>,
    pub dx_levels: Vec<u32>,
    pub dtau_levels: Vec<u32>,
    pub h_levels: Vec<u32>,
    /// Number of finest levels used by the rate fit; `None` fits all.
    pub fit_window: Option<usize>,
    pub out: Option<PathBuf>,
}

const KEYS: [&str; 12] = [
    "study",
    "axis",
    "horizon",
    "seed",
    "samples",
    "k",
    "dt_levels",
    "dx_levels",
    "dtau_levels",
    "h_levels",
    "fit_window",
    "out",
];

fn range(lo: u32, hi: u32) -> Vec<u32> {
    (lo..=hi).collect()
}

impl StudyConfig {
    /// Default geometry for each study.
    pub fn defaults(study: StudyKind) -> Self {
        let base = Self {
            study,
            axis: SweepAxis::Dx,
            horizon: 1.0,
            seed: 0,
            samples: 0,
            k: Truncation::Auto,
            dt_levels: vec![16],
            dx_levels: vec![10],
            dtau_levels: vec![12],
            h_levels: vec![6],
            fit_window: Some(4),
            out: None,
        };
        match study {
            StudyKind::ModelSpace => Self {
                dx_levels: range(3, 8),
                fit_window: None,
                ..base
            },
            StudyKind::ModelTime => Self {
                axis: SweepAxis::Dt,
                dt_levels: range(4, 12),
                ..base
            },
            StudyKind::Tdr => Self {
                axis: SweepAxis::Dtau,
                dt_levels: vec![10],
                dtau_levels: range(4, 9),
                ..base
            },
            StudyKind::Sdr => Self {
                axis: SweepAxis::H,
                dt_levels: vec![12],
                h_levels: range(3, 7),
                ..base
            },
            StudyKind::Total => Self {
                axis: SweepAxis::H,
                dt_levels: vec![10],
                dtau_levels: vec![4, 6, 8, 10],
                h_levels: vec![2, 3, 4, 5],
                ..base
            },
            StudyKind::DeterministicCn => Self {
                axis: SweepAxis::Dtau,
                dtau_levels: range(4, 10),
                ..base
            },
        }
    }

    /// Parses file text, then applies `overrides` (each `key=value`).
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = split_pair(line).ok_or_else(|| {
                CliError::Config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                ))
            })?;
            if pairs.iter().any(|(seen, _)| *seen == k) {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key `{k}`",
                    lineno + 1
                )));
            }
            pairs.push((k, v));
        }
        for o in overrides {
            let (k, v) = split_pair(o)
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{o}`")))?;
            pairs.retain(|(seen, _)| *seen != k);
            pairs.push((k, v));
        }
        for (k, _) in &pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown key `{k}` (expected one of {})",
                    KEYS.join(", ")
                )));
            }
        }
        let study = match pairs.iter().find(|(k, _)| k == "study") {
            Some((_, v)) => v.parse()?,
            None => StudyKind::ModelSpace,
        };
        let mut cfg = Self::defaults(study);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |what: &str| CliError::Config(format!("`{key}`: {what} (got `{value}`)"));
        match key {
            "study" => self.study = value.parse()?,
            "axis" => self.axis = value.parse()?,
            "horizon" => self.horizon = value.parse().map_err(|_| bad("expected a number"))?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| bad("expected an unsigned integer"))?
            }
            "samples" => {
                self.samples = value
                    .parse()
                    .map_err(|_| bad("expected an unsigned integer"))?
            }
            "k" => {
                self.k = if value == "auto" {
                    Truncation::Auto
                } else {
                    Truncation::Fixed(
                        value
                            .parse()
                            .map_err(|_| bad("expected `auto` or an integer"))?,
                    )
                }
            }
            "dt_levels" => self.dt_levels = parse_levels(key, value)?,
            "dx_levels" => self.dx_levels = parse_levels(key, value)?,
            "dtau_levels" => self.dtau_levels = parse_levels(key, value)?,
            "h_levels" => self.h_levels = parse_levels(key, value)?,
            "fit_window" => {
                self.fit_window = if value == "all" {
                    None
                } else {
                    Some(
                        value
                            .parse()
                            .map_err(|_| bad("expected `all` or an integer"))?,
                    )
                }
            }
            "out" => {
                self.out = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        let err = |m: String| Err(CliError::Config(m));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return err(format!("horizon must be positive (got {})", self.horizon));
        }
        for (name, list) in [
            ("dt_levels", &self.dt_levels),
            ("dx_levels", &self.dx_levels),
            ("dtau_levels", &self.dtau_levels),
            ("h_levels", &self.h_levels),
        ] {
            if list.is_empty() {
                return err(format!("`{name}` must not be empty"));
            }
            if let Some(p) = list.iter().find(|&&p| p > 30) {
                return err(format!("`{name}`: exponent {p} is too large (max 30)"));
            }
        }
        if self.h_levels.contains(&0) {
            return err("`h_levels`: a mesh needs at least 2 intervals (exponent >= 1)".into());
        }
        let allowed: &[SweepAxis] = match self.study {
            StudyKind::ModelSpace => &[SweepAxis::Dx],
            StudyKind::ModelTime => &[SweepAxis::Dt],
            StudyKind::Tdr => &[SweepAxis::Dtau],
            StudyKind::Sdr => &[SweepAxis::H],
            StudyKind::Total => &[SweepAxis::H, SweepAxis::Dtau],
            StudyKind::DeterministicCn => &[SweepAxis::Dtau, SweepAxis::H],
        };
        if !allowed.contains(&self.axis) {
            let names: Vec<_> = allowed.iter().map(|a| a.name()).collect();
            return err(format!(
                "study `{}` sweeps {}; axis `{}` is not allowed",
                self.study,
                names.join(" or "),
                self.axis.name()
            ));
        }
        if let Truncation::Fixed(0) = self.k {
            return err("`k` must be positive".into());
        }
        if let Some(w) = self.fit_window {
            if w < 3 {
                return err(format!("`fit_window` must be at least 3 (got {w})"));
            }
        }
        let sweep_len = self.sweep_levels().len();
        if sweep_len < 3 {
            return err(format!(
                "the swept list `{}_levels` needs at least 3 levels for a rate fit",
                self.axis.name()
            ));
        }
        Ok(())
    }

    /// Exponents of the swept resolution.
    pub fn sweep_levels(&self) -> &[u32] {
        match self.axis {
            SweepAxis::Dt => &self.dt_levels,
            SweepAxis::Dx => &self.dx_levels,
            SweepAxis::Dtau => &self.dtau_levels,
            SweepAxis::H => &self.h_levels,
        }
    }

    /// Canonical text form: every key once, in a fixed order.
    pub fn serialize(&self) -> String {
        let list = |v: &[u32]| {
            v.iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        s.push_str(&format!("study = {}\n", self.study));
        s.push_str(&format!("axis = {}\n", self.axis.name()));
        s.push_str(&format!("horizon = {:?}\n", self.horizon));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("samples = {}\n", self.samples));
        match self.k {
            Truncation::Auto => s.push_str("k = auto\n"),
            Truncation::Fixed(k) => s.push_str(&format!("k = {k}\n")),
        }
        s.push_str(&format!("dt_levels = {}\n", list(&self.dt_levels)));
        s.push_str(&format!("dx_levels = {}\n", list(&self.dx_levels)));
        s.push_str(&format!("dtau_levels = {}\n", list(&self.dtau_levels)));
        s.push_str(&format!("h_levels = {}\n", list(&self.h_levels)));
        match self.fit_window {
            None => s.push_str("fit_window = all\n"),
            Some(w) => s.push_str(&format!("fit_window = {w}\n")),
        }
        if let Some(p) = &self.out {
            s.push_str(&format!("out = {}\n", p.display()));
        }
        s
    }
}

fn split_pair(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k.to_string(), v.trim().to_string()))
}

fn parse_levels(key: &str, value: &str) -> Result<Vec<u32>, CliError> {
    if value.is_empty() {
        return Err(CliError::Config(format!("`{key}` must not be empty")));
    }
    value
        .split(',')
        .map(|p| {
            p.trim().parse::<u32>().map_err(|_| {
                CliError::Config(format!(
                    "`{key}`: `{}` is not a nonnegative exponent",
                    p.trim()
                ))
            })
        })
        .collect()
}
