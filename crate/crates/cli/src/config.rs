//! Experiment configuration files.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ssmlab::data::{InitSpec, SequenceSpec};
use ssmlab::optimize::OptimizerSpec;

/// A config problem, tagged with the dotted path of the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    /// `A = diag(1, 0, ..)`, unit `B`, `C`, dimension `d_star`.
    Canonical,
    /// Two-state realization of the canonical teacher of dimension `d_star`.
    TwoState,
    /// `A = diag(values)`, unit `B`, `C`.
    Diag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_star: Option<usize>,
    /// Width of the fixed teacher MLP head (`D_in = 1`, `D_hidden = I`,
    /// `D_out = 1/2`). Absent means no head.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_width: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadConfig {
    None,
    Mlp {
        d_h: usize,
        /// Standard deviation of the i.i.d. normal head initialization.
        sd: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentConfig {
    pub d: usize,
    /// Learn `B` and `C` alongside `A`.
    #[serde(default)]
    pub train_bc: bool,
    #[serde(default = "no_head")]
    pub head: HeadConfig,
}

fn no_head() -> HeadConfig {
    HeadConfig::None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataPreset {
    /// `S1 = {e_1}`, poisoned with `e_{kappa-1}`.
    S1S2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub kappa: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<DataPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<SequenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub special: Option<SequenceSpec>,
    /// Single-arm runs only: include the special sequences.
    #[serde(default)]
    pub use_special: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_gen_length")]
    pub gen_length: usize,
    #[serde(default = "default_test_set_size")]
    pub test_set_size: usize,
}

fn default_gen_length() -> usize {
    40
}

fn default_test_set_size() -> usize {
    2000
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { gen_length: default_gen_length(), test_set_size: default_test_set_size() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub teacher: TeacherConfig,
    pub student: StudentConfig,
    pub data: DataConfig,
    pub init: InitSpec,
    pub optimizer: OptimizerSpec,
    /// Optimizer for the arm that includes special sequences, if different.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer_special: Option<OptimizerSpec>,
    #[serde(default)]
    pub eval: EvalConfig,
    pub seeds: Vec<u64>,
    /// Run both arms (without and with special sequences) for every seed.
    #[serde(default)]
    pub compare: bool,
}

fn check_sequences(path: &str, spec: &SequenceSpec, kappa: usize) -> Result<(), ConfigError> {
    if spec.kappa != kappa {
        return Err(ConfigError::new(
            format!("{path}.kappa"),
            format!("{} does not match data.kappa {kappa}", spec.kappa),
        ));
    }
    if spec.count == 0 {
        return Err(ConfigError::new(format!("{path}.count"), "must be positive"));
    }
    spec.validate()
        .map_err(|e| ConfigError::new(format!("{path}.nonzero_indices"), e.to_string()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::new("", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Optimizer for one arm, with `train_bc` taken from the student.
    pub fn optimizer_for(&self, with_special: bool) -> OptimizerSpec {
        let base = if with_special { self.optimizer_special.as_ref() } else { None };
        let mut spec = base.unwrap_or(&self.optimizer).clone();
        spec.train_bc = self.student.train_bc;
        spec
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(ConfigError::new("name", "must be a non-empty file name stem"));
        }
        self.validate_teacher()?;
        self.validate_student()?;
        self.validate_data()?;
        self.init.validate().map_err(|e| ConfigError::new("init", e.to_string()))?;
        if self.init.d != self.student.d {
            return Err(ConfigError::new(
                "init.d",
                format!("{} does not match student.d {}", self.init.d, self.student.d),
            ));
        }
        for (path, o) in [("optimizer", Some(&self.optimizer)), ("optimizer_special", self.optimizer_special.as_ref())] {
            let Some(o) = o else { continue };
            o.validate().map_err(|e| ConfigError::new(path, e.to_string()))?;
            if o.train_bc {
                return Err(ConfigError::new(format!("{path}.train_bc"), "set student.train_bc instead"));
            }
        }
        if self.eval.gen_length == 0 {
            return Err(ConfigError::new("eval.gen_length", "must be positive"));
        }
        if self.eval.test_set_size == 0 {
            return Err(ConfigError::new("eval.test_set_size", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::new("seeds", "at least one seed is required"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(ConfigError::new("seeds", format!("duplicate seed {dup}")));
        }
        Ok(())
    }

    fn validate_teacher(&self) -> Result<(), ConfigError> {
        let t = &self.teacher;
        match t.kind {
            TeacherKind::Canonical | TeacherKind::TwoState => match t.d_star {
                Some(d) if d >= 2 => {}
                _ => return Err(ConfigError::new("teacher.d_star", "required and at least 2")),
            },
            TeacherKind::Diag => {
                if t.values.is_empty() || t.values.iter().any(|v| !v.is_finite()) {
                    return Err(ConfigError::new("teacher.values", "required, finite, non-empty"));
                }
            }
        }
        if t.head_width == Some(0) {
            return Err(ConfigError::new("teacher.head_width", "must be positive"));
        }
        Ok(())
    }

    fn validate_student(&self) -> Result<(), ConfigError> {
        if self.student.d == 0 {
            return Err(ConfigError::new("student.d", "must be positive"));
        }
        if let HeadConfig::Mlp { d_h, sd } = self.student.head {
            if d_h == 0 {
                return Err(ConfigError::new("student.head.mlp.d_h", "must be positive"));
            }
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(ConfigError::new("student.head.mlp.sd", "must be positive"));
            }
            match self.teacher.head_width {
                Some(w) if w == d_h => {}
                Some(w) => {
                    return Err(ConfigError::new(
                        "student.head.mlp.d_h",
                        format!("{d_h} does not match teacher.head_width {w}"),
                    ))
                }
                None => {
                    return Err(ConfigError::new("teacher.head_width", "required when the student has an MLP head"))
                }
            }
        }
        Ok(())
    }

    fn validate_data(&self) -> Result<(), ConfigError> {
        let data = &self.data;
        if data.kappa < 2 {
            return Err(ConfigError::new("data.kappa", "must be at least 2"));
        }
        match data.preset {
            Some(DataPreset::S1S2) => {
                if data.baseline.is_some() || data.special.is_some() {
                    return Err(ConfigError::new("data.preset", "s1_s2 excludes baseline and special"));
                }
                if self.teacher.head_width.is_some() {
                    return Err(ConfigError::new("teacher.head_width", "s1_s2 uses an SSM teacher without head"));
                }
            }
            None => {
                let base = data
                    .baseline
                    .as_ref()
                    .ok_or_else(|| ConfigError::new("data.baseline", "required without a preset"))?;
                check_sequences("data.baseline", base, data.kappa)?;
                if let Some(special) = &data.special {
                    check_sequences("data.special", special, data.kappa)?;
                } else if data.use_special || self.compare {
                    return Err(ConfigError::new("data.special", "required by use_special or compare"));
                }
            }
        }
        Ok(())
    }

    /// Applies `key=value` overrides used by sweeps.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let path = format!("--set {key}");
        let parse_usize = |v: &str| v.parse::<usize>().map_err(|e| ConfigError::new(&path, e.to_string()));
        match key {
            "d" => {
                let d = parse_usize(value)?;
                self.student.d = d;
                self.init.d = d;
            }
            "kappa" => {
                let k = parse_usize(value)?;
                self.data.kappa = k;
                for s in [&mut self.data.baseline, &mut self.data.special].into_iter().flatten() {
                    s.kappa = k;
                }
            }
            "base_lr" => {
                let lr = value.parse::<f64>().map_err(|e| ConfigError::new(&path, e.to_string()))?;
                self.optimizer.base_lr = lr;
                if let Some(o) = &mut self.optimizer_special {
                    o.base_lr = lr;
                }
            }
            _ => return Err(ConfigError::new(path, "unknown key (expected seeds, d, kappa or base_lr)")),
        }
        Ok(())
    }
}
