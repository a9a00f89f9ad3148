//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! task = image
//! widths = 8, 16, 24, 32
//! epochs = 2000, 2000, 2000, 2000
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use snf_core::net::{GrowInit, DEFAULT_OMEGA0};
use snf_core::signal::{Sampling, StripOrder};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Sinusoid,
    Image,
    Video,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Progressive,
    Slimmable,
    Individual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growing {
    Spectral,
    Spatial,
    Temporal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub mode: Mode,
    pub growing: Growing,
    pub depth: usize,
    pub widths: Vec<usize>,
    pub epochs: Vec<usize>,
    pub lr: f64,
    pub seed: u64,
    pub omega0: f64,
    /// Image file or frame directory. A video task without one uses a
    /// synthetic moving square.
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    pub strips: usize,
    pub strip_order: StripOrder,
    /// Frames in the whole video plan.
    pub frames: usize,
    /// Side length of the synthetic video.
    pub frame_size: usize,
    pub samples: usize,
    pub sampling: Sampling,
    pub batch_size: Option<usize>,
    pub log_every: usize,
    pub init_mode: GrowInit,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Image,
            mode: Mode::Progressive,
            growing: Growing::Spectral,
            depth: 3,
            widths: Vec::new(),
            epochs: Vec::new(),
            lr: 2e-4,
            seed: 0,
            omega0: DEFAULT_OMEGA0,
            input: None,
            output: PathBuf::from("out"),
            strips: 2,
            strip_order: StripOrder::LeftToRight,
            frames: 8,
            frame_size: 32,
            samples: 1024,
            sampling: Sampling::Regular,
            batch_size: None,
            log_every: 100,
            init_mode: GrowInit::Zero,
        }
    }
}

fn keyword<T: Copy>(value: &str, options: &[(&str, T)]) -> Result<T, String> {
    options.iter().find(|(name, _)| *name == value).map(|&(_, v)| v).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        format!("expected one of {}, got {value:?}", names.join("|"))
    })
}

fn number<T: FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("invalid number {value:?}"))
}

fn list(value: &str) -> Result<Vec<usize>, String> {
    value.split(',').map(|s| number(s.trim())).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        let mut lr_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| ConfigError::Line { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) =
                content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            let set = |cfg: &mut RunConfig| -> Result<(), String> {
                match key {
                    "task" => {
                        cfg.task = keyword(
                            value,
                            &[("sinusoid", Task::Sinusoid), ("image", Task::Image), ("video", Task::Video)],
                        )?
                    }
                    "mode" => {
                        cfg.mode = keyword(
                            value,
                            &[
                                ("progressive", Mode::Progressive),
                                ("slimmable", Mode::Slimmable),
                                ("individual", Mode::Individual),
                            ],
                        )?
                    }
                    "growing" => {
                        cfg.growing = keyword(
                            value,
                            &[
                                ("spectral", Growing::Spectral),
                                ("spatial", Growing::Spatial),
                                ("temporal", Growing::Temporal),
                            ],
                        )?
                    }
                    "depth" => cfg.depth = number(value)?,
                    "widths" => cfg.widths = list(value)?,
                    "epochs" => cfg.epochs = list(value)?,
                    "lr" => cfg.lr = number(value)?,
                    "seed" => cfg.seed = number(value)?,
                    "omega0" => cfg.omega0 = number(value)?,
                    "input" => cfg.input = Some(PathBuf::from(value)),
                    "output" => cfg.output = PathBuf::from(value),
                    "strips" => cfg.strips = number(value)?,
                    "strip_order" => {
                        cfg.strip_order = keyword(
                            value,
                            &[("left-to-right", StripOrder::LeftToRight), ("center-out", StripOrder::CenterOut)],
                        )?
                    }
                    "frames" => cfg.frames = number(value)?,
                    "frame_size" => cfg.frame_size = number(value)?,
                    "samples" => cfg.samples = number(value)?,
                    "sampling" => {
                        cfg.sampling = keyword(value, &[("regular", Sampling::Regular), ("random", Sampling::Random)])?
                    }
                    "batch_size" => {
                        cfg.batch_size = if value == "full" { None } else { Some(number(value)?) };
                    }
                    "log_every" => cfg.log_every = number(value)?,
                    "init_mode" => {
                        cfg.init_mode = keyword(value, &[("zero", GrowInit::Zero), ("siren", GrowInit::Siren)])?
                    }
                    _ => return Err(format!("unknown key {key:?}")),
                }
                Ok(())
            };
            set(&mut cfg).map_err(err)?;
            lr_set |= key == "lr";
        }
        if !lr_set && cfg.task == Task::Sinusoid {
            cfg.lr = 1e-4;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
        let mut cfg = RunConfig::parse(&text)?;
        // relative inputs are resolved against the config's directory
        if let (Some(input), Some(dir)) = (&cfg.input, path.parent()) {
            if input.is_relative() && !input.exists() {
                cfg.input = Some(dir.join(input));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.widths.is_empty() {
            return bad("widths must list at least one width");
        }
        if self.widths.len() != self.epochs.len() {
            return bad("widths and epochs must have the same length");
        }
        if self.mode != Mode::Individual && self.widths.windows(2).any(|w| w[0] >= w[1]) {
            return bad("widths must be strictly increasing");
        }
        if self.widths.contains(&0) || self.epochs.contains(&0) || self.depth == 0 {
            return bad("depth, widths and epochs must be positive");
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.omega0.is_nan() || self.omega0 <= 0.0 {
            return bad("lr and omega0 must be positive");
        }
        if self.log_every == 0 || self.batch_size == Some(0) {
            return bad("log_every and batch_size must be positive");
        }
        let stages = self.widths.len();
        match (self.task, self.growing) {
            (_, Growing::Spectral) => {}
            (Task::Image, Growing::Spatial) if self.strips == stages => {}
            (Task::Image, Growing::Spatial) => return bad("spatial growing needs one strip per stage"),
            (Task::Video, Growing::Temporal) if self.frames % stages == 0 && self.frames > 0 => {}
            (Task::Video, Growing::Temporal) => return bad("frames must split evenly across the stages"),
            _ => return bad("spatial growing needs an image task, temporal growing a video task"),
        }
        if self.mode != Mode::Progressive && self.growing != Growing::Spectral {
            return bad("spatial and temporal growing run in progressive mode only");
        }
        if self.task == Task::Image && self.input.is_none() {
            return bad("image tasks need an input file");
        }
        if self.task == Task::Sinusoid && self.samples < 2 {
            return bad("sinusoid needs at least two samples");
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.widths.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINE: &str = "task = sinusoid\nwidths = 10, 20, 30, 40\nepochs = 150, 150, 150, 150\n";

    #[test]
    fn sinusoid_defaults_to_its_own_rate() {
        let cfg = RunConfig::parse(SINE).unwrap();
        assert_eq!(cfg.lr, 1e-4);
        assert_eq!(cfg.depth, 3);
        assert_eq!(cfg.widths, vec![10, 20, 30, 40]);
    }

    #[test]
    fn errors_name_the_line() {
        let e = RunConfig::parse("task = sinusoid\n\nwidht = 3\n").unwrap_err();
        assert_eq!(e, ConfigError::Line { line: 3, message: "unknown key \"widht\"".into() });
        let e = RunConfig::parse("task = sinusoid\nlr = fast\n").unwrap_err();
        assert!(matches!(e, ConfigError::Line { line: 2, .. }));
        let e = RunConfig::parse("task = sinusoid\ntask = image\n").unwrap_err();
        assert!(matches!(e, ConfigError::Line { line: 2, .. }));
        assert!(matches!(RunConfig::parse("no equals sign"), Err(ConfigError::Line { line: 1, .. })));
    }

    #[test]
    fn mismatched_lists_rejected() {
        let e = RunConfig::parse("task = sinusoid\nwidths = 1, 2\nepochs = 5\n").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid(_)));
    }

    #[test]
    fn single_width_individual() {
        let cfg = RunConfig::parse("task = sinusoid\nmode = individual\nwidths = 26\nepochs = 10\n").unwrap();
        assert_eq!(cfg.mode, Mode::Individual);
    }
}
