use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{COARSE_FACTORS, FINE_WINDOW, STANDARD_SHAPE};
use crate::image::{ClassMap, Shape};
use crate::io::sidecar::from_json_str;
use crate::mclahe::MclaheParams;

pub const DEFAULT_TIMEOUT_S: f64 = 600.0;
pub const DEFAULT_BBOX_MARGIN: usize = 8;

/// How a segmentation stage is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendSpec {
    /// Shell command with `{input}` and `{output}` placeholders. The input
    /// is a float32 NIfTI; the command must write a uint8 NIfTI to the
    /// output path and exit 0.
    External {
        command_template: String,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
    },
    /// Label 1 wherever the stage input is `>= threshold`.
    Threshold { threshold: f64 },
    /// Reads a stored mask. `{case_id}` in the path is substituted. A mask
    /// on the original scan grid is carried through the same pad/crop and
    /// pooling steps as the image.
    CopyFile { source_path: String },
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}

impl BackendSpec {
    pub fn validate(&self, key: &str) -> Result<()> {
        let bad = |field: &str, message: String| Error::Config {
            path: format!("{key}.{field}"),
            message,
        };
        match self {
            BackendSpec::External {
                command_template,
                timeout_s,
            } => {
                for ph in ["{input}", "{output}"] {
                    if !command_template.contains(ph) {
                        return Err(bad("command_template", format!("missing placeholder {ph}")));
                    }
                }
                if !(*timeout_s > 0.0 && timeout_s.is_finite()) {
                    return Err(bad("timeout_s", format!("{timeout_s} must be positive")));
                }
            }
            BackendSpec::Threshold { threshold } => {
                if !(0.0..=1.0).contains(threshold) {
                    return Err(bad("threshold", format!("{threshold} must lie in [0, 1]")));
                }
            }
            BackendSpec::CopyFile { source_path } => {
                if source_path.is_empty() {
                    return Err(bad("source_path", "must not be empty".into()));
                }
            }
        }
        Ok(())
    }
}

/// `true`/absent: enhance with default parameters; `false`: skip;
/// an object: enhance with those parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MclaheSetting {
    Enabled(bool),
    Params(MclaheParams),
}

impl Default for MclaheSetting {
    fn default() -> Self {
        MclaheSetting::Enabled(true)
    }
}

impl MclaheSetting {
    pub fn params(&self) -> Option<MclaheParams> {
        match self {
            MclaheSetting::Enabled(true) => Some(MclaheParams::default()),
            MclaheSetting::Enabled(false) => None,
            MclaheSetting::Params(p) => Some(p.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    /// Defaults to the image file name without `.nii`/`.nii.gz`.
    #[serde(default)]
    pub id: Option<String>,
    pub image: PathBuf,
    #[serde(default)]
    pub gt: Option<PathBuf>,
}

impl CaseSpec {
    pub fn case_id(&self) -> String {
        if let Some(id) = &self.id {
            return id.clone();
        }
        let name = self
            .image
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        for ext in [".nii.gz", ".nii"] {
            if let Some(stem) = name.strip_suffix(ext) {
                return stem.to_string();
            }
        }
        name
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub cases: Vec<CaseSpec>,
    pub output_dir: PathBuf,
    #[serde(default = "default_standard")]
    pub standard_shape: Shape,
    #[serde(default = "default_factors")]
    pub coarse_factors: [usize; 3],
    #[serde(default = "default_window")]
    pub fine_window: Shape,
    #[serde(default)]
    pub mclahe: MclaheSetting,
    pub coarse_backend: BackendSpec,
    pub fine_backend: BackendSpec,
    #[serde(default)]
    pub class_map: ClassMap,
    #[serde(default = "default_margin")]
    pub bbox_margin_vox: usize,
    #[serde(default)]
    pub workers: Option<usize>,
    /// gzip the emitted masks.
    #[serde(default = "default_true")]
    pub compress: bool,
}

fn default_standard() -> Shape {
    STANDARD_SHAPE
}
fn default_factors() -> [usize; 3] {
    COARSE_FACTORS
}
fn default_window() -> Shape {
    FINE_WINDOW
}
fn default_margin() -> usize {
    DEFAULT_BBOX_MARGIN
}
fn default_true() -> bool {
    true
}

impl PipelineConfig {
    /// Config with the default grids and MCLAHE for the given backends.
    pub fn new(cases: Vec<CaseSpec>, output_dir: impl Into<PathBuf>, coarse: BackendSpec, fine: BackendSpec) -> Self {
        PipelineConfig {
            cases,
            output_dir: output_dir.into(),
            standard_shape: STANDARD_SHAPE,
            coarse_factors: COARSE_FACTORS,
            fine_window: FINE_WINDOW,
            mclahe: MclaheSetting::default(),
            coarse_backend: coarse,
            fine_backend: fine,
            class_map: ClassMap::default(),
            bbox_margin_vox: DEFAULT_BBOX_MARGIN,
            workers: None,
            compress: true,
        }
    }

    /// Parses and validates; relative paths are kept as written.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = from_json_str(text).map_err(|m| {
            let (path, message) = m.split_once(": ").unwrap_or((".", m.as_str()));
            Error::Config {
                path: path.to_string(),
                message: message.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for c in &mut self.cases {
            fix(&mut c.image);
            if let Some(gt) = &mut c.gt {
                fix(gt);
            }
        }
        for b in [&mut self.coarse_backend, &mut self.fine_backend] {
            if let BackendSpec::CopyFile { source_path } = b {
                if Path::new(source_path).is_relative() {
                    *source_path = base.join(&*source_path).to_string_lossy().into_owned();
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| Error::Config {
            path: path.to_string(),
            message,
        };
        for (key, shape) in [
            ("standard_shape", self.standard_shape),
            ("coarse_factors", self.coarse_factors),
            ("fine_window", self.fine_window),
        ] {
            if shape.contains(&0) {
                return Err(bad(key, format!("{shape:?} must be positive")));
            }
        }
        if (0..3).any(|k| self.standard_shape[k] % self.coarse_factors[k] != 0) {
            return Err(bad(
                "coarse_factors",
                format!(
                    "{:?} does not divide standard_shape {:?}",
                    self.coarse_factors, self.standard_shape
                ),
            ));
        }
        if let MclaheSetting::Params(p) = &self.mclahe {
            p.validate().map_err(|e| bad("mclahe", e.to_string()))?;
        }
        self.coarse_backend.validate("coarse_backend")?;
        self.fine_backend.validate("fine_backend")?;
        self.class_map
            .validate()
            .map_err(|e| bad("class_map", e.to_string()))?;
        if self.workers == Some(0) {
            return Err(bad("workers", "must be at least 1".into()));
        }
        let mut seen = HashSet::new();
        for (i, c) in self.cases.iter().enumerate() {
            let id = c.case_id();
            if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
                return Err(bad(&format!("cases[{i}].id"), format!("`{id}` is not a usable case id")));
            }
            if !seen.insert(id.clone()) {
                return Err(bad(&format!("cases[{i}].id"), format!("duplicate case id `{id}`")));
            }
        }
        Ok(())
    }

    /// Shape the coarse backend sees.
    pub fn coarse_shape(&self) -> Shape {
        std::array::from_fn(|k| self.standard_shape[k] / self.coarse_factors[k])
    }
}
