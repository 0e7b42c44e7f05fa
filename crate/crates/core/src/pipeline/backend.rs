use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use wait_timeout::ChildExt;

use crate::error::{Error, Result};
use crate::geometry::{downsample_any, extract, Placement};
use crate::image::{LabelMap, Shape, Volume};
use crate::io::{read_label_map, write_volume};

pub use super::config::BackendSpec;

pub const TMPDIR_ENV: &str = "BIATRIUM_TMPDIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Coarse,
    Fine,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Coarse => "coarse",
            Stage::Fine => "fine",
        }
    }
}

/// What a backend needs to know beyond its input volume.
#[derive(Clone, Debug)]
pub struct StageContext {
    pub case_id: String,
    pub stage: Stage,
    /// Grid of the scan as read from disk.
    pub original_shape: Shape,
    /// Original grid to standard grid.
    pub standardize: Placement,
    /// Coarse pooling factors from the standard grid.
    pub coarse_factors: [usize; 3],
    /// Standard grid to fine window, for the fine stage.
    pub crop: Option<Placement>,
}

impl StageContext {
    /// Carries a mask on the original grid to this stage's grid.
    pub fn replay(&self, mask: &LabelMap) -> Result<LabelMap> {
        let std = extract(mask, &self.standardize, 0)?;
        match self.stage {
            Stage::Coarse => downsample_any(&std, self.coarse_factors, |v| v != 0),
            Stage::Fine => {
                let crop = self
                    .crop
                    .as_ref()
                    .ok_or_else(|| Error::Backend("fine stage has no crop placement".into()))?;
                extract(&std, crop, 0)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct BackendOutput {
    pub labels: LabelMap,
    /// Exit code of an external command; `None` for builtin kinds.
    pub exit_code: Option<i32>,
}

fn scratch_dir(case_id: &str, stage: Stage) -> Result<tempfile::TempDir> {
    let base = std::env::var_os(TMPDIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    tempfile::Builder::new()
        .prefix(&format!("biatrium-{case_id}-{}-", stage.as_str()))
        .tempdir_in(&base)
        .map_err(|e| Error::io(&base, e))
}

/// POSIX single-quote quoting.
pub fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Fills `{input}`, `{output}`, `{stage}` and `{case_id}`, each shell-quoted.
pub fn render_command(template: &str, input: &Path, output: &Path, case_id: &str, stage: Stage) -> String {
    // case id last so an id that happens to contain a placeholder stays literal
    template
        .replace("{input}", &shell_quote(&input.to_string_lossy()))
        .replace("{output}", &shell_quote(&output.to_string_lossy()))
        .replace("{stage}", stage.as_str())
        .replace("{case_id}", &shell_quote(case_id))
}

fn tail(text: &str, max: usize) -> String {
    let t = text.trim_end();
    match t.char_indices().rev().nth(max) {
        Some((i, _)) => format!("...{}", &t[i + 1..]),
        None => t.to_string(),
    }
}

fn run_external(template: &str, timeout_s: f64, input: &Volume, ctx: &StageContext) -> Result<(LabelMap, i32)> {
    let dir = scratch_dir(&ctx.case_id, ctx.stage)?;
    let in_path = dir.path().join("input.nii");
    let out_path = dir.path().join("output.nii");
    let err_path = dir.path().join("stderr.txt");
    write_volume(input, &in_path, false)?;
    let cmd = render_command(template, &in_path, &out_path, &ctx.case_id, ctx.stage);
    log::debug!("{} {} backend: {cmd}", ctx.case_id, ctx.stage.as_str());
    let stderr = File::create(&err_path).map_err(|e| Error::io(&err_path, e))?;
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(stderr)
        .spawn()
        .map_err(|e| Error::io("sh", e))?;
    let status = match child
        .wait_timeout(Duration::from_secs_f64(timeout_s))
        .map_err(|e| Error::io("sh", e))?
    {
        Some(s) => s,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::BackendTimeout(timeout_s));
        }
    };
    if !status.success() {
        let text = std::fs::read_to_string(&err_path).unwrap_or_default();
        return Err(Error::BackendExit {
            code: status.code(),
            stderr: tail(&text, 2000),
        });
    }
    if !out_path.exists() {
        return Err(Error::Backend(format!(
            "command exited 0 but wrote no output at {}",
            out_path.display()
        )));
    }
    let labels = read_label_map(&out_path)
        .map_err(|e| Error::Backend(format!("unparsable output: {e}")))?;
    Ok((labels, status.code().unwrap_or(0)))
}

/// Runs one segmentation stage and checks the result has `input`'s shape.
pub fn invoke_backend(spec: &BackendSpec, input: &Volume, ctx: &StageContext) -> Result<BackendOutput> {
    let expected = input.shape();
    let (mut labels, exit_code) = match spec {
        BackendSpec::External {
            command_template,
            timeout_s,
        } => {
            let (l, code) = run_external(command_template, *timeout_s, input, ctx)?;
            (l, Some(code))
        }
        BackendSpec::Threshold { threshold } => {
            let t = *threshold;
            (input.map(|v| u8::from(v as f64 >= t)), None)
        }
        BackendSpec::CopyFile { source_path } => {
            let path = source_path.replace("{case_id}", &ctx.case_id);
            let m = read_label_map(&path)?;
            let m = if m.shape() == expected {
                m
            } else if m.shape() == ctx.original_shape {
                ctx.replay(&m)?
            } else {
                m
            };
            (m, None)
        }
    };
    if labels.shape() != expected {
        return Err(Error::ShapeMismatch {
            context: "backend output vs stage input",
            left: labels.shape(),
            right: expected,
        });
    }
    if ctx.stage == Stage::Coarse {
        for v in labels.data_mut() {
            *v = u8::from(*v != 0);
        }
    }
    labels.set_spacing(input.spacing())?;
    labels.set_orientation(input.orientation().copied());
    Ok(BackendOutput { labels, exit_code })
}
