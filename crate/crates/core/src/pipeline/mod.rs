//! Coarse-to-fine driver. Per case: optional MCLAHE, standardize, pool to
//! the coarse grid, coarse backend, ROI box, fine crop, fine backend, and
//! stitch back to the scan grid.

pub mod backend;
pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{bbox_from_mask, crop_window, downsample_mean, standardize, stitch, BBox, Placement};
use crate::io::{read_label_map, read_volume, write_label_map, write_placement};
use crate::io::sidecar::write_json;
use crate::mclahe::mclahe;
use crate::metrics::report::{summary_csv, MetricReport, SummaryRow};
use crate::metrics::{evaluate_case, PointMode};

pub use backend::{invoke_backend, BackendOutput, Stage, StageContext, TMPDIR_ENV};
pub use config::{BackendSpec, CaseSpec, MclaheSetting, PipelineConfig};

pub const FLAG_EMPTY_COARSE: &str = "empty_coarse_mask";
pub const FLAG_ROI_EXCEEDS_WINDOW: &str = "roi_exceeds_window";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Ok,
    Failed,
}

impl CaseStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseStatus::Ok => "ok",
            CaseStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BackendExits {
    pub coarse: Option<i32>,
    pub fine: Option<i32>,
}

/// Outcome of one case; written as `result.json` in the case directory.
#[derive(Clone, Debug, Serialize)]
pub struct CaseResult {
    pub case_id: String,
    pub status: CaseStatus,
    pub mask_path: Option<PathBuf>,
    pub standardize: Option<Placement>,
    pub crop: Option<Placement>,
    /// Tight box of the coarse mask, coarse grid.
    pub coarse_bbox: Option<BBox>,
    /// Coarse box scaled to the standard grid plus margin.
    pub roi_bbox: Option<BBox>,
    pub flags: Vec<String>,
    pub backend_exit: BackendExits,
    pub timings_ms: BTreeMap<&'static str, f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub metrics: Option<MetricReport>,
}

impl CaseResult {
    fn new(case_id: String) -> Self {
        CaseResult {
            case_id,
            status: CaseStatus::Failed,
            mask_path: None,
            standardize: None,
            crop: None,
            coarse_bbox: None,
            roi_bbox: None,
            flags: Vec::new(),
            backend_exit: BackendExits::default(),
            timings_ms: BTreeMap::new(),
            error: None,
            metrics: None,
        }
    }

    pub fn summary_row(&self) -> SummaryRow {
        SummaryRow::from_report(&self.case_id, self.status.as_str(), self.metrics.as_ref())
    }
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub cases: Vec<CaseResult>,
    pub summary_path: PathBuf,
}

impl PipelineResult {
    pub fn all_ok(&self) -> bool {
        self.cases.iter().all(|c| c.status == CaseStatus::Ok)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CaseResult> {
        self.cases.iter().filter(|c| c.status == CaseStatus::Failed)
    }
}

struct Timer<'a> {
    start: Instant,
    out: &'a mut BTreeMap<&'static str, f64>,
}

impl<'a> Timer<'a> {
    fn new(out: &'a mut BTreeMap<&'static str, f64>) -> Self {
        Timer {
            start: Instant::now(),
            out,
        }
    }

    fn lap(&mut self, name: &'static str) {
        let now = Instant::now();
        self.out.insert(name, (now - self.start).as_secs_f64() * 1e3);
        self.start = now;
    }
}

pub fn case_dir(cfg: &PipelineConfig, case_id: &str) -> PathBuf {
    cfg.output_dir.join(case_id)
}

fn mask_name(cfg: &PipelineConfig) -> &'static str {
    if cfg.compress {
        "mask.nii.gz"
    } else {
        "mask.nii"
    }
}

/// Runs every stage for one case. Failures are recorded in the result
/// rather than returned, so a batch keeps going.
pub fn run_case(cfg: &PipelineConfig, case: &CaseSpec) -> CaseResult {
    let mut res = CaseResult::new(case.case_id());
    let dir = case_dir(cfg, &res.case_id);
    let outcome = std::fs::create_dir_all(&dir)
        .map_err(|e| Error::io(&dir, e))
        .and_then(|_| run_stages(cfg, case, &dir, &mut res));
    match outcome {
        Ok(()) => res.status = CaseStatus::Ok,
        Err(e) => {
            log::error!("case {}: {e}", res.case_id);
            res.error = Some(e.to_string());
        }
    }
    if let Err(e) = write_json(&res, dir.join("result.json")) {
        log::error!("case {}: cannot write result.json: {e}", res.case_id);
        res.status = CaseStatus::Failed;
        res.error.get_or_insert_with(|| e.to_string());
    }
    res
}

fn run_stages(cfg: &PipelineConfig, case: &CaseSpec, dir: &Path, res: &mut CaseResult) -> Result<()> {
    let mut timings = BTreeMap::new();
    let outcome = stages(cfg, case, dir, res, &mut timings);
    res.timings_ms = timings;
    outcome
}

fn stages(
    cfg: &PipelineConfig,
    case: &CaseSpec,
    dir: &Path,
    res: &mut CaseResult,
    timings: &mut BTreeMap<&'static str, f64>,
) -> Result<()> {
    let mut t = Timer::new(timings);
    let scan = read_volume(&case.image)?;
    scan.check_finite()?;
    let original_shape = scan.shape();
    let spacing = scan.spacing();
    let orientation = scan.orientation().copied();
    t.lap("read");

    // 1. enhancement
    let enhanced = match cfg.mclahe.params() {
        Some(p) => mclahe(&scan, &p)?,
        None => scan,
    };
    t.lap("mclahe");

    // 2. standard grid, 3. coarse grid
    let (std_vol, std_place) = standardize(&enhanced, cfg.standard_shape, 0.0)?;
    drop(enhanced);
    res.standardize = Some(std_place);
    write_placement(&std_place, dir.join("standardize.json"))?;
    let coarse_vol = downsample_mean(&std_vol, cfg.coarse_factors)?;
    t.lap("standardize");

    // 4. coarse backend
    let mut ctx = StageContext {
        case_id: res.case_id.clone(),
        stage: Stage::Coarse,
        original_shape,
        standardize: std_place,
        coarse_factors: cfg.coarse_factors,
        crop: None,
    };
    let coarse = invoke_backend(&cfg.coarse_backend, &coarse_vol, &ctx)?;
    res.backend_exit.coarse = coarse.exit_code;
    t.lap("coarse_backend");

    // 5. ROI box on the standard grid, 6. fine crop
    let center = match bbox_from_mask(&coarse.labels, &[1]) {
        Ok(b) => {
            let roi = b.scale(cfg.coarse_factors).expand(cfg.bbox_margin_vox, cfg.standard_shape);
            if (0..3).any(|k| roi.size()[k] > cfg.fine_window[k]) {
                log::warn!("case {}: ROI {:?} larger than fine window", res.case_id, roi.size());
                res.flags.push(FLAG_ROI_EXCEEDS_WINDOW.into());
            }
            res.coarse_bbox = Some(b);
            res.roi_bbox = Some(roi);
            roi.center()
        }
        Err(Error::NoForeground) => {
            log::warn!("case {}: empty coarse mask, centring the fine window", res.case_id);
            res.flags.push(FLAG_EMPTY_COARSE.into());
            cfg.standard_shape.map(|n| (n / 2) as i64)
        }
        Err(e) => return Err(e),
    };
    let (fine_vol, crop_place) = crop_window(&std_vol, center, cfg.fine_window, 0.0)?;
    drop(std_vol);
    res.crop = Some(crop_place);
    write_placement(&crop_place, dir.join("crop.json"))?;
    t.lap("crop");

    // 7. fine backend
    ctx.stage = Stage::Fine;
    ctx.crop = Some(crop_place);
    let fine = invoke_backend(&cfg.fine_backend, &fine_vol, &ctx)?;
    res.backend_exit.fine = fine.exit_code;
    cfg.class_map.check_labels(&fine.labels)?;
    t.lap("fine_backend");

    // 8. back to the scan grid
    let mut mask = stitch(&stitch(&fine.labels, &crop_place)?, &std_place)?;
    mask.set_spacing(spacing)?;
    mask.set_orientation(orientation);
    let mask_path = dir.join(mask_name(cfg));
    write_label_map(&mask, &mask_path, cfg.compress)?;
    res.mask_path = Some(mask_path);
    t.lap("stitch");

    if let Some(gt_path) = &case.gt {
        let gt = read_label_map(gt_path)?;
        let report = evaluate_case(&res.case_id, &mask, &gt, &cfg.class_map, PointMode::Surface)?;
        report.write_csv(dir.join("metrics.csv"), false)?;
        res.metrics = Some(report);
        t.lap("evaluate");
    }
    Ok(())
}

/// Runs all cases on a pool of `cfg.workers` threads (rayon default when
/// unset) and writes `summary.csv` in case order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineResult> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
    let cases: Vec<CaseResult> = pool.install(|| cfg.cases.par_iter().map(|c| run_case(cfg, c)).collect());
    let rows: Vec<SummaryRow> = cases.iter().map(CaseResult::summary_row).collect();
    let summary_path = cfg.output_dir.join("summary.csv");
    std::fs::write(&summary_path, summary_csv(&rows, false)?).map_err(|e| Error::io(&summary_path, e))?;
    Ok(PipelineResult { cases, summary_path })
}
