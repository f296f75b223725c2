//! Rotation and scale sweeps over synthetic pairs with known geometry.

use std::io::Write;
use std::path::Path;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{CheckpointSet, EvalReport};
use crate::image::GrayImage;
use crate::pipeline::{analyze, match_analyzed, ImageAnalysis, PipelineOutput};
use crate::synth::{planted_transform, IntensityRemap, SyntheticSource};

/// Checkpoints per side of the ground-truth grid.
const CHECKPOINT_GRID: usize = 5;
/// Checkpoint distance from image borders, in pixels.
const CHECKPOINT_MARGIN: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Rotation about the image centre, in degrees.
    Rotation,
    /// Reference-to-sensed size ratio.
    Scale,
}

impl SweepKind {
    /// `steps` rotations evenly covering `[0, 360)`, or `steps` ratios from 1 to 4 inclusive.
    pub fn values(self, steps: usize) -> Vec<f64> {
        match self {
            SweepKind::Rotation => (0..steps).map(|i| 360.0 * i as f64 / steps as f64).collect(),
            SweepKind::Scale if steps <= 1 => vec![1.0],
            SweepKind::Scale => (0..steps).map(|i| 1.0 + 3.0 * i as f64 / (steps - 1) as f64).collect(),
        }
    }
}

/// Geometry and intensity change of one synthetic case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Case {
    pub rotation_deg: f64,
    pub scale: f64,
    pub remap: Option<IntensityRemap>,
}

impl Case {
    pub fn rotation(deg: f64) -> Self {
        Self {
            rotation_deg: deg,
            scale: 1.0,
            remap: None,
        }
    }

    pub fn scale(k: f64) -> Self {
        Self {
            rotation_deg: 0.0,
            scale: k,
            remap: None,
        }
    }

    pub fn with_remap(self, remap: IntensityRemap) -> Self {
        Self {
            remap: Some(remap),
            ..self
        }
    }
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub case: Case,
    pub report: EvalReport,
    /// `None` when matching failed.
    pub output: Option<PipelineOutput>,
}

/// A synthetic source whose reference has been analyzed once for reuse across cases.
pub struct Harness {
    pub source: SyntheticSource,
    pub reference: GrayImage,
    pub analysis: ImageAnalysis,
    pub config: PipelineConfig,
    /// RMSE success threshold in pixels.
    pub threshold: f64,
}

impl Harness {
    pub fn new(source: SyntheticSource, config: PipelineConfig, threshold: f64) -> Result<Self> {
        config.validate()?;
        let reference = source.reference();
        let analysis = analyze(&reference, &config)?;
        Ok(Self {
            source,
            reference,
            analysis,
            config,
            threshold,
        })
    }

    /// Sensed image of a case and its ground-truth checkpoints.
    pub fn render(&self, case: Case) -> Result<(GrayImage, CheckpointSet)> {
        let (m, dims) = planted_transform(self.reference.dims(), case.rotation_deg, case.scale);
        let mut sen = self.source.render(&m, dims)?;
        if let Some(remap) = case.remap {
            sen = remap.apply(&sen)?;
        }
        let cps = self.source.checkpoints(&m, dims, CHECKPOINT_GRID, CHECKPOINT_MARGIN)?;
        Ok((sen, cps))
    }

    /// Scores a matcher outcome. Matching failures become unsuccessful reports;
    /// other errors propagate.
    pub fn evaluate(&self, case: Case, outcome: Result<PipelineOutput>, cps: &CheckpointSet) -> Result<CaseResult> {
        match outcome {
            Ok(out) => Ok(CaseResult {
                case,
                report: EvalReport::new(out.matches.len(), Some(&out.transform), cps, self.threshold)?,
                output: Some(out),
            }),
            Err(Error::FeatureStageFailed(_) | Error::NotEnoughMatches(_)) => Ok(CaseResult {
                case,
                report: EvalReport::new(0, None, cps, self.threshold)?,
                output: None,
            }),
            Err(e) => Err(e),
        }
    }

    /// Renders a case and runs the matcher on it.
    pub fn run(&self, case: Case) -> Result<CaseResult> {
        let (sen, cps) = self.render(case)?;
        let outcome = analyze(&sen, &self.config).and_then(|sa| match_analyzed(&self.analysis, &sa, &sen, &self.config));
        self.evaluate(case, outcome, &cps)
    }

    pub fn sweep(&self, kind: SweepKind, values: &[f64]) -> Result<Vec<SweepRow>> {
        values
            .iter()
            .map(|&v| {
                let case = match kind {
                    SweepKind::Rotation => Case::rotation(v),
                    SweepKind::Scale => Case::scale(v),
                };
                let r = self.run(case)?;
                Ok(SweepRow {
                    step_value: v,
                    nm: r.report.nm,
                    rmse: r.report.rmse,
                    success: r.report.success,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub step_value: f64,
    pub nm: usize,
    pub rmse: Option<f64>,
    pub success: bool,
}

pub fn write_csv(rows: &[SweepRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "step_value,nm,rmse,success")?;
    for r in rows {
        let rmse = r.rmse.map_or_else(|| "nan".to_string(), |v| format!("{v:.4}"));
        writeln!(out, "{},{},{},{}", r.step_value, r.nm, rmse, r.success)?;
    }
    Ok(())
}

pub fn write_csv_file(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(rows, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}
