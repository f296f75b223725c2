//! Pipeline configuration and its flat `key = value` file format.

use std::path::Path;

use serde::Serialize;

use crate::description::DescriptorParams;
use crate::detection::DetectorParams;
use crate::error::{Error, Result};
use crate::log_gabor::LogGaborParams;
use crate::matching::FscParams;
use crate::phase_congruency::{MomentWeightSign, PcParams};
use crate::template::TemplateParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub n_octaves: usize,
    pub n_scales: usize,
    pub n_orients: usize,
    /// Descriptor window side in layer pixels.
    pub window: usize,
    /// Descriptor subregions per side.
    pub subregions: usize,
    pub max_features: usize,
    /// Weight of the maximum moment in the detection map.
    pub tau: f64,
    pub moment_weight_sign: MomentWeightSign,
    pub fast_threshold: f64,
    pub template: bool,
    /// Secondary orientations.
    pub str1: bool,
    /// Odd and even index maps together.
    pub str2: bool,
    /// With both maps, also describe each feature anchored on the even map.
    pub cross_anchor: bool,
    pub fsc_tolerance: f64,
    pub fsc_iters: usize,
    pub seed: u64,
    pub template_window: usize,
    pub template_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_octaves: 4,
            n_scales: 4,
            n_orients: 12,
            window: 72,
            subregions: 6,
            max_features: 5000,
            tau: 0.75,
            moment_weight_sign: MomentWeightSign::AsPrinted,
            fast_threshold: 0.05,
            template: true,
            str1: true,
            str2: true,
            cross_anchor: true,
            fsc_tolerance: 3.0,
            fsc_iters: 2000,
            seed: 42,
            template_window: 64,
            template_threshold: 0.1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Format {
        what: "config",
        msg: format!("bad value {value:?} for {key}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Format {
            what: "config",
            msg: format!("bad boolean {value:?} for {key}"),
        }),
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_octaves", self.n_octaves),
            ("n_scales", self.n_scales),
            ("max_features", self.max_features),
            ("fsc_iters", self.fsc_iters),
            ("template_window", self.template_window),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive")));
        }
        if !(0.5..=1.0).contains(&self.tau) {
            return Err(Error::InvalidParameter(format!("tau {} outside [0.5, 1]", self.tau)));
        }
        if !(self.fsc_tolerance > 0.0) {
            return Err(Error::InvalidParameter("fsc_tolerance must be positive".into()));
        }
        self.log_gabor_params().validate()?;
        if self.template {
            self.log_gabor_params().with_orients(self.template_orients()).validate()?;
        }
        self.descriptor_params().validate()?;
        self.template_params().validate()
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_octaves" => self.n_octaves = parse(key, value)?,
            "n_scales" => self.n_scales = parse(key, value)?,
            "n_orients" => self.n_orients = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "subregions" => self.subregions = parse(key, value)?,
            "max_features" => self.max_features = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "moment_weight_sign" => self.moment_weight_sign = parse(key, value)?,
            "fast_threshold" => self.fast_threshold = parse(key, value)?,
            "template" => self.template = parse_bool(key, value)?,
            "str1" => self.str1 = parse_bool(key, value)?,
            "str2" => self.str2 = parse_bool(key, value)?,
            "cross_anchor" => self.cross_anchor = parse_bool(key, value)?,
            "fsc_tolerance" => self.fsc_tolerance = parse(key, value)?,
            "fsc_iters" => self.fsc_iters = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "template_window" => self.template_window = parse(key, value)?,
            "template_threshold" => self.template_threshold = parse(key, value)?,
            _ => {
                return Err(Error::Format {
                    what: "config",
                    msg: format!("unknown key {key:?}"),
                })
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Format {
                    what: "config",
                    msg: format!("line {} has no '='", n + 1),
                });
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn template_orients(&self) -> usize {
        self.n_orients / 2
    }

    pub fn log_gabor_params(&self) -> LogGaborParams {
        LogGaborParams {
            n_scales: self.n_scales,
            n_orients: self.n_orients,
            ..LogGaborParams::default()
        }
    }

    pub fn pc_params(&self) -> PcParams {
        PcParams {
            scale_step: self.log_gabor_params().scale_step,
            ..PcParams::default()
        }
    }

    pub fn detector_params(&self) -> DetectorParams {
        DetectorParams {
            threshold: self.fast_threshold,
            ..DetectorParams::default()
        }
    }

    pub fn descriptor_params(&self) -> DescriptorParams {
        DescriptorParams {
            window: self.window,
            n_sub: self.subregions,
            use_secondary: self.str1,
            double_map: self.str2,
            cross_anchor: self.cross_anchor,
            ..DescriptorParams::default()
        }
    }

    pub fn fsc_params(&self) -> FscParams {
        FscParams {
            tolerance: self.fsc_tolerance,
            max_iters: self.fsc_iters,
            seed: self.seed,
            ..FscParams::default()
        }
    }

    pub fn template_params(&self) -> TemplateParams {
        TemplateParams {
            window: self.template_window,
            accept_thresh: self.template_threshold,
            n_orients: self.template_orients(),
        }
    }
}
