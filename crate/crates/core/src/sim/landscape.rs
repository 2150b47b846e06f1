use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::{AccelConfig, Conditioning, KeyAttributes, Resolution};

#[derive(Debug, Error)]
pub enum LandscapeError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("landscape parse error: {0}")]
    Parse(String),
    #[error("invalid landscape: {0}")]
    Invalid(String),
}

/// Baseline behaviour of one pipeline family, plus the attribute values a
/// script gets when it does not set them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineProfile {
    pub pipeline_class: String,
    pub model_id: String,
    pub scheduler_class: String,
    pub resolution: Resolution,
    pub conditioning: Conditioning,
    /// Reference number of denoising steps.
    pub n_base: u32,
    /// Seconds per denoising step.
    pub t_step: f64,
    /// Baseline quality score.
    pub q0: f64,
}

impl PipelineProfile {
    pub fn default_attributes(&self) -> KeyAttributes {
        KeyAttributes {
            pipeline_class: self.pipeline_class.clone(),
            model_id: self.model_id.clone(),
            scheduler_class: self.scheduler_class.clone(),
            num_inference_steps: self.n_base,
            resolution: self.resolution,
            conditioning: self.conditioning,
            preprocessors: Default::default(),
            accel_methods: Default::default(),
        }
    }

    /// Mean latency of the unaccelerated pipeline at `n` steps.
    pub fn base_time(&self, n: u32) -> f64 {
        f64::from(n) * self.t_step
    }
}

/// Quality cost coefficients, in score units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConstants {
    pub k_tm: f64,
    pub k_fr: f64,
    pub k_ga: f64,
    pub k_st: f64,
}

/// Per-sample noise half-widths.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    #[serde(default)]
    pub time: f64,
    #[serde(default)]
    pub quality: f64,
}

/// Speed multiplier and additive quality change of a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Effect {
    pub speed_mult: f64,
    pub quality_delta: f64,
}

impl Effect {
    pub const IDENTITY: Effect = Effect { speed_mult: 1.0, quality_delta: 0.0 };

    pub fn compose(self, other: Effect) -> Effect {
        Effect {
            speed_mult: self.speed_mult * other.speed_mult,
            quality_delta: self.quality_delta + other.quality_delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimLandscape {
    #[serde(default)]
    pub name: String,
    pub curves: CurveConstants,
    #[serde(default)]
    pub noise: Noise,
    #[serde(rename = "pipeline")]
    pub pipelines: Vec<PipelineProfile>,
}

pub fn token_merging_effect(c: &CurveConstants, r: f64) -> Effect {
    Effect {
        speed_mult: 1.0 / (1.0 - 0.5 * r),
        quality_delta: -c.k_tm * r * r,
    }
}

pub fn feature_reuse_effect(c: &CurveConstants, k: u32) -> Effect {
    let frac = 1.0 - 1.0 / f64::from(k);
    Effect {
        speed_mult: 1.0 + 0.6 * frac,
        quality_delta: -c.k_fr * frac,
    }
}

pub fn gated_activation_effect(c: &CurveConstants, g: u32, n: u32) -> Effect {
    let frac = 1.0 - f64::from(g) / f64::from(n);
    Effect {
        speed_mult: 1.0 + 0.3 * frac,
        quality_delta: -c.k_ga * frac * frac,
    }
}

pub fn half_precision_effect(q0: f64) -> Effect {
    Effect {
        speed_mult: 1.6,
        quality_delta: -0.002 * q0,
    }
}

/// Quality cost of running fewer steps than `n_base`. The time saving is
/// already in `n * t_step`.
pub fn step_quality_delta(c: &CurveConstants, n: u32, n_base: u32) -> f64 {
    let frac = (1.0 - f64::from(n) / f64::from(n_base)).max(0.0);
    -c.k_st * frac * frac
}

impl SimLandscape {
    pub fn from_toml_str(text: &str) -> Result<Self, LandscapeError> {
        let l: SimLandscape = toml::from_str(text).map_err(|e| LandscapeError::Parse(e.to_string()))?;
        l.check()?;
        Ok(l)
    }

    pub fn load(path: &Path) -> Result<Self, LandscapeError> {
        let text = std::fs::read_to_string(path).map_err(|source| LandscapeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("landscape serializes")
    }

    /// The bundled default landscape.
    pub fn builtin() -> Self {
        Self::from_toml_str(include_str!("../../data/landscape.toml")).expect("bundled landscape is valid")
    }

    fn check(&self) -> Result<(), LandscapeError> {
        let c = &self.curves;
        if [c.k_tm, c.k_fr, c.k_ga, c.k_st].iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
            return Err(LandscapeError::Invalid("curve constants must be finite and non-negative".into()));
        }
        if !(self.noise.time >= 0.0 && self.noise.quality >= 0.0) {
            return Err(LandscapeError::Invalid("noise must be non-negative".into()));
        }
        if self.pipelines.is_empty() {
            return Err(LandscapeError::Invalid("no pipelines".into()));
        }
        for p in &self.pipelines {
            if !(p.t_step > 0.0) || !(p.q0 > 0.0) || p.n_base == 0 {
                return Err(LandscapeError::Invalid(format!(
                    "{}: t_step, q0 and n_base must be positive",
                    p.pipeline_class
                )));
            }
        }
        Ok(())
    }

    pub fn profile(&self, pipeline_class: &str) -> Option<&PipelineProfile> {
        self.pipelines.iter().find(|p| p.pipeline_class == pipeline_class)
    }

    /// Composed method effect at `n` steps, step-count quality cost included.
    pub fn effect(&self, profile: &PipelineProfile, accel: &AccelConfig, n: u32) -> Effect {
        let c = &self.curves;
        let mut e = Effect {
            speed_mult: 1.0,
            quality_delta: step_quality_delta(c, n, profile.n_base),
        };
        if let Some(r) = accel.merge_ratio {
            e = e.compose(token_merging_effect(c, r));
        }
        if let Some(k) = accel.cache_interval {
            e = e.compose(feature_reuse_effect(c, k));
        }
        if let Some(g) = accel.gate_step {
            e = e.compose(gated_activation_effect(c, g, n));
        }
        if accel.half_precision {
            e = e.compose(half_precision_effect(profile.q0));
        }
        e
    }

    /// Noise-free mean latency and quality of `attrs`.
    pub fn expected(&self, profile: &PipelineProfile, attrs: &KeyAttributes) -> (f64, f64) {
        let n = attrs.num_inference_steps;
        let e = self.effect(profile, &attrs.accel_config(), n);
        (profile.base_time(n) / e.speed_mult, profile.q0 + e.quality_delta)
    }

    /// Per-sample (latency, quality) for `attrs`. Deterministic in `seed`.
    pub fn sample(&self, profile: &PipelineProfile, attrs: &KeyAttributes, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let (t, q) = self.expected(profile, attrs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut times = Vec::with_capacity(n);
        let mut quality = Vec::with_capacity(n);
        for _ in 0..n {
            let ut: f64 = rng.random_range(-1.0..=1.0);
            let uq: f64 = rng.random_range(-1.0..=1.0);
            times.push((t + self.noise.time * ut).max(1e-6));
            quality.push(q + self.noise.quality * uq);
        }
        (times, quality)
    }

    /// A random but well-formed landscape over the given pipeline classes,
    /// for property tests and benches.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let curves = CurveConstants {
            k_tm: rng.random_range(0.5..8.0),
            k_fr: rng.random_range(0.3..4.0),
            k_ga: rng.random_range(0.5..6.0),
            k_st: rng.random_range(0.5..10.0),
        };
        let templates = [
            ("StableDiffusionPipeline", "stable-diffusion-v1-5", Conditioning::Text2img, 512),
            ("StableDiffusionXLPipeline", "stable-diffusion-xl-base-1.0", Conditioning::Text2img, 1024),
            ("DiTPipeline", "DiT-XL-2-256", Conditioning::Class2img, 256),
        ];
        let pipelines = templates
            .iter()
            .map(|&(class, model, cond, side)| PipelineProfile {
                pipeline_class: class.into(),
                model_id: model.into(),
                scheduler_class: "DDIMScheduler".into(),
                resolution: Resolution::new(side, side),
                conditioning: cond,
                n_base: 10 * rng.random_range(2..=5u32),
                t_step: rng.random_range(0.01..0.2),
                q0: rng.random_range(20.0..35.0),
            })
            .collect();
        SimLandscape {
            name: format!("random-{seed}"),
            curves,
            noise: Noise::default(),
            pipelines,
        }
    }
}
