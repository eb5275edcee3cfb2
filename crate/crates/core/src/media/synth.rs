//! Procedural clips with known degradations, for training and testing
//! without a human-rated dataset.
//!
//! Each clip is a moving scene (drifting fine gratings under sharp-edged
//! moving shapes that carry their own fine texture, with a random global
//! contrast) passed through three degradations:
//!
//! * Gaussian blur of standard deviation `blur_sigma` pixels,
//! * additive Gaussian noise of standard deviation `noise_level` (8-bit units),
//! * per-frame global translation ("shake") of up to `shake_amplitude` pixels.
//!
//! Blur and noise act on pixel neighbourhoods and are only fully visible at
//! native resolution; shake is a global inter-frame displacement.
//!
//! The pseudo-MOS is
//!
//! ```text
//! mos = 5 - (2.0 * blur/3.0 + 1.2 * noise/30.0 + 0.8 * shake/8.0)
//! ```
//!
//! with each normalized term clamped to `[0, 1]`, so `mos` spans `[1, 5]`
//! and strictly decreases as any degradation grows inside its scale.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{assign_splits, save_clip, Manifest, ManifestEntry, SplitFractions, VideoClip};
use crate::{Error, Result};

pub const MOS_MAX: f64 = 5.0;
pub const MOS_MIN: f64 = 1.0;
pub const BLUR_SIGMA_SCALE: f64 = 3.0;
pub const NOISE_LEVEL_SCALE: f64 = 30.0;
pub const SHAKE_SCALE: f64 = 8.0;

const BLUR_WEIGHT: f64 = 2.0;
const NOISE_WEIGHT: f64 = 1.2;
const SHAKE_WEIGHT: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Degradation {
    pub blur_sigma: f64,
    pub noise_level: f64,
    pub shake_amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLabel {
    pub mos: f64,
    pub degradation: Degradation,
}

pub fn mos_for(d: &Degradation) -> f64 {
    let norm = |v: f64, scale: f64| (v / scale).clamp(0.0, 1.0);
    let penalty = BLUR_WEIGHT * norm(d.blur_sigma, BLUR_SIGMA_SCALE)
        + NOISE_WEIGHT * norm(d.noise_level, NOISE_LEVEL_SCALE)
        + SHAKE_WEIGHT * norm(d.shake_amplitude, SHAKE_SCALE);
    (MOS_MAX - penalty).clamp(MOS_MIN, MOS_MAX)
}

/// Ranges the per-clip degradations are drawn from, plus clip geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistortionProfile {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub fps: f32,
    pub blur_sigma: [f64; 2],
    pub noise_level: [f64; 2],
    pub shake_amplitude: [f64; 2],
    /// Probability that a clip is shaken at all.
    pub shake_probability: f64,
}

impl Default for DistortionProfile {
    fn default() -> Self {
        Self::mixed()
    }
}

impl DistortionProfile {
    /// All three degradations active.
    pub fn mixed() -> Self {
        Self {
            frames: 8,
            height: 256,
            width: 256,
            fps: 30.0,
            blur_sigma: [0.0, BLUR_SIGMA_SCALE],
            noise_level: [0.0, 20.0],
            shake_amplitude: [0.0, SHAKE_SCALE],
            shake_probability: 0.5,
        }
    }

    /// Quality signal carried by blur alone.
    pub fn blur_only() -> Self {
        Self {
            noise_level: [0.0, 0.0],
            shake_amplitude: [0.0, 0.0],
            shake_probability: 0.0,
            ..Self::mixed()
        }
    }

    /// No degradation at all; every clip gets the top score.
    pub fn pristine() -> Self {
        Self {
            blur_sigma: [0.0, 0.0],
            ..Self::blur_only()
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "mixed" => Some(Self::mixed()),
            "blur" | "blur-only" => Some(Self::blur_only()),
            "pristine" => Some(Self::pristine()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Config(format!(
                "clip geometry must be positive, got {}x{}x{}",
                self.frames, self.height, self.width
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        for (name, [lo, hi], scale) in [
            ("blur_sigma", self.blur_sigma, BLUR_SIGMA_SCALE),
            ("noise_level", self.noise_level, NOISE_LEVEL_SCALE),
            ("shake_amplitude", self.shake_amplitude, SHAKE_SCALE),
        ] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= scale) {
                return Err(Error::Config(format!(
                    "{name} range [{lo}, {hi}] must satisfy 0 <= lo <= hi <= {scale}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.shake_probability) {
            return Err(Error::Config(format!(
                "shake_probability {} outside [0, 1]",
                self.shake_probability
            )));
        }
        Ok(())
    }
}

/// Generates `n` labelled clips. Clip `i` depends only on `(seed, i, profile)`.
pub fn synthesize_corpus(
    n: usize,
    seed: u64,
    profile: &DistortionProfile,
) -> Result<Vec<(VideoClip, SyntheticLabel)>> {
    if n == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    profile.validate()?;
    (0..n).map(|i| synthesize_clip(i, seed, profile)).collect()
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CLIP_DIR: &str = "clips";

/// Synthesizes `n` clips into `dir/clips/`, assigns splits by source id and
/// writes `dir/manifest.jsonl`. Clips are generated and written one at a time.
pub fn write_corpus(
    dir: &Path,
    n: usize,
    seed: u64,
    profile: &DistortionProfile,
    fractions: SplitFractions,
) -> Result<Manifest> {
    if n == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    profile.validate()?;
    fractions.validate()?;
    let clip_dir = dir.join(CLIP_DIR);
    fs::create_dir_all(&clip_dir).map_err(|e| Error::io(&clip_dir, e))?;
    let mut labelled = Vec::with_capacity(n);
    for i in 0..n {
        let (clip, label) = synthesize_clip(i, seed, profile)?;
        let rel = PathBuf::from(CLIP_DIR).join(format!("{}.vqr", clip.source_id()));
        save_clip(&clip, &dir.join(&rel))?;
        labelled.push((clip.source_id().to_string(), rel, label.mos));
    }
    let ids: Vec<&str> = labelled.iter().map(|(id, _, _)| id.as_str()).collect();
    let splits = assign_splits(&ids, fractions)?;
    let entries = labelled
        .iter()
        .zip(splits)
        .map(|((_, path, mos), split)| ManifestEntry {
            path: path.clone(),
            mos: *mos,
            split,
        })
        .collect();
    let manifest = Manifest::new(entries, dir);
    manifest.write(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn synthesize_clip(
    index: usize,
    seed: u64,
    profile: &DistortionProfile,
) -> Result<(VideoClip, SyntheticLabel)> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);

    let draw = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| {
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    };
    let blur_sigma = draw(&mut rng, profile.blur_sigma);
    let noise_level = draw(&mut rng, profile.noise_level);
    let shaken = rng.random::<f64>() < profile.shake_probability;
    let shake_amplitude = if shaken {
        draw(&mut rng, profile.shake_amplitude)
    } else {
        0.0
    };
    let degradation = Degradation {
        blur_sigma,
        noise_level,
        shake_amplitude,
    };

    let scene = Scene::random(&mut rng, profile.height, profile.width);
    let (t, h, w) = (profile.frames, profile.height, profile.width);
    let mut pixels = Vec::with_capacity(t * h * w * 3);
    let kernel = gaussian_kernel(blur_sigma);
    for frame in 0..t {
        let (dy, dx) = if shake_amplitude > 0.0 {
            (
                rng.random_range(-shake_amplitude..=shake_amplitude),
                rng.random_range(-shake_amplitude..=shake_amplitude),
            )
        } else {
            (0.0, 0.0)
        };
        let mut buf = scene.render(frame as f32, dy.round() as f32, dx.round() as f32);
        if let Some(k) = &kernel {
            separable_blur(&mut buf, h, w, k);
        }
        for v in buf.iter_mut() {
            if noise_level > 0.0 {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v += (n * noise_level) as f32;
            }
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    let frames = Array4::from_shape_vec((t, h, w, 3), pixels).expect("shape matches payload");
    let clip = VideoClip::new(frames, profile.fps, format!("synth-{seed}-{index:05}"))?;
    let label = SyntheticLabel {
        mos: mos_for(&degradation),
        degradation,
    };
    Ok((clip, label))
}

struct Grating {
    freq_y: f32,
    freq_x: f32,
    phase: f32,
    drift: f32,
    amplitude: f32,
    tint: [f32; 3],
}

impl Grating {
    fn random(rng: &mut ChaCha8Rng, period: Range<f32>, amplitude: Range<f32>) -> Self {
        let period = rng.random_range(period);
        let angle: f32 = rng.random_range(0.0..std::f32::consts::PI);
        let k = std::f32::consts::TAU / period;
        Grating {
            freq_y: k * angle.sin(),
            freq_x: k * angle.cos(),
            phase: rng.random_range(0.0..std::f32::consts::TAU),
            drift: rng.random_range(-0.5..0.5),
            amplitude: rng.random_range(amplitude),
            tint: [
                rng.random_range(0.5..1.0),
                rng.random_range(0.5..1.0),
                rng.random_range(0.5..1.0),
            ],
        }
    }

    fn at(&self, y: f32, x: f32, t: f32) -> f32 {
        self.amplitude * (self.freq_y * y + self.freq_x * x + self.phase + self.drift * t).sin()
    }
}

enum Shape {
    Rect { half_h: f32, half_w: f32 },
    Disc { radius: f32 },
}

struct Sprite {
    shape: Shape,
    cy: f32,
    cx: f32,
    vy: f32,
    vx: f32,
    color: [f32; 3],
    /// Fine surface pattern moving with the sprite.
    texture: Grating,
}

struct Scene {
    height: usize,
    width: usize,
    base: [f32; 3],
    grad_y: f32,
    grad_x: f32,
    contrast: f32,
    gratings: Vec<Grating>,
    sprites: Vec<Sprite>,
}

impl Scene {
    fn random(rng: &mut ChaCha8Rng, height: usize, width: usize) -> Self {
        let color = |rng: &mut ChaCha8Rng| {
            [
                rng.random_range(60.0..195.0),
                rng.random_range(60.0..195.0),
                rng.random_range(60.0..195.0),
            ]
        };
        let base = color(rng);
        let gratings = (0..2)
            .map(|_| Grating::random(rng, 2.5..6.0, 22.0..26.0))
            .collect();
        let scale = height.min(width) as f32;
        let sprites = (0..rng.random_range(16..=32))
            .map(|_| {
                let size = rng.random_range(0.03..0.16) * scale;
                let shape = if rng.random::<bool>() {
                    Shape::Disc { radius: size }
                } else {
                    Shape::Rect {
                        half_h: size * rng.random_range(0.4..1.0),
                        half_w: size * rng.random_range(0.4..1.0),
                    }
                };
                Sprite {
                    shape,
                    cy: rng.random_range(0.0..height as f32),
                    cx: rng.random_range(0.0..width as f32),
                    vy: rng.random_range(-1.5..1.5),
                    vx: rng.random_range(-1.5..1.5),
                    color: color(rng),
                    texture: Grating::random(rng, 2.5..5.0, 35.0..40.0),
                }
            })
            .collect();
        Self {
            height,
            width,
            base,
            grad_y: rng.random_range(-0.3..0.3),
            grad_x: rng.random_range(-0.3..0.3),
            contrast: rng.random_range(0.9..1.0),
            gratings,
            sprites,
        }
    }

    /// Renders frame `t` with the camera displaced by `(dy, dx)` pixels.
    fn render(&self, t: f32, dy: f32, dx: f32) -> Vec<f32> {
        let (h, w) = (self.height, self.width);
        let mut buf = vec![0f32; h * w * 3];
        for y in 0..h {
            let sy = y as f32 + dy;
            for x in 0..w {
                let sx = x as f32 + dx;
                let mut texture = [0f32; 3];
                for g in &self.gratings {
                    let v = g.at(sy, sx, t);
                    for c in 0..3 {
                        texture[c] += v * g.tint[c];
                    }
                }
                let ramp = self.grad_y * (sy - h as f32 / 2.0) + self.grad_x * (sx - w as f32 / 2.0);
                let px = &mut buf[(y * w + x) * 3..][..3];
                for c in 0..3 {
                    px[c] = self.base[c] + ramp + texture[c];
                }
            }
        }
        for s in &self.sprites {
            let cy = s.cy + s.vy * t - dy;
            let cx = s.cx + s.vx * t - dx;
            let (ry, rx) = match s.shape {
                Shape::Rect { half_h, half_w } => (half_h, half_w),
                Shape::Disc { radius } => (radius, radius),
            };
            let y0 = (cy - ry).floor().max(0.0) as usize;
            let y1 = ((cy + ry).ceil().max(0.0) as usize).min(h);
            let x0 = (cx - rx).floor().max(0.0) as usize;
            let x1 = ((cx + rx).ceil().max(0.0) as usize).min(w);
            for y in y0..y1 {
                let py = y as f32 + 0.5 - cy;
                for x in x0..x1 {
                    let px = x as f32 + 0.5 - cx;
                    let inside = match s.shape {
                        Shape::Rect { half_h, half_w } => py.abs() <= half_h && px.abs() <= half_w,
                        Shape::Disc { radius } => py * py + px * px <= radius * radius,
                    };
                    if inside {
                        let v = s.texture.at(py, px, 0.0);
                        let dst = &mut buf[(y * w + x) * 3..][..3];
                        for c in 0..3 {
                            dst[c] = s.color[c] + v * s.texture.tint[c];
                        }
                    }
                }
            }
        }
        for v in buf.iter_mut() {
            *v = 128.0 + self.contrast * (*v - 128.0);
        }
        buf
    }
}

fn gaussian_kernel(sigma: f64) -> Option<Vec<f32>> {
    if sigma < 1e-3 {
        return None;
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    Some(k.into_iter().map(|v| v as f32).collect())
}

/// Separable convolution of an interleaved RGB buffer, edges clamped.
fn separable_blur(buf: &mut [f32], h: usize, w: usize, kernel: &[f32]) {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0f32; buf.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f32; 3];
            for (i, &k) in kernel.iter().enumerate() {
                let sx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                let src = &buf[(y * w + sx) * 3..][..3];
                for c in 0..3 {
                    acc[c] += k * src[c];
                }
            }
            tmp[(y * w + x) * 3..][..3].copy_from_slice(&acc);
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f32; 3];
            for (i, &k) in kernel.iter().enumerate() {
                let sy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
                let src = &tmp[(sy * w + x) * 3..][..3];
                for c in 0..3 {
                    acc[c] += k * src[c];
                }
            }
            buf[(y * w + x) * 3..][..3].copy_from_slice(&acc);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DistortionProfile {
        DistortionProfile {
            frames: 3,
            height: 32,
            width: 40,
            ..DistortionProfile::mixed()
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let a = synthesize_corpus(2, 7, &small()).unwrap();
        let b = synthesize_corpus(2, 7, &small()).unwrap();
        assert_eq!(a, b);
        let c = synthesize_corpus(2, 8, &small()).unwrap();
        assert_ne!(a[0].0.frames(), c[0].0.frames());
    }

    #[test]
    fn clip_does_not_depend_on_corpus_size() {
        let a = synthesize_corpus(3, 1, &small()).unwrap();
        let b = synthesize_corpus(5, 1, &small()).unwrap();
        assert_eq!(a[..], b[..3]);
    }

    #[test]
    fn pristine_profile_scores_maximum() {
        let p = DistortionProfile {
            frames: 2,
            height: 16,
            width: 16,
            ..DistortionProfile::pristine()
        };
        for (_, label) in synthesize_corpus(4, 3, &p).unwrap() {
            assert_eq!(label.mos, MOS_MAX);
        }
        assert_eq!(mos_for(&Degradation::default()), MOS_MAX);
    }

    #[test]
    fn mos_strictly_decreasing_in_each_degradation() {
        let base = Degradation {
            blur_sigma: 1.0,
            noise_level: 5.0,
            shake_amplitude: 2.0,
        };
        let more_blur = Degradation {
            blur_sigma: 1.5,
            ..base
        };
        let more_noise = Degradation {
            noise_level: 6.0,
            ..base
        };
        let more_shake = Degradation {
            shake_amplitude: 2.5,
            ..base
        };
        assert!(mos_for(&base) > mos_for(&more_blur));
        assert!(mos_for(&base) > mos_for(&more_noise));
        assert!(mos_for(&base) > mos_for(&more_shake));
    }

    #[test]
    fn worst_case_hits_floor() {
        let worst = Degradation {
            blur_sigma: BLUR_SIGMA_SCALE,
            noise_level: NOISE_LEVEL_SCALE,
            shake_amplitude: SHAKE_SCALE,
        };
        assert!((mos_for(&worst) - MOS_MIN).abs() < 1e-12);
    }

    #[test]
    fn equal_records_equal_mos() {
        let corpus = synthesize_corpus(
            6,
            11,
            &DistortionProfile {
                frames: 1,
                height: 8,
                width: 8,
                blur_sigma: [1.0, 1.0],
                noise_level: [2.0, 2.0],
                ..DistortionProfile::blur_only()
            },
        )
        .unwrap();
        assert!(corpus.windows(2).all(|w| w[0].1 == w[1].1));
    }

    #[test]
    fn invalid_profiles_rejected() {
        let mut p = small();
        p.blur_sigma = [2.0, 1.0];
        assert!(matches!(synthesize_corpus(1, 0, &p), Err(Error::Config(_))));
        let mut p = small();
        p.noise_level = [0.0, NOISE_LEVEL_SCALE + 1.0];
        assert!(p.validate().is_err());
        let mut p = small();
        p.shake_probability = 1.5;
        assert!(p.validate().is_err());
        assert!(synthesize_corpus(0, 0, &small()).is_err());
    }

    #[test]
    fn blur_lowers_high_frequency_energy() {
        let profile = |sigma: f64| DistortionProfile {
            frames: 1,
            height: 48,
            width: 48,
            blur_sigma: [sigma, sigma],
            ..DistortionProfile::pristine()
        };
        let energy = |clip: &VideoClip| {
            let f = clip.frames();
            let mut e = 0f64;
            for y in 0..48 {
                for x in 1..48 {
                    let d = f[[0, y, x, 1]] as f64 - f[[0, y, x - 1, 1]] as f64;
                    e += d * d;
                }
            }
            e
        };
        let (sharp, _) = synthesize_clip(0, 5, &profile(0.0)).unwrap();
        let (soft, _) = synthesize_clip(0, 5, &profile(2.0)).unwrap();
        assert!(energy(&soft) < 0.5 * energy(&sharp));
    }
}
