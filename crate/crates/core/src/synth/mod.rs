//! Paired two-view synthetic studies.
//!
//! A fixed landmark sits at the middle of the left edge of both views. A mass
//! at radial distance `r` from the landmark in the CC view appears at distance
//! `r + jitter` in the MLO view, at an independently drawn angle. Masses are
//! smooth radial blobs over spatially correlated noise. Pixels are clamped to
//! `[0, 1]`, so the noise is rectified at the background level 0.

mod io;
mod render;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub use io::{
    decode_dataset, encode_dataset, gt_records, read_dataset, write_dataset, write_gt_jsonl,
    GtRecord, DATASET_MAGIC, DATASET_VERSION,
};
pub use render::{render_blob, smoothed_noise};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Cc,
    Mlo,
}

impl View {
    pub const BOTH: [View; 2] = [View::Cc, View::Mlo];

    pub fn name(self) -> &'static str {
        match self {
            View::Cc => "cc",
            View::Mlo => "mlo",
        }
    }

    pub fn other(self) -> View {
        match self {
            View::Cc => View::Mlo,
            View::Mlo => View::Cc,
        }
    }
}

impl std::str::FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<View> {
        match s.to_ascii_lowercase().as_str() {
            "cc" => Ok(View::Cc),
            "mlo" => Ok(View::Mlo),
            _ => Err(Error::invalid("view", format!("expected cc or mlo, got {s:?}"))),
        }
    }
}

/// Grayscale image, row-major, `pixels[y * width + x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl SyntheticImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        SyntheticImage {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel index ranges whose unit squares overlap `b`.
    pub fn pixel_span(&self, b: &BBox) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let lo = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n);
        let hi = |v: f64, n: usize| (v.ceil().max(0.0) as usize).min(n);
        (
            lo(b.x1, self.width)..hi(b.x2, self.width),
            lo(b.y1, self.height)..hi(b.y2, self.height),
        )
    }
}

/// One view of a study with its annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewData {
    pub image: SyntheticImage,
    pub boxes: Vec<BBox>,
    /// Whether each mass was rendered at low contrast in this view.
    pub faint: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyPair {
    pub study_id: u64,
    pub cc: ViewData,
    pub mlo: ViewData,
    /// `(cc_box_index, mlo_box_index)` pairs.
    pub correspondence: Vec<(usize, usize)>,
}

impl StudyPair {
    pub fn view(&self, v: View) -> &ViewData {
        match v {
            View::Cc => &self.cc,
            View::Mlo => &self.mlo,
        }
    }

    pub fn view_mut(&mut self, v: View) -> &mut ViewData {
        match v {
            View::Cc => &mut self.cc,
            View::Mlo => &mut self.mlo,
        }
    }

    /// Index of the partner box in the other view, if any.
    pub fn partner(&self, v: View, index: usize) -> Option<usize> {
        self.correspondence.iter().find_map(|&(c, m)| match v {
            View::Cc if c == index => Some(m),
            View::Mlo if m == index => Some(c),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Side of the square images in pixels.
    pub image_size: usize,
    /// `mass_count_probs[k]` is the probability of `k + 1` masses.
    pub mass_count_probs: Vec<f64>,
    pub radius_range: [f64; 2],
    pub contrast_range: [f64; 2],
    /// Peak of a faint blob as a fraction of `noise_sigma`.
    pub faint_contrast_range: [f64; 2],
    pub noise_sigma: f64,
    /// Gaussian smoothing width of the background, in pixels.
    pub noise_correlation: f64,
    /// Probability that a mass is faint in exactly one random view.
    pub ambiguity_rate: f64,
    /// Std of the radial jitter between views, truncated at three sigma.
    pub jitter_sigma: f64,
    /// Radial distance from the landmark in the CC view.
    pub radial_range: [f64; 2],
    /// Angles are drawn from `[-angle_spread, angle_spread]` radians.
    pub angle_spread: f64,
    /// Minimum center distance between masses, as a multiple of the larger radius.
    pub min_separation: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            image_size: 64,
            mass_count_probs: vec![0.7, 0.3],
            radius_range: [4.0, 7.0],
            contrast_range: [0.6, 1.0],
            faint_contrast_range: [0.05, 0.5],
            noise_sigma: 0.05,
            noise_correlation: 1.5,
            ambiguity_rate: 0.5,
            jitter_sigma: 1.5,
            radial_range: [12.0, 50.0],
            angle_spread: 0.1,
            min_separation: 2.5,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::Config(format!("generator: {reason}")));
        if self.image_size < 8 {
            return bad(format!("image_size {} below 8", self.image_size));
        }
        let probs = &self.mass_count_probs;
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("mass_count_probs must be non-empty probabilities".into());
        }
        if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("mass_count_probs must sum to 1".into());
        }
        let [rmin, rmax] = self.radius_range;
        if !(rmin > 0.0 && rmin <= rmax && rmax <= self.image_size as f64 / 4.0) {
            return bad(format!("radius_range {:?} must be positive and at most image/4", self.radius_range));
        }
        for (name, [lo, hi]) in [
            ("contrast_range", self.contrast_range),
            ("faint_contrast_range", self.faint_contrast_range),
            ("radial_range", self.radial_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return bad(format!("{name} [{lo}, {hi}] must be ordered and nonnegative"));
            }
        }
        if !(0.0..=1.0).contains(&self.ambiguity_rate) {
            return bad(format!("ambiguity_rate {} outside [0, 1]", self.ambiguity_rate));
        }
        if !(self.noise_sigma >= 0.0 && self.jitter_sigma >= 0.0 && self.noise_correlation >= 0.0) {
            return bad("noise_sigma, noise_correlation and jitter_sigma must be nonnegative".into());
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.angle_spread) {
            return bad(format!("angle_spread {} outside [0, pi/2]", self.angle_spread));
        }
        if !(self.min_separation >= 0.0) {
            return bad("min_separation must be nonnegative".into());
        }
        Ok(())
    }

    /// Fixed landmark `(x, y)` shared by both views.
    pub fn landmark(&self) -> (f64, f64) {
        (0.0, self.image_size as f64 / 2.0)
    }
}

/// Per-mass parameters before rendering.
#[derive(Clone, Copy, Debug)]
struct MassSpec {
    radius: f64,
    centers: [(f64, f64); 2],
    contrast: [f64; 2],
    faint: [bool; 2],
}

const MAX_PLACEMENT_TRIES: usize = 1000;

/// Generates one study. The output is a pure function of `(seed, config)`;
/// the study id is the seed.
pub fn generate_study(seed: u64, cfg: &GeneratorConfig) -> Result<StudyPair> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = cfg.image_size;

    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut n_masses = cfg.mass_count_probs.len();
    for (k, p) in cfg.mass_count_probs.iter().enumerate() {
        acc += p;
        if u < acc {
            n_masses = k + 1;
            break;
        }
    }

    let mut masses: Vec<MassSpec> = Vec::with_capacity(n_masses);
    for _ in 0..n_masses {
        let radius = uniform(&mut rng, cfg.radius_range);
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let r_cc = uniform(&mut rng, cfg.radial_range);
            let r_mlo = r_cc + truncated_jitter(&mut rng, cfg.jitter_sigma);
            let cc = place(&mut rng, cfg, r_cc, radius);
            let mlo = place(&mut rng, cfg, r_mlo, radius);
            let (Some(cc), Some(mlo)) = (cc, mlo) else {
                continue;
            };
            let clear = masses.iter().all(|m| {
                let sep = cfg.min_separation * m.radius.max(radius);
                dist(m.centers[0], cc) >= sep && dist(m.centers[1], mlo) >= sep
            });
            if clear {
                placed = Some([cc, mlo]);
                break;
            }
        }
        let Some(centers) = placed else {
            // Crowded configuration: keep the masses placed so far.
            break;
        };
        let mut contrast = [uniform(&mut rng, cfg.contrast_range); 2];
        contrast[1] = uniform(&mut rng, cfg.contrast_range);
        let mut faint = [false; 2];
        if rng.random::<f64>() < cfg.ambiguity_rate {
            let v = rng.random_range(0..2usize);
            faint[v] = true;
            contrast[v] = uniform(&mut rng, cfg.faint_contrast_range) * cfg.noise_sigma;
        }
        masses.push(MassSpec {
            radius,
            centers,
            contrast,
            faint,
        });
    }

    let mut render_view = |v: usize| {
        let mut image = smoothed_noise(&mut rng, size, size, cfg.noise_sigma, cfg.noise_correlation);
        let mut boxes = Vec::with_capacity(masses.len());
        let mut faint = Vec::with_capacity(masses.len());
        for m in &masses {
            let (cx, cy) = m.centers[v];
            render_blob(&mut image, cx, cy, m.radius, m.contrast[v]);
            boxes.push(BBox::new(cx - m.radius, cy - m.radius, cx + m.radius, cy + m.radius));
            faint.push(m.faint[v]);
        }
        for p in &mut image.pixels {
            *p = p.clamp(0.0, 1.0);
        }
        ViewData { image, boxes, faint }
    };
    let cc = render_view(0);
    let mlo = render_view(1);

    Ok(StudyPair {
        study_id: seed,
        cc,
        mlo,
        correspondence: (0..masses.len()).map(|i| (i, i)).collect(),
    })
}

/// Generates `count` studies with ids `0..count`; study `i` uses a seed
/// mixed from `base_seed` and `i`.
pub fn generate_dataset(base_seed: u64, count: usize, cfg: &GeneratorConfig) -> Result<Vec<StudyPair>> {
    (0..count as u64)
        .map(|i| {
            let mut s = generate_study(study_seed(base_seed, i), cfg)?;
            s.study_id = i;
            Ok(s)
        })
        .collect()
}

/// SplitMix64 finalizer over the pair, so neighbouring ids get unrelated streams.
pub fn study_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Blanks every gt box of `view` to the background level and drops its
/// annotations; the other view is untouched.
pub fn mask_masses(study: &StudyPair, view: View) -> StudyPair {
    let mut out = study.clone();
    let vd = out.view_mut(view);
    for b in std::mem::take(&mut vd.boxes) {
        let (xs, ys) = vd.image.pixel_span(&b);
        for y in ys {
            for x in xs.clone() {
                vd.image.pixels[y * vd.image.width + x] = 0.0;
            }
        }
    }
    vd.faint.clear();
    out.correspondence.clear();
    out
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn truncated_jitter<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    loop {
        let j: f64 = normal.sample(rng);
        if j.abs() <= 3.0 * sigma {
            return j;
        }
    }
}

/// Center at distance `r` from the landmark at a random angle, keeping the
/// whole blob inside the image. `None` if no angle fits.
fn place<R: Rng>(rng: &mut R, cfg: &GeneratorConfig, r: f64, radius: f64) -> Option<(f64, f64)> {
    let (lx, ly) = cfg.landmark();
    let size = cfg.image_size as f64;
    for _ in 0..32 {
        let theta = uniform(rng, [-cfg.angle_spread, cfg.angle_spread]);
        let (x, y) = (lx + r * theta.cos(), ly + r * theta.sin());
        if x >= radius && x <= size - radius && y >= radius && y <= size - radius {
            return Some((x, y));
        }
    }
    None
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}
