//! Deterministic multi-domain datasets with analytic tumor masks.
//!
//! Each domain has its own base color and sinusoidal texture; tumors are
//! disks or rotated ellipses drawn darker than the surrounding tissue. A
//! pixel belongs to a shape when its center `(row + 0.5, col + 0.5)` does,
//! so masks are exact indicators of the shape equations.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cv_ensemble::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::io::{save_image, save_mask, MaskEncoding};
use crate::raster::{BinaryMask, Raster};

/// Base colors with pairwise L∞ distance ≥ 40.
const PALETTE: [[f64; 3]; 6] = [
    [215.0, 160.0, 200.0],
    [160.0, 205.0, 215.0],
    [220.0, 205.0, 140.0],
    [170.0, 120.0, 150.0],
    [120.0, 170.0, 120.0],
    [235.0, 235.0, 235.0],
];

const TUMOR_DARKENING: f64 = 0.75;
const TEXTURE_AMPLITUDE: f64 = 12.0;
const NOISE_AMPLITUDE: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub texture_seed: u64,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TumorShape {
    Disk {
        center_row: f64,
        center_col: f64,
        radius: f64,
    },
    /// Semi-axes along rows and columns before a counter-clockwise rotation.
    Ellipse {
        center_row: f64,
        center_col: f64,
        semi_row: f64,
        semi_col: f64,
        angle_degrees: f64,
    },
}

impl TumorShape {
    /// Membership of the continuous point `(y, x)`.
    pub fn contains_point(&self, y: f64, x: f64) -> bool {
        match *self {
            TumorShape::Disk {
                center_row,
                center_col,
                radius,
            } => {
                let (dy, dx) = (y - center_row, x - center_col);
                dy * dy + dx * dx <= radius * radius
            }
            TumorShape::Ellipse {
                center_row,
                center_col,
                semi_row,
                semi_col,
                angle_degrees,
            } => {
                let (sin, cos) = angle_degrees.to_radians().sin_cos();
                let (dy, dx) = (y - center_row, x - center_col);
                let u = cos * dy - sin * dx;
                let v = sin * dy + cos * dx;
                (u / semi_row).powi(2) + (v / semi_col).powi(2) <= 1.0
            }
        }
    }

    /// Membership of pixel `(row, col)`, tested at its center.
    pub fn contains_pixel(&self, row: usize, col: usize) -> bool {
        self.contains_point(row as f64 + 0.5, col as f64 + 0.5)
    }

    /// Exact area of the continuous shape.
    pub fn area(&self) -> f64 {
        match *self {
            TumorShape::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            TumorShape::Ellipse { semi_row, semi_col, .. } => std::f64::consts::PI * semi_row * semi_col,
        }
    }

    /// `(min_row, max_row, min_col, max_col)` of the continuous shape.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            TumorShape::Disk {
                center_row,
                center_col,
                radius,
            } => (center_row - radius, center_row + radius, center_col - radius, center_col + radius),
            TumorShape::Ellipse {
                center_row,
                center_col,
                semi_row,
                semi_col,
                angle_degrees,
            } => {
                let (sin, cos) = angle_degrees.to_radians().sin_cos();
                let half_h = ((semi_row * cos).powi(2) + (semi_col * sin).powi(2)).sqrt();
                let half_w = ((semi_row * sin).powi(2) + (semi_col * cos).powi(2)).sqrt();
                (center_row - half_h, center_row + half_h, center_col - half_w, center_col + half_w)
            }
        }
    }

    fn within(&self, height: usize, width: usize) -> bool {
        let (r0, r1, c0, c1) = self.bounds();
        let finite = [r0, r1, c0, c1].iter().all(|v| v.is_finite());
        finite && r0 >= 0.0 && c0 >= 0.0 && r1 <= height as f64 && c1 <= width as f64
    }

    fn is_degenerate(&self) -> bool {
        match *self {
            TumorShape::Disk { radius, .. } => !(radius > 0.0),
            TumorShape::Ellipse { semi_row, semi_col, .. } => !(semi_row > 0.0 && semi_col > 0.0),
        }
    }
}

/// Seeded random tumors added to every image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomShapes {
    /// Inclusive range of shapes per image.
    pub per_image: [usize; 2],
    /// Radius range for disks; semi-axis range for ellipses.
    pub radius: [f64; 2],
    /// Probability that a drawn shape is an ellipse instead of a disk.
    pub ellipse_prob: f64,
}

impl Default for RandomShapes {
    fn default() -> Self {
        Self {
            per_image: [1, 3],
            radius: [60.0, 220.0],
            ellipse_prob: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub task_id: String,
    pub domains: Vec<DomainSpec>,
    pub height: usize,
    pub width: usize,
    /// Drawn in every image.
    pub shapes: Vec<TumorShape>,
    pub random_shapes: Option<RandomShapes>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Three domains of four 1500×1500 images with random disk tumors.
    fn default() -> Self {
        Self {
            task_id: "synthetic".into(),
            domains: ["kidney", "liver", "stomach"]
                .iter()
                .enumerate()
                .map(|(i, name)| DomainSpec {
                    name: (*name).into(),
                    texture_seed: 100 + i as u64,
                    count: 4,
                })
                .collect(),
            height: 1500,
            width: 1500,
            shapes: Vec::new(),
            random_shapes: Some(RandomShapes::default()),
            seed: 0,
        }
    }
}

/// Shapes and identity of one generated image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagePlan {
    pub image_id: String,
    pub domain: String,
    pub domain_index: usize,
    pub index: usize,
    pub shapes: Vec<TumorShape>,
}

impl ImagePlan {
    pub fn mask(&self, height: usize, width: usize) -> BinaryMask {
        BinaryMask::from_fn(width, height, |r, c| self.shapes.iter().any(|s| s.contains_pixel(r, c)))
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.height == 0 || self.width == 0 {
            return bad(format!("image size {}x{} is empty", self.height, self.width));
        }
        if self.domains.is_empty() {
            return bad("no domains".into());
        }
        let mut seen = std::collections::HashSet::new();
        for d in &self.domains {
            if d.count == 0 {
                return bad(format!("domain {:?} has count 0", d.name));
            }
            let safe = !d.name.is_empty() && d.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !safe {
                return bad(format!("domain name {:?} must be non-empty [A-Za-z0-9_-]", d.name));
            }
            if !seen.insert(&d.name) {
                return bad(format!("duplicate domain {:?}", d.name));
            }
        }
        for (i, s) in self.shapes.iter().enumerate() {
            if s.is_degenerate() {
                return bad(format!("shape {i} has a non-positive radius"));
            }
            if !s.within(self.height, self.width) {
                return bad(format!("shape {i} extends outside the {}x{} image", self.height, self.width));
            }
        }
        if let Some(rs) = &self.random_shapes {
            let [lo, hi] = rs.radius;
            if !(lo > 0.0 && lo <= hi) {
                return bad(format!("random radius range [{lo}, {hi}] is invalid"));
            }
            if 2.0 * hi > self.height.min(self.width) as f64 {
                return bad(format!("random radius {hi} does not fit a {}x{} image", self.height, self.width));
            }
            if rs.per_image[0] > rs.per_image[1] {
                return bad(format!("per_image range {:?} is empty", rs.per_image));
            }
            if !(0.0..=1.0).contains(&rs.ellipse_prob) {
                return bad(format!("ellipse_prob {} outside [0, 1]", rs.ellipse_prob));
            }
        }
        Ok(())
    }

    fn image_seed(&self, global_index: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(global_index as u64)
            .rotate_left(17)
    }

    /// Ids, domains and tumor shapes of every image, in manifest order.
    pub fn plan(&self) -> Result<Vec<ImagePlan>> {
        self.validate()?;
        let mut plans = Vec::new();
        for (domain_index, d) in self.domains.iter().enumerate() {
            for index in 0..d.count {
                let mut shapes = self.shapes.clone();
                if let Some(rs) = &self.random_shapes {
                    let mut rng = ChaCha8Rng::seed_from_u64(self.image_seed(plans.len()));
                    let n = rng.gen_range(rs.per_image[0]..=rs.per_image[1]);
                    for _ in 0..n {
                        shapes.push(random_shape(&mut rng, rs, self.height, self.width));
                    }
                }
                plans.push(ImagePlan {
                    image_id: format!("{}_{index:03}", d.name),
                    domain: d.name.clone(),
                    domain_index,
                    index,
                    shapes,
                });
            }
        }
        Ok(plans)
    }

    fn base_color(&self, domain_index: usize) -> [f64; 3] {
        if let Some(c) = PALETTE.get(domain_index) {
            return *c;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.domains[domain_index].texture_seed);
        [0; 3].map(|_| rng.gen_range(110.0..=235.0))
    }

    /// Renders one image and its mask.
    pub fn render(&self, plan: &ImagePlan, global_index: usize) -> (Raster, BinaryMask) {
        let mask = plan.mask(self.height, self.width);
        let base = self.base_color(plan.domain_index);
        let mut tex = ChaCha8Rng::seed_from_u64(self.domains[plan.domain_index].texture_seed);
        let period_r = tex.gen_range(40.0..160.0);
        let period_c = tex.gen_range(40.0..160.0);
        let (phase_r, phase_c) = (tex.gen_range(0.0..std::f64::consts::TAU), tex.gen_range(0.0..std::f64::consts::TAU));
        let mut noise = ChaCha8Rng::seed_from_u64(self.image_seed(global_index) ^ 0x5EED);

        let tau = std::f64::consts::TAU;
        let row_wave: Vec<f64> = (0..self.height).map(|r| (tau * r as f64 / period_r + phase_r).sin()).collect();
        let col_wave: Vec<f64> = (0..self.width).map(|c| (tau * c as f64 / period_c + phase_c).cos()).collect();
        let mut data = Vec::with_capacity(self.height * self.width * 3);
        for r in 0..self.height {
            for c in 0..self.width {
                let t = TEXTURE_AMPLITUDE * row_wave[r] * col_wave[c];
                let scale = if mask.get(r, c) == 1 { TUMOR_DARKENING } else { 1.0 };
                for b in base {
                    let n = noise.gen_range(-NOISE_AMPLITUDE..=NOISE_AMPLITUDE);
                    data.push(((b + t + n) * scale).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        (Raster::new(self.width, self.height, 3, data).expect("sized buffer"), mask)
    }
}

fn random_shape(rng: &mut ChaCha8Rng, rs: &RandomShapes, height: usize, width: usize) -> TumorShape {
    let [lo, hi] = rs.radius;
    let radius = |rng: &mut ChaCha8Rng| if lo < hi { rng.gen_range(lo..=hi) } else { lo };
    let mut shape = if rs.ellipse_prob > 0.0 && rng.gen_bool(rs.ellipse_prob) {
        let (semi_row, semi_col) = (radius(rng), radius(rng));
        TumorShape::Ellipse {
            center_row: 0.0,
            center_col: 0.0,
            semi_row,
            semi_col,
            angle_degrees: rng.gen_range(0.0..180.0),
        }
    } else {
        TumorShape::Disk {
            center_row: 0.0,
            center_col: 0.0,
            radius: radius(rng),
        }
    };
    let (_, half_h, _, half_w) = shape.bounds();
    let row = rng.gen_range(half_h..=height as f64 - half_h);
    let col = rng.gen_range(half_w..=width as f64 - half_w);
    match &mut shape {
        TumorShape::Disk {
            center_row, center_col, ..
        }
        | TumorShape::Ellipse {
            center_row, center_col, ..
        } => {
            *center_row = row;
            *center_col = col;
        }
    }
    shape
}

/// Writes `images/<id>.png`, `masks/<id>.png` (0/255) and `manifest.json`
/// under `out_dir`. The manifest is written last, with paths relative to it.
pub fn generate_dataset(spec: &SyntheticSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    let plans = spec.plan()?;
    for sub in ["images", "masks"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<(usize, Error)>> = Mutex::new(None);
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(plans.len());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= plans.len() || failure.lock().expect("lock").is_some() {
                    break;
                }
                let plan = &plans[i];
                let (image, mask) = spec.render(plan, i);
                let written = save_image(&image, out_dir.join(image_rel(&plan.image_id))).and_then(|_| {
                    save_mask(&mask, out_dir.join(mask_rel(&plan.image_id)), MaskEncoding::Byte)
                });
                if let Err(e) = written {
                    let mut slot = failure.lock().expect("lock");
                    if slot.as_ref().map_or(true, |(j, _)| i < *j) {
                        *slot = Some((i, e));
                    }
                }
            });
        }
    });
    if let Some((_, e)) = failure.into_inner().expect("lock") {
        return Err(e);
    }

    let entries = plans
        .iter()
        .map(|p| ManifestEntry {
            image_id: p.image_id.clone(),
            image_path: image_rel(&p.image_id),
            mask_path: mask_rel(&p.image_id),
            domain: p.domain.clone(),
        })
        .collect();
    let manifest = DatasetManifest::new(spec.task_id.clone(), entries).with_base_dir(out_dir);
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn image_rel(id: &str) -> PathBuf {
    Path::new("images").join(format!("{id}.png"))
}

fn mask_rel(id: &str) -> PathBuf {
    Path::new("masks").join(format!("{id}.png"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            height: 160,
            width: 200,
            random_shapes: Some(RandomShapes {
                per_image: [1, 2],
                radius: [10.0, 40.0],
                ellipse_prob: 0.5,
            }),
            seed,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn palette_is_separated() {
        for (i, a) in PALETTE.iter().enumerate() {
            for b in &PALETTE[i + 1..] {
                let d = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(d >= 40.0, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn disk_area_matches_pi_r_squared() {
        for radius in [50.0, 123.4, 200.0] {
            let disk = TumorShape::Disk {
                center_row: 750.0,
                center_col: 749.3,
                radius,
            };
            let plan = ImagePlan {
                image_id: "x".into(),
                domain: "d".into(),
                domain_index: 0,
                index: 0,
                shapes: vec![disk],
            };
            let count = plan.mask(1500, 1500).count_ones() as f64;
            assert!((count / disk.area() - 1.0).abs() < 0.01, "r={radius}: {count}");
        }
    }

    #[test]
    fn ellipse_geometry() {
        let e = TumorShape::Ellipse {
            center_row: 50.0,
            center_col: 50.0,
            semi_row: 30.0,
            semi_col: 10.0,
            angle_degrees: 90.0,
        };
        // rotated a quarter turn, the long axis now runs along columns
        assert!(e.contains_point(50.0, 79.0));
        assert!(!e.contains_point(79.0, 50.0));
        let (r0, r1, c0, c1) = e.bounds();
        assert!((r1 - r0 - 20.0).abs() < 1e-9 && (c1 - c0 - 60.0).abs() < 1e-9);
    }

    #[test]
    fn validation() {
        let mut spec = small(0);
        spec.domains[1].count = 0;
        assert!(spec.validate().is_err());
        let mut spec = small(0);
        spec.shapes.push(TumorShape::Disk {
            center_row: 10.0,
            center_col: 100.0,
            radius: 20.0,
        });
        assert!(spec.validate().is_err());
        let mut spec = small(0);
        spec.domains[2].name = "kidney".into();
        assert!(spec.validate().is_err());
        let mut spec = small(0);
        spec.domains[0].name = "../up".into();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn random_shapes_stay_inside() {
        let spec = small(7);
        for plan in spec.plan().unwrap() {
            assert!(!plan.shapes.is_empty());
            for s in &plan.shapes {
                assert!(s.within(160, 200), "{s:?}");
            }
        }
    }

    #[test]
    fn plan_ids_and_order() {
        let ids: Vec<_> = small(0).plan().unwrap().into_iter().map(|p| p.image_id).collect();
        assert_eq!(ids.len(), 12);
        assert_eq!(ids[0], "kidney_000");
        assert_eq!(ids[11], "stomach_003");
    }
}
