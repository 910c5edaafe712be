//! Deterministic 2-D shapes scenes with exact instance masks and a
//! 24-way colour × shape presence labelling.

use rand::Rng;

use crate::datasets::{Dataset, Sample};
use crate::error::{AdiosError, Result};
use crate::numerics::Tensor;
use crate::rng;

pub const COLOURS: usize = 8;
pub const SHAPES: usize = 3;
pub const NUM_MULTILABELS: usize = COLOURS * SHAPES;

/// Minimum visible pixels per object.
pub const MIN_OBJECT_PIXELS: usize = 9;
const PLACEMENT_RETRIES: usize = 50;

pub const PALETTE: [[f32; 3]; COLOURS] = [
    [0.90, 0.12, 0.10], // red
    [0.12, 0.78, 0.15], // green
    [0.15, 0.25, 0.92], // blue
    [0.92, 0.88, 0.12], // yellow
    [0.10, 0.85, 0.88], // cyan
    [0.85, 0.15, 0.85], // magenta
    [0.95, 0.55, 0.05], // orange
    [0.95, 0.95, 0.95], // white
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; SHAPES] = [ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle];

    pub fn index(self) -> usize {
        match self {
            ShapeKind::Circle => 0,
            ShapeKind::Square => 1,
            ShapeKind::Triangle => 2,
        }
    }

    /// Whether the pixel centre `(x, y)` falls inside a shape of radius `r` at `(cx, cy)`.
    fn contains(self, x: f32, y: f32, cx: f32, cy: f32, r: f32) -> bool {
        let (dx, dy) = (x - cx, y - cy);
        match self {
            ShapeKind::Circle => dx * dx + dy * dy <= r * r,
            ShapeKind::Square => dx.abs() <= 0.85 * r && dy.abs() <= 0.85 * r,
            ShapeKind::Triangle => {
                let t = (dy + r) / (2.0 * r);
                (0.0..=1.0).contains(&t) && dx.abs() <= r * t
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeObject {
    pub colour: usize,
    pub shape: ShapeKind,
    pub cx: f32,
    pub cy: f32,
    pub radius: f32,
    /// Visible pixel count after later objects are painted over it.
    pub area: usize,
}

impl ShapeObject {
    pub fn label_index(&self) -> usize {
        self.colour * SHAPES + self.shape.index()
    }
}

/// Presence vector from object metadata.
pub fn multilabel_from_objects(objects: &[ShapeObject]) -> [bool; NUM_MULTILABELS] {
    let mut out = [false; NUM_MULTILABELS];
    for o in objects {
        out[o.label_index()] = true;
    }
    out
}

/// Label of the object with the largest visible area (first one on ties).
pub fn dominant_label(objects: &[ShapeObject]) -> usize {
    let mut best: Option<&ShapeObject> = None;
    for o in objects {
        if best.is_none_or(|b| o.area > b.area) {
            best = Some(o);
        }
    }
    best.map_or(0, ShapeObject::label_index)
}

fn generate_one(index: usize, image_size: usize, max_objects: usize, seed: u64) -> Sample {
    let mut r = rng::indexed(seed, "shapes", index as u64);
    let s = image_size;
    let hw = s * s;
    let bg_level: f32 = r.random_range(0.05..0.35);
    let mut image = vec![0.0f32; 3 * hw];
    for p in 0..hw {
        let tint: f32 = r.random_range(-0.03..0.03);
        for c in 0..3 {
            image[c * hw + p] = (bg_level + tint).clamp(0.0, 1.0);
        }
    }
    // Owner of each pixel: object index, or usize::MAX for background.
    let mut owner = vec![usize::MAX; hw];
    let mut objects: Vec<ShapeObject> = Vec::new();
    let target = r.random_range(1..=max_objects);
    let (rmin, rmax) = (s as f32 / 7.0, s as f32 / 4.0);

    for _ in 0..target {
        for _attempt in 0..PLACEMENT_RETRIES {
            let shape = ShapeKind::ALL[r.random_range(0..SHAPES)];
            let colour = r.random_range(0..COLOURS);
            let radius: f32 = r.random_range(rmin..rmax.max(rmin + 0.5));
            let cx: f32 = r.random_range(radius..(s as f32 - radius).max(radius + 0.5));
            let cy: f32 = r.random_range(radius..(s as f32 - radius).max(radius + 0.5));
            let covered: Vec<usize> = (0..hw)
                .filter(|&p| shape.contains((p % s) as f32 + 0.5, (p / s) as f32 + 0.5, cx, cy, radius))
                .collect();
            if covered.len() < MIN_OBJECT_PIXELS {
                continue;
            }
            // Painting must leave every earlier object (and this one) visible enough.
            let id = objects.len();
            let mut remaining: Vec<usize> = objects.iter().map(|o| o.area).collect();
            for &p in &covered {
                if owner[p] != usize::MAX {
                    remaining[owner[p]] -= 1;
                }
            }
            if remaining.iter().any(|&a| a < MIN_OBJECT_PIXELS) {
                continue;
            }
            let shade: f32 = r.random_range(0.9..1.05);
            for &p in &covered {
                owner[p] = id;
                for c in 0..3 {
                    let noise: f32 = r.random_range(-0.02..0.02);
                    image[c * hw + p] = (PALETTE[colour][c] * shade + noise).clamp(0.0, 1.0);
                }
            }
            for (o, a) in objects.iter_mut().zip(remaining) {
                o.area = a;
            }
            objects.push(ShapeObject { colour, shape, cx, cy, radius, area: covered.len() });
            break;
        }
    }

    let k = objects.len();
    let mut masks = vec![0.0f32; (k + 1) * hw];
    for (p, &o) in owner.iter().enumerate() {
        let slot = if o == usize::MAX { k } else { o };
        masks[slot * hw + p] = 1.0;
    }
    Sample {
        id: format!("{index:06}.png"),
        image: Tensor::from_parts(vec![3, s, s], image),
        label: dominant_label(&objects),
        masks: Some(Tensor::from_parts(vec![k + 1, s, s], masks)),
        multilabel: Some(multilabel_from_objects(&objects)),
        objects,
    }
}

/// Generates `count` scenes of `image_size²` pixels with 1..=`max_objects` objects each.
///
/// Placements that would leave some object with fewer than
/// [`MIN_OBJECT_PIXELS`] visible pixels are redrawn a bounded number of times
/// and then dropped, so a scene may hold fewer objects than drawn (never zero
/// in practice: the first object always fits).
pub fn generate_shapes_dataset(count: usize, image_size: usize, max_objects: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(AdiosError::Config("count must be at least 1".into()));
    }
    if image_size < 16 {
        return Err(AdiosError::Config(format!("image_size {image_size} below 16")));
    }
    if !(1..=4).contains(&max_objects) {
        return Err(AdiosError::Config(format!("max_objects {max_objects} outside 1..=4")));
    }
    Ok(Dataset { samples: (0..count).map(|i| generate_one(i, image_size, max_objects, seed)).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let a = generate_shapes_dataset(1, 32, 3, 7).unwrap();
        let b = generate_shapes_dataset(1, 32, 3, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_shapes_dataset(1, 32, 3, 8).unwrap();
        assert_ne!(a.samples[0].image, c.samples[0].image);
    }

    #[test]
    fn single_object_scenes() {
        let d = generate_shapes_dataset(20, 32, 1, 3).unwrap();
        for s in &d.samples {
            assert_eq!(s.instance_count(), 1);
        }
    }

    #[test]
    fn masks_partition_and_labels_agree() {
        let d = generate_shapes_dataset(40, 32, 4, 5).unwrap();
        for s in &d.samples {
            let m = s.masks.as_ref().unwrap();
            let (k1, hw) = (m.dim(0), 32 * 32);
            for p in 0..hw {
                let sum: f32 = (0..k1).map(|k| m.data()[k * hw + p]).sum();
                assert_eq!(sum, 1.0);
            }
            assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));
            for (k, o) in s.objects.iter().enumerate() {
                let area = m.data()[k * hw..(k + 1) * hw].iter().filter(|&&v| v == 1.0).count();
                assert_eq!(area, o.area);
                assert!(area >= MIN_OBJECT_PIXELS);
            }
            assert_eq!(s.multilabel.unwrap(), multilabel_from_objects(&s.objects));
            assert!(s.label < NUM_MULTILABELS);
            assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_shapes_dataset(0, 32, 2, 0).is_err());
        assert!(generate_shapes_dataset(1, 8, 2, 0).is_err());
        assert!(generate_shapes_dataset(1, 32, 5, 0).is_err());
    }
}
