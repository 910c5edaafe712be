//! Synthetic shapes data, labelled image folders, and two-view augmentation.

pub mod augment;
pub mod folder;
pub mod shapes;

pub use augment::{augment_two_views, AugmentationPolicy};
pub use folder::{load_image_folder, save_image_folder};
pub use shapes::{generate_shapes_dataset, ShapeKind, ShapeObject, COLOURS, NUM_MULTILABELS, PALETTE};

use crate::error::{AdiosError, Result};
use crate::numerics::Tensor;

/// One image with whatever annotation its source provides.
///
/// `image` is `3×H×W` in `[0,1]`. `masks`, when present, is `(K+1)×H×W` with
/// one binary map per object followed by the background map; together they
/// partition the image.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Tensor<f32>,
    pub label: usize,
    pub masks: Option<Tensor<f32>>,
    pub multilabel: Option<[bool; NUM_MULTILABELS]>,
    /// Object metadata; empty unless the sample was generated in-process.
    pub objects: Vec<ShapeObject>,
}

impl Sample {
    pub fn size(&self) -> (usize, usize) {
        (self.image.dim(1), self.image.dim(2))
    }

    /// Number of object instances (excluding background).
    pub fn instance_count(&self) -> usize {
        self.masks.as_ref().map_or(0, |m| m.dim(0) - 1)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_masks(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.masks.is_some())
    }

    pub fn has_multilabels(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.multilabel.is_some())
    }

    pub fn num_classes(&self) -> usize {
        self.samples.iter().map(|s| s.label + 1).max().unwrap_or(0)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<ImageBatch> {
        let samples: Vec<&Sample> = indices.iter().map(|&i| &self.samples[i]).collect();
        ImageBatch::from_samples(&samples)
    }
}

/// A batch of equally sized images, `B×3×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    pub images: Tensor<f32>,
    /// Per-sample `(K_i+1)×H×W` instance-plus-background masks.
    pub masks: Option<Vec<Tensor<f32>>>,
    pub labels: Option<Vec<usize>>,
    pub multilabels: Option<Vec<[bool; NUM_MULTILABELS]>>,
    pub ids: Vec<String>,
}

impl ImageBatch {
    pub fn from_samples(samples: &[&Sample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(AdiosError::Data("empty batch".into()));
        }
        let images: Vec<Tensor<f32>> = samples.iter().map(|s| s.image.clone()).collect();
        let images = Tensor::stack(&images)?;
        let masks = samples.iter().map(|s| s.masks.clone()).collect::<Option<Vec<_>>>();
        let multilabels = samples.iter().map(|s| s.multilabel).collect::<Option<Vec<_>>>();
        Ok(Self {
            images,
            masks,
            labels: Some(samples.iter().map(|s| s.label).collect()),
            multilabels,
            ids: samples.iter().map(|s| s.id.clone()).collect(),
        })
    }

    /// Wraps bare images without annotations.
    pub fn from_images(images: Tensor<f32>) -> Result<Self> {
        if images.ndim() != 4 || images.dim(1) != 3 || images.dim(0) == 0 {
            return Err(AdiosError::Shape(format!("expected B×3×H×W images, got {:?}", images.shape())));
        }
        let b = images.dim(0);
        Ok(Self { images, masks: None, labels: None, multilabels: None, ids: (0..b).map(|i| i.to_string()).collect() })
    }

    pub fn len(&self) -> usize {
        self.images.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.images.dim(2), self.images.dim(3))
    }
}
