//! On-disk dataset layout:
//!
//! ```text
//! <root>/images/<name>.png         8-bit RGB
//! <root>/labels.csv                filename,label
//! <root>/masks/<name>/<k>.png      8-bit grayscale 0/255; objects, then background last
//! <root>/multilabels.csv           filename,c0s0,...,c7s2
//! ```
//!
//! The last two are only present for shapes datasets.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::datasets::shapes::{COLOURS, NUM_MULTILABELS, SHAPES};
use crate::datasets::{Dataset, Sample};
use crate::error::{AdiosError, Result};
use crate::numerics::Tensor;

fn image_err(path: &Path, e: impl std::fmt::Display) -> AdiosError {
    AdiosError::Image { path: path.to_path_buf(), message: e.to_string() }
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> AdiosError {
    AdiosError::Data(format!("{}: {e}", path.display()))
}

pub fn multilabel_header() -> Vec<String> {
    let mut h = vec!["filename".to_string()];
    for c in 0..COLOURS {
        for s in 0..SHAPES {
            h.push(format!("c{c}s{s}"));
        }
    }
    h
}

/// Decodes an 8-bit RGB PNG into `3×H×W` reals, exactly `value/255`.
pub fn read_rgb(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[c * h * w + y as usize * w + x as usize] = px[c] as f32 / 255.0;
        }
    }
    Ok(Tensor::from_parts(vec![3, h, w], data))
}

pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_rgb(path: &Path, image: &Tensor<f32>) -> Result<()> {
    let (h, w) = (image.dim(1), image.dim(2));
    let d = image.data();
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let p = y as usize * w + x as usize;
        Rgb([to_u8(d[p]), to_u8(d[h * w + p]), to_u8(d[2 * h * w + p])])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

fn write_mask(path: &Path, mask: &[f32], h: usize, w: usize) -> Result<()> {
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if mask[y as usize * w + x as usize] > 0.5 { 255 } else { 0 }])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

fn read_mask(path: &Path) -> Result<(Vec<f32>, usize, usize)> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((img.pixels().map(|p| if p[0] > 127 { 1.0 } else { 0.0 }).collect(), h, w))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| AdiosError::io(path, e))
}

/// Writes a dataset in the folder layout, overwriting files of the same name.
pub fn save_image_folder(dataset: &Dataset, root: &Path) -> Result<()> {
    let images = root.join("images");
    create_dir(&images)?;
    let labels_path = root.join("labels.csv");
    let mut labels = csv::Writer::from_path(&labels_path).map_err(|e| csv_err(&labels_path, e))?;
    labels.write_record(["filename", "label"]).map_err(|e| csv_err(&labels_path, e))?;
    let ml_path = root.join("multilabels.csv");
    let mut multilabels = if dataset.has_multilabels() {
        let mut w = csv::Writer::from_path(&ml_path).map_err(|e| csv_err(&ml_path, e))?;
        w.write_record(multilabel_header()).map_err(|e| csv_err(&ml_path, e))?;
        Some(w)
    } else {
        None
    };
    for s in &dataset.samples {
        write_rgb(&images.join(&s.id), &s.image)?;
        labels.write_record([s.id.clone(), s.label.to_string()]).map_err(|e| csv_err(&labels_path, e))?;
        if let Some(m) = &s.masks {
            let dir = root.join("masks").join(&s.id);
            create_dir(&dir)?;
            let (h, w) = (m.dim(1), m.dim(2));
            for k in 0..m.dim(0) {
                write_mask(&dir.join(format!("{k}.png")), &m.data()[k * h * w..(k + 1) * h * w], h, w)?;
            }
        }
        if let (Some(w), Some(ml)) = (multilabels.as_mut(), s.multilabel) {
            let mut rec = vec![s.id.clone()];
            rec.extend(ml.iter().map(|&b| u8::from(b).to_string()));
            w.write_record(rec).map_err(|e| csv_err(&ml_path, e))?;
        }
    }
    labels.flush().map_err(|e| AdiosError::io(&labels_path, e))?;
    if let Some(mut w) = multilabels {
        w.flush().map_err(|e| AdiosError::io(&ml_path, e))?;
    }
    Ok(())
}

fn read_labels(path: &Path) -> Result<HashMap<String, usize>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["filename", "label"] {
        return Err(AdiosError::Data(format!("{}: header must be filename,label", path.display())));
    }
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let label = rec[1]
            .trim()
            .parse::<usize>()
            .map_err(|e| AdiosError::Data(format!("{}: label for {}: {e}", path.display(), &rec[0])))?;
        out.insert(rec[0].to_string(), label);
    }
    Ok(out)
}

fn read_multilabels(path: &Path) -> Result<HashMap<String, [bool; NUM_MULTILABELS]>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = rdr.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    if header != multilabel_header() {
        return Err(AdiosError::Data(format!("{}: unexpected multilabel header", path.display())));
    }
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let mut ml = [false; NUM_MULTILABELS];
        for (i, v) in ml.iter_mut().enumerate() {
            *v = match rec[i + 1].trim() {
                "1" => true,
                "0" => false,
                other => return Err(AdiosError::Data(format!("{}: bad multilabel value {other}", path.display()))),
            };
        }
        out.insert(rec[0].to_string(), ml);
    }
    Ok(out)
}

fn read_instance_masks(dir: &Path, h: usize, w: usize) -> Result<Option<Tensor<f32>>> {
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut data = Vec::new();
    let mut k = 0;
    loop {
        let p = dir.join(format!("{k}.png"));
        if !p.exists() {
            break;
        }
        let (m, mh, mw) = read_mask(&p)?;
        if (mh, mw) != (h, w) {
            return Err(AdiosError::Data(format!("{}: mask size {mh}×{mw}, image {h}×{w}", p.display())));
        }
        data.extend(m);
        k += 1;
    }
    if k == 0 {
        return Ok(None);
    }
    Ok(Some(Tensor::from_parts(vec![k, h, w], data)))
}

/// Loads a dataset from the folder layout, ordered by filename.
pub fn load_image_folder(root: &Path) -> Result<Dataset> {
    let images_dir = root.join("images");
    let entries = fs::read_dir(&images_dir).map_err(|e| AdiosError::io(&images_dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for e in entries {
        let p = e.map_err(|e| AdiosError::io(&images_dir, e))?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")) {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(AdiosError::Data(format!("{}: no PNG images (empty dataset)", images_dir.display())));
    }
    let labels = read_labels(&root.join("labels.csv"))?;
    let ml_path = root.join("multilabels.csv");
    let multilabels = if ml_path.exists() { Some(read_multilabels(&ml_path)?) } else { None };

    let mut samples = Vec::with_capacity(files.len());
    for path in files {
        let id = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let image = read_rgb(&path)?;
        let label = *labels
            .get(&id)
            .ok_or_else(|| AdiosError::Data(format!("{}: no label for {id}", root.join("labels.csv").display())))?;
        let (h, w) = (image.dim(1), image.dim(2));
        let masks = read_instance_masks(&root.join("masks").join(&id), h, w)?;
        let multilabel = match &multilabels {
            Some(m) => Some(*m.get(&id).ok_or_else(|| {
                AdiosError::Data(format!("{}: no multilabel row for {id}", ml_path.display()))
            })?),
            None => None,
        };
        samples.push(Sample { id, image, label, masks, multilabel, objects: Vec::new() });
    }
    Ok(Dataset { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::generate_shapes_dataset;

    #[test]
    fn roundtrip_preserves_order_labels_and_masks() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_shapes_dataset(3, 16, 2, 1).unwrap();
        save_image_folder(&d, dir.path()).unwrap();
        let loaded = load_image_folder(dir.path()).unwrap();
        assert_eq!(loaded.len(), 3);
        for (a, b) in d.samples.iter().zip(&loaded.samples) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.masks, b.masks);
            assert_eq!(a.multilabel, b.multilabel);
            for (&x, &y) in a.image.data().iter().zip(b.image.data()) {
                assert_eq!(y, to_u8(x) as f32 / 255.0);
            }
        }
        let again = load_image_folder(dir.path()).unwrap();
        assert_eq!(loaded, again);
    }

    #[test]
    fn empty_folder_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("images")).unwrap();
        fs::write(dir.path().join("labels.csv"), "filename,label\n").unwrap();
        let err = load_image_folder(dir.path()).unwrap_err();
        assert!(err.to_string().contains("empty"), "{err}");
    }

    #[test]
    fn missing_label_and_bad_file_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_shapes_dataset(2, 16, 1, 1).unwrap();
        save_image_folder(&d, dir.path()).unwrap();
        fs::write(dir.path().join("labels.csv"), "filename,label\n000000.png,3\n").unwrap();
        let err = load_image_folder(dir.path()).unwrap_err();
        assert!(err.to_string().contains("000001.png"), "{err}");

        fs::write(dir.path().join("images").join("000001.png"), b"not a png").unwrap();
        fs::write(dir.path().join("labels.csv"), "filename,label\n000000.png,3\n000001.png,1\n").unwrap();
        let err = load_image_folder(dir.path()).unwrap_err();
        assert!(err.to_string().contains("000001.png"), "{err}");
    }
}
