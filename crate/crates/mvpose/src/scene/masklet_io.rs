use super::SceneError;
use crate::detect::{Masklet, TemplateEntry, TemplateLibrary};
use crate::geom::RigidTransform;
use crate::mask::{BinaryMask, RleMask};
use crate::{ClassId, MaskletId, ViewId};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One masklet entry on disk: either an inline COCO-style RLE or a
/// reference to a 0/255 PNG, plus an optional feature-file reference.
#[derive(Debug, Serialize, Deserialize)]
pub struct MaskletEntry {
    pub masklet_id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[u32; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rle: Option<RleMask>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub png: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
}

/// The per-view masklet file.
#[derive(Debug, Serialize, Deserialize)]
pub struct MaskletFile {
    pub view_id: u32,
    pub masklets: Vec<MaskletEntry>,
}

/// Loads one view's masklets. PNG entries are resolved relative to the
/// masklet file; declared bounding boxes are checked against the decoded
/// masks.
pub fn load_masklet_file(path: &Path) -> Result<Vec<Masklet>, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::io(path, e))?;
    let file: MaskletFile = serde_json::from_str(&text).map_err(|e| SceneError::parse(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::with_capacity(file.masklets.len());
    for entry in file.masklets {
        let mask = match (&entry.rle, &entry.png) {
            (Some(rle), _) => rle.decode()?,
            (None, Some(png)) => load_mask_png(&dir.join(png))?,
            (None, None) => {
                return Err(SceneError::Masklet(format!(
                    "masklet {} in {} has neither rle nor png",
                    entry.masklet_id,
                    path.display()
                )))
            }
        };
        let features = match &entry.features {
            Some(rel) => Some(load_feature_file(&dir.join(rel))?),
            None => None,
        };
        let masklet = Masklet::from_mask(
            ViewId(file.view_id),
            MaskletId(entry.masklet_id),
            mask,
            features,
        )
        .map_err(|e| SceneError::Masklet(e.to_string()))?;
        if let Some(declared) = entry.bbox {
            let bb = masklet.bbox;
            if [bb.xmin, bb.ymin, bb.xmax, bb.ymax] != declared {
                return Err(SceneError::Masklet(format!(
                    "masklet {} in {}: declared bbox {declared:?} is not the tight box {:?}",
                    entry.masklet_id,
                    path.display(),
                    [bb.xmin, bb.ymin, bb.xmax, bb.ymax]
                )));
            }
        }
        out.push(masklet);
    }
    Ok(out)
}

/// Writes one view's masklets with inline RLE payloads.
pub fn save_masklet_file(
    view_id: ViewId,
    masklets: &[(MaskletId, &BinaryMask)],
    path: &Path,
) -> Result<(), SceneError> {
    let entries = masklets
        .iter()
        .map(|(id, mask)| {
            let bb = mask.bbox().expect("masklet mask must be non-empty");
            MaskletEntry {
                masklet_id: id.0,
                bbox: Some([bb.xmin, bb.ymin, bb.xmax, bb.ymax]),
                rle: Some(mask.to_rle()),
                png: None,
                features: None,
            }
        })
        .collect();
    let file = MaskletFile {
        view_id: view_id.0,
        masklets: entries,
    };
    let text = serde_json::to_string(&file).expect("masklet file serializes");
    std::fs::write(path, text).map_err(|e| SceneError::io(path, e))
}

/// Writes a mask as a 0/255 grayscale PNG.
pub fn save_mask_png(mask: &BinaryMask, path: &Path) -> Result<(), SceneError> {
    let mut img = image::GrayImage::new(mask.width(), mask.height());
    for (x, y) in mask.iter_set() {
        img.put_pixel(x, y, image::Luma([255]));
    }
    img.save(path).map_err(|e| SceneError::parse(path, e))
}

fn load_mask_png(path: &Path) -> Result<BinaryMask, SceneError> {
    let img = image::open(path).map_err(|e| SceneError::parse(path, e))?.into_luma8();
    let (w, h) = img.dimensions();
    Ok(BinaryMask::from_fn(w, h, |x, y| img.get_pixel(x, y).0[0] >= 128))
}

/// Feature file: header of two little-endian u32 (count, dimension)
/// followed by `count * dimension` little-endian f32 values.
pub fn load_feature_file(path: &Path) -> Result<Vec<Vec<f32>>, SceneError> {
    let data = std::fs::read(path).map_err(|e| SceneError::io(path, e))?;
    if data.len() < 8 {
        return Err(SceneError::parse(path, "feature file shorter than its header"));
    }
    let count = u32::from_le_bytes(data[0..4].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
    let expected = 8 + count * dim * 4;
    if data.len() != expected {
        return Err(SceneError::parse(
            path,
            format!("feature file has {} bytes, expected {expected}", data.len()),
        ));
    }
    let mut vectors = Vec::with_capacity(count);
    let mut offset = 8;
    for _ in 0..count {
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            v.push(f32::from_le_bytes(data[offset..offset + 4].try_into().unwrap()));
            offset += 4;
        }
        vectors.push(v);
    }
    Ok(vectors)
}

pub fn save_feature_file(vectors: &[Vec<f32>], path: &Path) -> Result<(), SceneError> {
    let dim = vectors.first().map_or(0, |v| v.len());
    let mut data = Vec::with_capacity(8 + vectors.len() * dim * 4);
    data.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
    data.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in vectors {
        assert_eq!(v.len(), dim, "all feature vectors must share one dimension");
        for &x in v {
            data.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, data).map_err(|e| SceneError::io(path, e))
}

/// Template-library manifest: per class a feature file and optional
/// template poses (16 row-major values each, identity when omitted).
#[derive(Debug, Serialize, Deserialize)]
struct TemplateManifest {
    classes: Vec<TemplateClassEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TemplateClassEntry {
    class_id: u32,
    features: String,
    #[serde(default)]
    template_poses: Option<Vec<Vec<f64>>>,
}

pub fn load_template_library(path: &Path) -> Result<TemplateLibrary, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::io(path, e))?;
    let manifest: TemplateManifest =
        serde_json::from_str(&text).map_err(|e| SceneError::parse(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut library = TemplateLibrary::new();
    for entry in manifest.classes {
        let features = load_feature_file(&dir.join(&entry.features))?;
        let poses = match entry.template_poses {
            Some(rows) => {
                if rows.len() != features.len() {
                    return Err(SceneError::parse(
                        path,
                        format!(
                            "class {}: {} template poses for {} features",
                            entry.class_id,
                            rows.len(),
                            features.len()
                        ),
                    ));
                }
                rows.into_iter()
                    .map(|row| {
                        if row.len() != 16 {
                            return Err(SceneError::parse(path, "template pose needs 16 values"));
                        }
                        let mut m = [0.0; 16];
                        m.copy_from_slice(&row);
                        Ok(RigidTransform::from_mat4_row_major(&m))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
            None => vec![RigidTransform::identity(); features.len()],
        };
        let entries = features
            .into_iter()
            .zip(poses)
            .map(|(feature, template_pose)| TemplateEntry {
                feature,
                template_pose,
            })
            .collect();
        library.insert(ClassId(entry.class_id), entries);
    }
    Ok(library)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("mvpose_maskio_{name}"));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn masklet_rle_round_trip() {
        let dir = tmpdir("rle");
        let path = dir.join("view_0.json");
        let mask = BinaryMask::from_fn(12, 9, |x, y| (3..8).contains(&x) && (2..6).contains(&y));
        save_masklet_file(ViewId(0), &[(MaskletId(5), &mask)], &path).unwrap();
        let loaded = load_masklet_file(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].masklet_id, MaskletId(5));
        assert_eq!(loaded[0].view_id, ViewId(0));
        assert_eq!(loaded[0].mask, mask);
        assert_eq!(loaded[0].area, mask.area());
    }

    #[test]
    fn png_masklets_load() {
        let dir = tmpdir("png");
        let mask_path = dir.join("m0.png");
        let mut img = image::GrayImage::new(10, 10);
        for y in 2..5 {
            for x in 1..7 {
                img.put_pixel(x, y, image::Luma([255]));
            }
        }
        img.save(&mask_path).unwrap();
        let index = dir.join("view_1.json");
        std::fs::write(
            &index,
            r#"{"view_id":1,"masklets":[{"masklet_id":0,"png":"m0.png"}]}"#,
        )
        .unwrap();
        let loaded = load_masklet_file(&index).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].area, 18);
    }

    #[test]
    fn mismatched_bbox_is_rejected() {
        let dir = tmpdir("badbox");
        let path = dir.join("view_0.json");
        let mask = BinaryMask::from_fn(6, 6, |x, y| x == 2 && y == 3);
        let rle = mask.to_rle();
        let file = MaskletFile {
            view_id: 0,
            masklets: vec![MaskletEntry {
                masklet_id: 1,
                bbox: Some([0, 0, 5, 5]),
                rle: Some(rle),
                png: None,
                features: None,
            }],
        };
        std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        assert!(load_masklet_file(&path).is_err());
    }

    #[test]
    fn feature_file_round_trip() {
        let dir = tmpdir("feat");
        let path = dir.join("f.bin");
        let vectors = vec![vec![1.0f32, -2.5, 0.25], vec![0.0, 4.0, 9.5]];
        save_feature_file(&vectors, &path).unwrap();
        let loaded = load_feature_file(&path).unwrap();
        assert_eq!(loaded, vectors);
    }

    #[test]
    fn template_library_loads_with_poses() {
        let dir = tmpdir("tmpl");
        save_feature_file(&[vec![1.0f32, 0.0], vec![0.0, 1.0]], &dir.join("c1.bin")).unwrap();
        let manifest = dir.join("templates.json");
        std::fs::write(
            &manifest,
            r#"{"classes":[{"class_id":1,"features":"c1.bin"}]}"#,
        )
        .unwrap();
        let lib = load_template_library(&manifest).unwrap();
        let entries = lib.entries(ClassId(1)).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].feature, vec![1.0, 0.0]);
    }
}
