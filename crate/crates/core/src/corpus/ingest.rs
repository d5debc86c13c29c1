//! Ingestion of externally labeled images.
//!
//! Annotation lines are `path<TAB>class<TAB>x,y,w,h`. Lines naming the same
//! path become one sample with several boxes. Blank lines and lines starting
//! with `#` are skipped.

use std::path::Path;

use super::{CorpusManifest, LabeledSample, Provenance};
use crate::error::{Error, Result};
use crate::raster::{read_pnm_file, Rect};

fn parse_bbox(field: &str) -> Option<Rect> {
    let parts: Vec<u32> = field
        .split(',')
        .map(|p| p.trim().parse().ok())
        .collect::<Option<_>>()?;
    match parts.as_slice() {
        &[x, y, w, h] => Some(Rect::new(x, y, w, h)),
        _ => None,
    }
}

pub fn ingest_external(root: &Path, annotation_file: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(annotation_file).map_err(|e| Error::io(annotation_file, e))?;
    let mut classes: Vec<String> = Vec::new();
    let mut samples: Vec<LabeledSample> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [path, class, bbox] = fields.as_slice() else {
            return Err(Error::Annotation {
                id: format!("line {}", lineno + 1),
                reason: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        };
        let bbox = parse_bbox(bbox).ok_or_else(|| Error::Annotation {
            id: path.to_string(),
            reason: format!("malformed bbox `{bbox}`"),
        })?;
        let class_id = match classes.iter().position(|c| c == class) {
            Some(k) => k,
            None => {
                classes.push(class.to_string());
                classes.len() - 1
            }
        };
        if let Some(existing) = samples.iter_mut().find(|s| s.id == *path) {
            if existing.class_id != class_id {
                return Err(Error::Annotation {
                    id: path.to_string(),
                    reason: "conflicting classes for one image".into(),
                });
            }
            existing.bboxes.push(bbox);
            continue;
        }
        let full = root.join(path);
        let raster = read_pnm_file(&full)?;
        samples.push(LabeledSample {
            id: path.to_string(),
            raster,
            class_id,
            bboxes: vec![bbox],
            seed_index: None,
            source: Some(full.display().to_string()),
        });
    }
    let manifest = CorpusManifest {
        classes,
        samples,
        provenance: Provenance::External {
            path: annotation_file.display().to_string(),
        },
        master_seed: 0,
    };
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{write_pnm_file, Color, Raster};

    fn fixture() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.ppm", "b.ppm", "c.ppm"] {
            write_pnm_file(&dir.path().join(name), &Raster::filled(64, 64, Color::gray(40))).unwrap();
        }
        dir
    }

    #[test]
    fn three_line_annotation() {
        let dir = fixture();
        let ann = dir.path().join("ann.tsv");
        std::fs::write(&ann, "a.ppm\tcat\t0,0,10,10\nb.ppm\tdog\t5,5,20,20\nc.ppm\tcat\t1,2,3,4\n").unwrap();
        let m = ingest_external(dir.path(), &ann).unwrap();
        assert_eq!(m.samples.len(), 3);
        assert_eq!(m.classes, vec!["cat", "dog"]);
        assert_eq!(m.samples[2].class_id, 0);
    }

    #[test]
    fn repeated_path_collects_boxes() {
        let dir = fixture();
        let ann = dir.path().join("ann.tsv");
        std::fs::write(&ann, "a.ppm\tcat\t0,0,10,10\na.ppm\tcat\t20,20,10,10\n").unwrap();
        let m = ingest_external(dir.path(), &ann).unwrap();
        assert_eq!(m.samples.len(), 1);
        assert_eq!(m.samples[0].bboxes.len(), 2);
    }

    #[test]
    fn out_of_bounds_bbox() {
        let dir = fixture();
        let ann = dir.path().join("ann.tsv");
        std::fs::write(&ann, "a.ppm\tcat\t60,60,20,20\n").unwrap();
        match ingest_external(dir.path(), &ann) {
            Err(Error::Annotation { id, .. }) => assert_eq!(id, "a.ppm"),
            other => panic!("expected annotation error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_names_path() {
        let dir = fixture();
        let ann = dir.path().join("ann.tsv");
        std::fs::write(&ann, "nope.ppm\tcat\t0,0,1,1\n").unwrap();
        match ingest_external(dir.path(), &ann) {
            Err(Error::Io { path, .. }) => assert!(path.ends_with("nope.ppm")),
            other => panic!("expected io error, got {other:?}"),
        }
    }
}
