use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// One CSV of `Filename, AnnotationTag, UpperLeftX, UpperLeftY, LowerRightX, LowerRightY`.
    LisaCsv,
    /// One subdirectory per numeric class id, optional ROI CSV inside.
    GtsrbDir,
    /// Subdirectory name is the class name; no boxes.
    FolderPerClass,
}

/// Crop rectangle in source pixels; `right` and `bottom` are exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub left: u32,
    pub top: u32,
    pub right: u32,
    pub bottom: u32,
}

impl BoundingBox {
    pub fn new(left: u32, top: u32, right: u32, bottom: u32) -> Option<Self> {
        (right > left && bottom > top).then_some(Self {
            left,
            top,
            right,
            bottom,
        })
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.right <= width && self.bottom <= height
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub image_path: PathBuf,
    pub class_name: String,
    pub bounding_box: Option<BoundingBox>,
    /// Stable identifier: the image path relative to the dataset root plus the row.
    pub id: String,
    pub row: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub annotations: Vec<RawAnnotation>,
    /// Malformed rows that were dropped.
    pub skipped: usize,
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "ppm", "pnm"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

fn relative_id(root: &Path, path: &Path, row: usize) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    format!("{}#{row}", rel.to_string_lossy().replace('\\', "/"))
}

/// Reads every annotated sign under `root`.
///
/// The result is sorted by image path, then by row.
pub fn load_dataset(root: &Path, format: DatasetFormat) -> Result<LoadReport> {
    if !root.exists() {
        return Err(Error::Config(format!("dataset root {} does not exist", root.display())));
    }
    let mut report = match format {
        DatasetFormat::LisaCsv => load_lisa(root)?,
        DatasetFormat::GtsrbDir => load_gtsrb(root)?,
        DatasetFormat::FolderPerClass => load_folders(root)?,
    };
    report
        .annotations
        .sort_by(|a, b| a.image_path.cmp(&b.image_path).then(a.row.cmp(&b.row)));
    if report.skipped > 0 {
        warn!("skipped {} malformed annotation row(s) under {}", report.skipped, root.display());
    }
    Ok(report)
}

fn load_folders(root: &Path) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let class_name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        for file in sorted_entries(&dir)?.into_iter().filter(|p| is_image(p)) {
            report.annotations.push(RawAnnotation {
                id: relative_id(root, &file, 0),
                image_path: file,
                class_name: class_name.clone(),
                bounding_box: None,
                row: 0,
            });
        }
    }
    Ok(report)
}

fn normalize_header(h: &str) -> String {
    h.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

fn detect_delimiter(path: &Path) -> Result<u8> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or("");
    let semis = first.matches(';').count();
    let commas = first.matches(',').count();
    Ok(if semis >= commas && semis > 0 { b';' } else { b',' })
}

/// Column positions resolved from a CSV header.
struct Columns {
    filename: usize,
    tag: Option<usize>,
    bbox: Option<[usize; 4]>,
}

fn find(headers: &[String], names: &[&str]) -> Option<usize> {
    headers.iter().position(|h| names.contains(&h.as_str()))
}

fn resolve_columns(headers: &[String], need_tag: bool, path: &Path) -> Result<Columns> {
    let filename = find(headers, &["filename", "file", "path"]).ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        reason: "no Filename column".into(),
    })?;
    let tag = find(headers, &["annotationtag", "classname", "class", "tag", "classid"]);
    if need_tag && tag.is_none() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "no AnnotationTag column".into(),
        });
    }
    let left = find(headers, &["upperleftx", "upperleftcornerx", "roix1", "x1"]);
    let top = find(headers, &["upperlefty", "upperleftcornery", "roiy1", "y1"]);
    let right = find(headers, &["lowerrightx", "lowerrightcornerx", "roix2", "x2"]);
    let bottom = find(headers, &["lowerrighty", "lowerrightcornery", "roiy2", "y2"]);
    let bbox = match (left, top, right, bottom) {
        (Some(l), Some(t), Some(r), Some(b)) => Some([l, t, r, b]),
        _ => None,
    };
    Ok(Columns { filename, tag, bbox })
}

struct CsvRow {
    file: String,
    tag: Option<String>,
    bbox: Option<BoundingBox>,
}

/// Parses one annotation CSV. Rows that cannot be parsed count as skipped.
fn read_annotation_csv(path: &Path, need_tag: bool, skipped: &mut usize) -> Result<Vec<(usize, CsvRow)>> {
    let delimiter = detect_delimiter(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(normalize_header).collect();
    let cols = resolve_columns(&headers, need_tag, path)?;
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let Ok(record) = record else {
            *skipped += 1;
            continue;
        };
        let Some(file) = record.get(cols.filename).map(str::trim).filter(|s| !s.is_empty()) else {
            *skipped += 1;
            continue;
        };
        let tag = match cols.tag.map(|i| record.get(i).map(str::trim)) {
            Some(Some(t)) if !t.is_empty() => Some(t.to_string()),
            Some(_) if need_tag => {
                *skipped += 1;
                continue;
            }
            _ => None,
        };
        let bbox = match cols.bbox {
            Some(idx) => {
                let parsed: Option<Vec<u32>> = idx
                    .iter()
                    .map(|&i| record.get(i).and_then(|v| v.trim().parse::<u32>().ok()))
                    .collect();
                match parsed.and_then(|v| BoundingBox::new(v[0], v[1], v[2], v[3])) {
                    Some(b) => Some(b),
                    None => {
                        *skipped += 1;
                        continue;
                    }
                }
            }
            None => None,
        };
        rows.push((
            row,
            CsvRow {
                file: file.to_string(),
                tag,
                bbox,
            },
        ));
    }
    Ok(rows)
}

fn load_lisa(root: &Path) -> Result<LoadReport> {
    let (csvs, base) = if root.is_file() {
        (vec![root.to_path_buf()], root.parent().unwrap_or(Path::new(".")).to_path_buf())
    } else {
        let csvs: Vec<PathBuf> = sorted_entries(root)?
            .into_iter()
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
            .collect();
        (csvs, root.to_path_buf())
    };
    let mut report = LoadReport::default();
    for csv_path in csvs {
        let dir = csv_path.parent().unwrap_or(&base).to_path_buf();
        for (row, r) in read_annotation_csv(&csv_path, true, &mut report.skipped)? {
            let image_path = dir.join(&r.file);
            report.annotations.push(RawAnnotation {
                id: relative_id(&base, &image_path, row),
                image_path,
                class_name: r.tag.expect("tag column required"),
                bounding_box: r.bbox,
                row,
            });
        }
    }
    Ok(report)
}

fn load_gtsrb(root: &Path) -> Result<LoadReport> {
    let mut report = LoadReport::default();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let raw = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let Ok(class_id) = raw.parse::<u32>() else {
            continue;
        };
        let class_name = class_id.to_string();
        let entries = sorted_entries(&dir)?;
        let csv_path = entries
            .iter()
            .find(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")));
        if let Some(csv_path) = csv_path {
            for (row, r) in read_annotation_csv(csv_path, false, &mut report.skipped)? {
                let image_path = dir.join(&r.file);
                report.annotations.push(RawAnnotation {
                    id: relative_id(root, &image_path, row),
                    image_path,
                    class_name: class_name.clone(),
                    bounding_box: r.bbox,
                    row,
                });
            }
        } else {
            for file in entries.into_iter().filter(|p| is_image(p)) {
                report.annotations.push(RawAnnotation {
                    id: relative_id(root, &file, 0),
                    image_path: file,
                    class_name: class_name.clone(),
                    bounding_box: None,
                    row: 0,
                });
            }
        }
    }
    Ok(report)
}

/// Renames classes through `aliases` (foreign name -> catalog name) and drops
/// annotations whose class has no alias.
pub fn remap_classes(annotations: Vec<RawAnnotation>, aliases: &BTreeMap<String, String>) -> Vec<RawAnnotation> {
    annotations
        .into_iter()
        .filter_map(|mut a| {
            let mapped = aliases.get(&a.class_name)?;
            a.class_name = mapped.clone();
            Some(a)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(path: &Path) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, b"").unwrap();
    }

    #[test]
    fn missing_root_is_a_config_error() {
        let err = load_dataset(Path::new("/definitely/not/here"), DatasetFormat::FolderPerClass).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn empty_directory_yields_no_annotations() {
        let tmp = tempfile::tempdir().unwrap();
        for format in [DatasetFormat::FolderPerClass, DatasetFormat::GtsrbDir, DatasetFormat::LisaCsv] {
            let report = load_dataset(tmp.path(), format).unwrap();
            assert!(report.annotations.is_empty());
            assert_eq!(report.skipped, 0);
        }
    }

    #[test]
    fn folder_tree_counts_every_file() {
        let tmp = tempfile::tempdir().unwrap();
        for class in ["a", "b", "c"] {
            for i in 0..5 {
                touch(&tmp.path().join(class).join(format!("{i}.png")));
            }
        }
        touch(&tmp.path().join("a").join("notes.txt"));
        let report = load_dataset(tmp.path(), DatasetFormat::FolderPerClass).unwrap();
        assert_eq!(report.annotations.len(), 15);
        assert_eq!(report.annotations[0].id, "a/0.png#0");
        assert!(report.annotations.windows(2).all(|w| w[0].image_path <= w[1].image_path));
    }

    #[test]
    fn lisa_csv_with_semicolons_and_bad_rows() {
        let tmp = tempfile::tempdir().unwrap();
        let csv = "Filename;Annotation tag;Upper left corner X;Upper left corner Y;Lower right corner X;Lower right corner Y;Occluded\n\
                   frames/b.png;stop;10;10;40;40;0\n\
                   frames/a.png;yield;0;0;20;30;0\n\
                   frames/a.png;stop;5;5;5;9;0\n\
                   frames/c.png;stop;x;1;2;3;0\n\
                   frames/a.png;merge;1;2;11;12;1\n";
        fs::write(tmp.path().join("allAnnotations.csv"), csv).unwrap();
        let report = load_dataset(tmp.path(), DatasetFormat::LisaCsv).unwrap();
        assert_eq!(report.skipped, 2);
        let tags: Vec<_> = report.annotations.iter().map(|a| a.class_name.as_str()).collect();
        assert_eq!(tags, ["yield", "merge", "stop"]);
        assert_eq!(report.annotations[0].bounding_box, BoundingBox::new(0, 0, 20, 30));
    }

    #[test]
    fn lisa_csv_with_commas() {
        let tmp = tempfile::tempdir().unwrap();
        let csv = "Filename,AnnotationTag,UpperLeftX,UpperLeftY,LowerRightX,LowerRightY\nimg.png,stop,1,2,3,4\n";
        fs::write(tmp.path().join("ann.csv"), csv).unwrap();
        let report = load_dataset(tmp.path(), DatasetFormat::LisaCsv).unwrap();
        assert_eq!(report.annotations.len(), 1);
        assert_eq!(report.annotations[0].image_path, tmp.path().join("img.png"));
    }

    #[test]
    fn gtsrb_dirs_with_and_without_roi_csv() {
        let tmp = tempfile::tempdir().unwrap();
        let d14 = tmp.path().join("00014");
        fs::create_dir_all(&d14).unwrap();
        fs::write(
            d14.join("GT-00014.csv"),
            "Filename;Width;Height;Roi.X1;Roi.Y1;Roi.X2;Roi.Y2;ClassId\n00000.ppm;30;30;5;5;25;25;14\n00001.ppm;30;30;5;5;25;25;14\n",
        )
        .unwrap();
        touch(&tmp.path().join("00027").join("a.ppm"));
        touch(&tmp.path().join("readme").join("x.ppm"));
        let report = load_dataset(tmp.path(), DatasetFormat::GtsrbDir).unwrap();
        assert_eq!(report.annotations.len(), 3);
        assert_eq!(report.annotations[0].class_name, "14");
        assert_eq!(report.annotations[0].bounding_box, BoundingBox::new(5, 5, 25, 25));
        assert_eq!(report.annotations[2].class_name, "27");

        let aliases = BTreeMap::from([("14".to_string(), "stop".to_string())]);
        let mapped = remap_classes(report.annotations, &aliases);
        assert_eq!(mapped.len(), 2);
        assert!(mapped.iter().all(|a| a.class_name == "stop"));
    }
}
