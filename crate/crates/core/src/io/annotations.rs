use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

/// A box with an optional detector score; ground truth has none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub bbox: BBox<f64>,
    pub confidence: Option<f64>,
}

impl From<BBox<f64>> for LabeledBox {
    fn from(bbox: BBox<f64>) -> Self {
        Self {
            bbox,
            confidence: None,
        }
    }
}

/// One annotated figure. The split is not stored in the file; it is given
/// when the file is loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureRecord {
    pub image_path: String,
    pub width_px: u32,
    pub height_px: u32,
    pub boxes: Vec<LabeledBox>,
    pub split: Split,
}

impl FigureRecord {
    /// Builds a record from pixel-space `(x0, y0, x1, y1)` boxes. Boxes that do
    /// not survive normalization are dropped; the second value counts them.
    pub fn from_pixel_boxes(
        image_path: impl Into<String>,
        width_px: u32,
        height_px: u32,
        boxes: &[(f64, f64, f64, f64)],
        split: Split,
    ) -> (Self, usize) {
        let mut kept = Vec::with_capacity(boxes.len());
        for &(x0, y0, x1, y1) in boxes {
            if let Ok(b) = BBox::from_pixels(x0, y0, x1, y1, width_px, height_px) {
                kept.push(LabeledBox::from(b));
            }
        }
        let dropped = boxes.len() - kept.len();
        let record = Self {
            image_path: image_path.into(),
            width_px,
            height_px,
            boxes: kept,
            split,
        };
        (record, dropped)
    }

    pub fn bboxes(&self) -> Vec<BBox<f64>> {
        self.boxes.iter().map(|b| b.bbox).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct BoxLine {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    image: String,
    width: u32,
    height: u32,
    boxes: Vec<BoxLine>,
}

impl RecordLine {
    fn from_record(r: &FigureRecord) -> Self {
        Self {
            image: r.image_path.clone(),
            width: r.width_px,
            height: r.height_px,
            boxes: r
                .boxes
                .iter()
                .map(|b| {
                    let [x_min, y_min, x_max, y_max] = b.bbox.coords();
                    BoxLine {
                        x_min,
                        y_min,
                        x_max,
                        y_max,
                        confidence: b.confidence,
                    }
                })
                .collect(),
        }
    }

    /// `None` when the figure size or any box is invalid.
    fn into_record(self, split: Split) -> Option<FigureRecord> {
        if self.width == 0 || self.height == 0 {
            return None;
        }
        let boxes = self
            .boxes
            .iter()
            .map(|b| {
                let bbox = BBox::new(b.x_min, b.y_min, b.x_max, b.y_max).ok()?;
                match b.confidence {
                    Some(c) if !c.is_finite() => None,
                    confidence => Some(LabeledBox { bbox, confidence }),
                }
            })
            .collect::<Option<Vec<_>>>()?;
        Some(FigureRecord {
            image_path: self.image,
            width_px: self.width,
            height_px: self.height,
            boxes,
            split,
        })
    }
}

/// Parsed annotation file. Records with invalid boxes are dropped and
/// counted in `skipped`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub records: Vec<FigureRecord>,
    pub skipped: usize,
}

/// Parses JSON Lines from `reader`. Blank lines are ignored; malformed JSON
/// is an error carrying its 1-based line number.
pub fn parse_annotations<R: BufRead>(reader: R, split: Split) -> Result<Corpus, IoError> {
    let mut corpus = Corpus::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line).map_err(|e| IoError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        match parsed.into_record(split) {
            Some(r) => corpus.records.push(r),
            None => {
                log::warn!("line {}: invalid box or size, record skipped", i + 1);
                corpus.skipped += 1;
            }
        }
    }
    Ok(corpus)
}

pub fn load_annotations(path: &Path, split: Split) -> Result<Corpus, IoError> {
    let file = std::fs::File::open(path)?;
    parse_annotations(BufReader::new(file), split)
}

/// Loads an annotation file and checks every referenced image: it must
/// exist under `image_root` and have the annotated dimensions.
pub fn load_corpus(
    annotation_file: &Path,
    image_root: &Path,
    split: Split,
) -> Result<Corpus, IoError> {
    let corpus = load_annotations(annotation_file, split)?;
    for r in &corpus.records {
        let path = resolve_image(image_root, &r.image_path);
        if !path.is_file() {
            return Err(IoError::MissingImage(path));
        }
        let actual = image::image_dimensions(&path).map_err(|source| IoError::Image {
            path: path.clone(),
            source,
        })?;
        if actual != (r.width_px, r.height_px) {
            return Err(IoError::DimensionMismatch {
                path,
                annotated: (r.width_px, r.height_px),
                actual,
            });
        }
    }
    Ok(corpus)
}

/// `image` joined to `root` unless it is already absolute.
pub fn resolve_image(root: &Path, image: &str) -> PathBuf {
    let p = Path::new(image);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// One line per record, fields in a fixed order, each line newline-terminated.
pub fn write_annotations<W: Write>(mut out: W, records: &[FigureRecord]) -> Result<(), IoError> {
    for r in records {
        serde_json::to_writer(&mut out, &RecordLine::from_record(r)).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_corpus(records: &[FigureRecord], annotation_file: &Path) -> Result<(), IoError> {
    if let Some(dir) = annotation_file.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(annotation_file)?;
    write_annotations(BufWriter::new(file), records)
}
