//! Datasets: IDX and CSV ingestion, synthetic generators, seeded
//! subsampling and min-max scaling to `[-1, 1]`.
//!
//! IDX files may be gzip-compressed; compression is detected from the
//! content, not the file name. On export a `.gz` suffix selects gzip.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Datum, Target};
use crate::tensor::{DenseVector, SeededRng};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub items: Vec<Datum>,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub provenance: String,
}

impl Dataset {
    /// Checks the range and label invariants.
    pub fn new(items: Vec<Datum>, num_classes: usize, provenance: impl Into<String>) -> Result<Self> {
        let first = items.first().ok_or(Error::Empty("dataset"))?;
        let feature_dim = first.x.len();
        for z in &items {
            if z.x.len() != feature_dim {
                return Err(Error::Dimension {
                    expected: feature_dim,
                    found: z.x.len(),
                });
            }
            if z.x.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::config("features must lie in [-1, 1]"));
            }
            if let Target::Class(label) = z.y {
                if label >= num_classes {
                    return Err(Error::Label {
                        label,
                        classes: num_classes,
                    });
                }
            }
        }
        Ok(Dataset {
            items,
            num_classes,
            feature_dim,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `(first n, rest)`.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::config(format!("cannot split {} items at {n}", self.len())));
        }
        let part = |items: &[Datum], tag: &str| Dataset {
            items: items.to_vec(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            provenance: format!("{} [{tag}]", self.provenance),
        };
        Ok((part(&self.items[..n], &format!("..{n}")), part(&self.items[n..], &format!("{n}.."))))
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset: offset as u64,
        message: message.into(),
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(buf: &[u8], offset: usize) -> Result<u32> {
    buf.get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| parse_err(offset, "truncated header"))
}

/// Parses an IDX buffer with the given magic; returns `(dims, payload)`.
fn parse_idx(buf: &[u8], magic: u32) -> Result<(Vec<usize>, &[u8])> {
    let found = be_u32(buf, 0)?;
    if found != magic {
        return Err(parse_err(0, format!("bad magic {found:#010x}, expected {magic:#010x}")));
    }
    let ndim = (magic & 0xff) as usize;
    let dims: Vec<usize> = (0..ndim).map(|i| be_u32(buf, 4 + 4 * i).map(|d| d as usize)).collect::<Result<_>>()?;
    let header = 4 + 4 * ndim;
    let expected: usize = dims.iter().product();
    let payload = &buf[header..];
    if payload.len() < expected {
        return Err(parse_err(buf.len(), format!("truncated payload: {} of {expected} bytes", payload.len())));
    }
    if payload.len() > expected {
        return Err(parse_err(header + expected, "trailing bytes after payload"));
    }
    Ok((dims, payload))
}

/// `x = 2·(p/255) − 1`.
pub fn pixel_to_feature(p: u8) -> f64 {
    2.0 * (p as f64 / 255.0) - 1.0
}

/// Inverse of [`pixel_to_feature`], rounded to the nearest level.
pub fn feature_to_pixel(x: f64) -> u8 {
    ((x + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Loads an IDX image/label pair.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = read_maybe_gz(images)?;
    let lab = read_maybe_gz(labels)?;
    let (idims, pixels) = parse_idx(&img, IDX_IMAGES)?;
    let (ldims, lbytes) = parse_idx(&lab, IDX_LABELS)?;
    if idims[0] != ldims[0] {
        return Err(parse_err(4, format!("{} images but {} labels", idims[0], ldims[0])));
    }
    let d = idims[1] * idims[2];
    if idims[0] == 0 || d == 0 {
        return Err(Error::Empty("IDX file"));
    }
    let num_classes = *lbytes.iter().max().expect("non-empty") as usize + 1;
    let items = pixels
        .chunks_exact(d)
        .zip(lbytes)
        .map(|(px, &l)| Datum::new(DenseVector::new(px.iter().map(|&p| pixel_to_feature(p)).collect()).expect("finite"), Target::Class(l as usize)))
        .collect();
    Dataset::new(items, num_classes, format!("idx:{}", images.display()))
}

fn write_maybe_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "gz") {
        let mut gz = GzEncoder::new(f, Compression::default());
        gz.write_all(bytes)?;
        gz.finish()?.flush()?;
    } else {
        f.write_all(bytes)?;
        f.flush()?;
    }
    Ok(())
}

/// Writes `ds` as an IDX pair. Features are quantized to 8-bit pixels; a
/// square feature count is written as `side × side`, anything else as
/// `1 × d`.
pub fn write_idx(ds: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    let n = ds.len();
    let side = (ds.feature_dim as f64).sqrt().round() as usize;
    let (rows, cols) = if side * side == ds.feature_dim { (side, side) } else { (1, ds.feature_dim) };
    let mut lab = IDX_LABELS.to_be_bytes().to_vec();
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    for z in &ds.items {
        match z.y {
            Target::Class(c) if c <= u8::MAX as usize => lab.push(c as u8),
            _ => return Err(Error::config("IDX export needs class labels below 256")),
        }
    }
    let mut img = IDX_IMAGES.to_be_bytes().to_vec();
    for d in [n, rows, cols] {
        img.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for z in &ds.items {
        img.extend(z.x.iter().map(|&x| feature_to_pixel(x)));
    }
    write_maybe_gz(images, &img)?;
    write_maybe_gz(labels, &lab)
}

/// Per-column min-max scaling to `[-1, 1]`.
///
/// Constant columns map to 0. Columns already spanning exactly `[-1, 1]`
/// are left untouched, which makes the map idempotent.
pub fn normalize_min_max(rows: &mut [Vec<f64>]) {
    let Some(d) = rows.first().map(Vec::len) else { return };
    for j in 0..d {
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
        if lo == -1.0 && hi == 1.0 {
            continue;
        }
        for r in rows.iter_mut() {
            r[j] = if hi > lo { (2.0 * (r[j] - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0) } else { 0.0 };
        }
    }
}

/// Loads a CSV file with a header row. `label_column` names the column
/// holding non-negative integer class labels; every other column is a
/// feature.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::config(format!("no column named {label_column:?}")))?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let offset = rec.position().map_or(0, |p| p.byte() as usize);
        if rec.len() != headers.len() {
            return Err(parse_err(offset, format!("ragged row: {} fields, expected {}", rec.len(), headers.len())));
        }
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(offset, format!("non-numeric cell {cell:?} in column {:?}", &headers[j])))?;
            if !v.is_finite() {
                return Err(parse_err(offset, format!("non-finite cell in column {:?}", &headers[j])));
            }
            if j == label_idx {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(parse_err(offset, format!("label {v} is not a class index")));
                }
                labels.push(v as usize);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Empty("CSV dataset"));
    }
    normalize_min_max(&mut rows);
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let items = rows
        .into_iter()
        .zip(labels)
        .map(|(r, l)| Ok(Datum::new(DenseVector::new(r)?, Target::Class(l))))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(items, num_classes, format!("csv:{}", path.display()))
}

/// Seeded draw of `n` items without replacement, in draw order.
pub fn subsample(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > ds.len() {
        return Err(Error::config(format!("cannot draw {n} of {} items", ds.len())));
    }
    if n == 0 {
        return Err(Error::Empty("subsample"));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    SeededRng::new(seed).shuffle(&mut idx);
    Ok(Dataset {
        items: idx[..n].iter().map(|&i| ds.items[i].clone()).collect(),
        num_classes: ds.num_classes,
        feature_dim: ds.feature_dim,
        provenance: format!("{} | subsample(n={n}, seed={seed})", ds.provenance),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Classes `0` and `1` at `±separation·e₁` plus unit isotropic noise.
    TwoGaussians,
    /// The points `(1, 0, …)` and `(-1, 0, …)` with labels 0 and 1, repeated.
    Separable2pt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub dim: usize,
    #[serde(default)]
    pub separation: f64,
    pub seed: u64,
}

/// Generates a two-class dataset; labels alternate `0, 1, 0, …` and the
/// features are min-max scaled to `[-1, 1]`.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n < 2 || spec.dim == 0 {
        return Err(Error::config("synthetic data needs n >= 2 and dim >= 1"));
    }
    if !spec.separation.is_finite() {
        return Err(Error::config("separation must be finite"));
    }
    let mut rng = SeededRng::new(spec.seed);
    let mut rows: Vec<Vec<f64>> = (0..spec.n)
        .map(|i| {
            let sgn = if i % 2 == 0 { 1.0 } else { -1.0 };
            match spec.kind {
                SyntheticKind::TwoGaussians => (0..spec.dim)
                    .map(|j| rng.standard_normal() + if j == 0 { sgn * spec.separation } else { 0.0 })
                    .collect(),
                SyntheticKind::Separable2pt => (0..spec.dim).map(|j| if j == 0 { sgn } else { 0.0 }).collect(),
            }
        })
        .collect();
    normalize_min_max(&mut rows);
    let items = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| Ok(Datum::new(DenseVector::new(r)?, Target::Class(i % 2))))
        .collect::<Result<Vec<_>>>()?;
    let name = match spec.kind {
        SyntheticKind::TwoGaussians => "two-gaussians",
        SyntheticKind::Separable2pt => "separable-2pt",
    };
    Dataset::new(
        items,
        2,
        format!("synthetic:{name}(n={}, dim={}, separation={}, seed={})", spec.n, spec.dim, spec.separation, spec.seed),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_endpoints() {
        assert_eq!(pixel_to_feature(0), -1.0);
        assert_eq!(pixel_to_feature(255), 1.0);
        for p in 0..=255u8 {
            assert_eq!(feature_to_pixel(pixel_to_feature(p)), p);
        }
    }

    #[test]
    fn normalization_cases() {
        let mut rows = vec![vec![3.0, 5.0, 0.0], vec![1.0, 5.0, 4.0], vec![2.0, 5.0, 2.0]];
        normalize_min_max(&mut rows);
        assert_eq!(rows, vec![vec![1.0, 0.0, -1.0], vec![-1.0, 0.0, 1.0], vec![0.0, 0.0, 0.0]]);
        let again = rows.clone();
        normalize_min_max(&mut rows);
        assert_eq!(rows, again);
    }

    #[test]
    fn dataset_invariants() {
        let ok = Datum::class(vec![0.5], 1).unwrap();
        assert!(Dataset::new(vec![ok.clone()], 2, "t").is_ok());
        assert!(matches!(Dataset::new(vec![ok.clone()], 1, "t"), Err(Error::Label { .. })));
        assert!(Dataset::new(vec![Datum::class(vec![1.5], 0).unwrap()], 2, "t").is_err());
        assert!(Dataset::new(vec![ok, Datum::class(vec![0.0, 0.0], 0).unwrap()], 2, "t").is_err());
        assert!(matches!(Dataset::new(Vec::new(), 2, "t"), Err(Error::Empty(_))));
    }

    #[test]
    fn synthetic_shapes() {
        let ds = make_synthetic(&SyntheticSpec {
            kind: SyntheticKind::TwoGaussians,
            n: 200,
            dim: 5,
            separation: 10.0,
            seed: 1,
        })
        .unwrap();
        assert_eq!((ds.len(), ds.feature_dim, ds.num_classes), (200, 5, 2));
        // class 0 sits on the positive side of e₁ after scaling
        let mean0: f64 = ds.items.iter().filter(|z| z.label() == Some(0)).map(|z| z.x[0]).sum::<f64>() / 100.0;
        assert!(mean0 > 0.5);
        let two = make_synthetic(&SyntheticSpec {
            kind: SyntheticKind::Separable2pt,
            n: 2,
            dim: 3,
            separation: 0.0,
            seed: 0,
        })
        .unwrap();
        assert_eq!(two.items[0].x.as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(two.items[1].x.as_slice(), &[-1.0, 0.0, 0.0]);
    }

    #[test]
    fn subsample_cases() {
        let ds = make_synthetic(&SyntheticSpec {
            kind: SyntheticKind::TwoGaussians,
            n: 50,
            dim: 2,
            separation: 1.0,
            seed: 4,
        })
        .unwrap();
        let full = subsample(&ds, 50, 9).unwrap();
        let mut a: Vec<f64> = full.items.iter().map(|z| z.x[1]).collect();
        let mut b: Vec<f64> = ds.items.iter().map(|z| z.x[1]).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        assert_eq!(subsample(&ds, 10, 3).unwrap(), subsample(&ds, 10, 3).unwrap());
        assert!(subsample(&ds, 51, 3).is_err());
        let (x, y) = ds.split_at(20).unwrap();
        assert_eq!((x.len(), y.len()), (20, 30));
    }

    #[test]
    fn idx_parse_errors_name_offsets() {
        let mut buf = IDX_LABELS.to_be_bytes().to_vec();
        buf.extend_from_slice(&3u32.to_be_bytes());
        buf.extend_from_slice(&[1, 2]);
        match parse_idx(&buf, IDX_LABELS) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("{other:?}"),
        }
        match parse_idx(&buf, IDX_IMAGES) {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("magic"));
            }
            other => panic!("{other:?}"),
        }
    }
}
