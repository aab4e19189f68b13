//! IDX ingestion, class subsets, pooling and model-ready preparation.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::EncodingKind;
use crate::model::Samples;

pub const DATA_DIR_ENV: &str = "QFMIX_DATA";
const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated ({what})")]
    Truncated { path: PathBuf, what: &'static str },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("class list is empty")]
    NoClasses,
    #[error("class {0} is repeated or outside 0..=9")]
    BadClass(u8),
    #[error("unsupported target resolution {0}; use 4, 8 or 16")]
    Resolution(usize),
    #[error("source images are {0}×{0}; pooling needs 28×28")]
    SourceSize(usize),
}

/// Images flattened row-major with values in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source_resolution: usize,
    pub target_resolution: usize,
    pub classes: Vec<u8>,
    pub normalization: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub meta: DatasetMeta,
}

fn open(path: &Path) -> Result<Box<dyn Read>, DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = BufReader::new(File::open(path).map_err(io)?);
    let gz = std::io::BufRead::fill_buf(&mut f)
        .map_err(io)?
        .starts_with(&[0x1f, 0x8b]);
    Ok(if gz {
        Box::new(GzDecoder::new(f))
    } else {
        Box::new(f)
    })
}

fn read_all(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut buf = Vec::new();
    open(path)?
        .read_to_end(&mut buf)
        .map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(buf)
}

fn be_u32(buf: &[u8], at: usize, path: &Path) -> Result<u32, DataError> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated {
            path: path.to_path_buf(),
            what: "header",
        })
}

/// Parses an IDX image file and label file; gzip is detected by content.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let img = read_all(images_path)?;
    let magic = be_u32(&img, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            path: images_path.to_path_buf(),
            found: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let count = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    let px = rows * cols;
    let body = &img[16..];
    if body.len() < count * px {
        return Err(DataError::Truncated {
            path: images_path.to_path_buf(),
            what: "pixels",
        });
    }

    let lab = read_all(labels_path)?;
    let magic = be_u32(&lab, 0, labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::BadMagic {
            path: labels_path.to_path_buf(),
            found: magic,
            expected: LABELS_MAGIC,
        });
    }
    let n_labels = be_u32(&lab, 4, labels_path)? as usize;
    if n_labels != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: n_labels,
        });
    }
    let labels = lab.get(8..8 + count).ok_or_else(|| DataError::Truncated {
        path: labels_path.to_path_buf(),
        what: "labels",
    })?;

    let images = body[..count * px]
        .chunks(px)
        .map(|c| c.iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    Ok(Dataset {
        images,
        labels: labels.iter().map(|&l| l as usize).collect(),
        meta: DatasetMeta {
            source_resolution: rows,
            target_resolution: rows,
            classes: (0..10).collect(),
            normalization: "none".into(),
        },
    })
}

/// `QFMIX_DATA` if set, else `./data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Loads `{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]` from `dir`.
pub fn load_mnist(dir: &Path, split: Split) -> Result<Dataset, DataError> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let pick = |stem: String| {
        let gz = dir.join(format!("{stem}.gz"));
        if gz.exists() {
            gz
        } else {
            dir.join(stem)
        }
    };
    load_idx(
        &pick(format!("{prefix}-images-idx3-ubyte")),
        &pick(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Keeps the listed digits and relabels them by position in `classes`.
pub fn select_subset(ds: &Dataset, classes: &[u8]) -> Result<Dataset, DataError> {
    if classes.is_empty() {
        return Err(DataError::NoClasses);
    }
    for (i, &c) in classes.iter().enumerate() {
        if c > 9 || classes[..i].contains(&c) {
            return Err(DataError::BadClass(c));
        }
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (img, &l) in ds.images.iter().zip(&ds.labels) {
        if let Some(pos) = classes.iter().position(|&c| c as usize == l) {
            images.push(img.clone());
            labels.push(pos);
        }
    }
    let mut meta = ds.meta.clone();
    meta.classes = classes.to_vec();
    Ok(Dataset {
        images,
        labels,
        meta,
    })
}

/// Average pooling of a 28×28 image to k×k, after a centre crop to the
/// largest square divisible by k (28, 24 or 16).
pub fn downsample(image: &[f64], k: usize) -> Result<Vec<f64>, DataError> {
    let side = (image.len() as f64).sqrt() as usize;
    if side != 28 || side * side != image.len() {
        return Err(DataError::SourceSize(side));
    }
    let crop = match k {
        4 => 28,
        8 => 24,
        16 => 16,
        _ => return Err(DataError::Resolution(k)),
    };
    let off = (side - crop) / 2;
    let t = crop / k;
    let mut out = vec![0.0; k * k];
    for (r, row) in out.chunks_mut(k).enumerate() {
        for (c, o) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for dr in 0..t {
                for dc in 0..t {
                    s += image[(off + r * t + dr) * side + off + c * t + dc];
                }
            }
            *o = s / (t * t) as f64;
        }
    }
    Ok(out)
}

impl Dataset {
    pub fn downsampled(&self, k: usize) -> Result<Dataset, DataError> {
        let images = self
            .images
            .iter()
            .map(|im| downsample(im, k))
            .collect::<Result<_, _>>()?;
        let mut meta = self.meta.clone();
        meta.target_resolution = k;
        Ok(Dataset {
            images,
            labels: self.labels.clone(),
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let k = self.labels.iter().max().map_or(0, |m| m + 1);
        let mut c = vec![0; k];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

/// Vectors ready for the first layer, with the L2 scale of each image in
/// amplitude mode (1 in probability mode).
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub samples: Samples,
    pub scales: Vec<f64>,
}

/// Amplitude mode: unit L2 norm (all-zero images become uniform).
/// Probability mode: per-image min-max rescale into [0, 1].
pub fn prepare(ds: &Dataset, encoding: EncodingKind) -> Prepared {
    let mut x = Vec::with_capacity(ds.len());
    let mut scales = Vec::with_capacity(ds.len());
    for (i, img) in ds.images.iter().enumerate() {
        match encoding {
            EncodingKind::Amplitude => {
                let norm = img.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    x.push(img.iter().map(|v| v / norm).collect());
                    scales.push(norm);
                } else {
                    log::warn!("image {i} is all zero; using the uniform vector");
                    let u = 1.0 / (img.len() as f64).sqrt();
                    x.push(vec![u; img.len()]);
                    scales.push(0.0);
                }
            }
            EncodingKind::Probability => {
                let lo = img.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = img.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                x.push(
                    img.iter()
                        .map(|v| if span > 0.0 { (v - lo) / span } else { v.clamp(0.0, 1.0) })
                        .collect(),
                );
                scales.push(1.0);
            }
        }
    }
    Prepared {
        samples: Samples {
            x,
            y: ds.labels.clone(),
        },
        scales,
    }
}

/// Digit subset at resolution k, amplitude-prepared, for both splits.
pub fn mnist_task(dir: &Path, classes: &[u8], k: usize) -> Result<(Samples, Samples), DataError> {
    let load = |split| -> Result<Samples, DataError> {
        let ds = select_subset(&load_mnist(dir, split)?, classes)?.downsampled(k)?;
        Ok(prepare(&ds, EncodingKind::Amplitude).samples)
    };
    Ok((load(Split::Train)?, load(Split::Test)?))
}

/// Seeded shuffle then split off `test_fraction` of the samples.
pub fn split(data: &Samples, test_fraction: f64, seed: u64) -> (Samples, Samples) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (data.len() as f64 * test_fraction).round() as usize;
    let take = |ids: &[usize]| Samples {
        x: ids.iter().map(|&i| data.x[i].clone()).collect(),
        y: ids.iter().map(|&i| data.y[i]).collect(),
    };
    (take(&idx[n_test..]), take(&idx[..n_test]))
}

/// Threshold dataset on 3 qubits: unit vectors from cubed uniforms, labelled
/// by whether the uniform overlap (Σx)²/8 exceeds 1/2. Points within 0.06
/// of the threshold are rejected.
pub fn cap_dataset(count: usize, seed: u64) -> Samples {
    const DIM: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Samples::default();
    while out.len() < count {
        let v: Vec<f64> = (0..DIM).map(|_| rng.gen::<f64>().powi(3)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x: Vec<f64> = v.iter().map(|a| a / norm).collect();
        let s: f64 = x.iter().sum();
        let h = s * s / DIM as f64;
        if (h - 0.5).abs() < 0.06 {
            continue;
        }
        out.x.push(x);
        out.y.push(usize::from(h > 0.5));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx(dir: &Path, magic_img: u32, n_img: u32, n_lab: u32) -> (PathBuf, PathBuf) {
        let ip = dir.join("img");
        let lp = dir.join("lab");
        let mut f = File::create(&ip).unwrap();
        for v in [magic_img, n_img, 2, 2] {
            f.write_all(&v.to_be_bytes()).unwrap();
        }
        f.write_all(&vec![255u8; (n_img * 4) as usize]).unwrap();
        let mut f = File::create(&lp).unwrap();
        for v in [LABELS_MAGIC, n_lab] {
            f.write_all(&v.to_be_bytes()).unwrap();
        }
        f.write_all(&vec![3u8; n_lab as usize]).unwrap();
        (ip, lp)
    }

    fn tmpdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("qfmix-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn idx_parsing_and_errors() {
        let d = tmpdir("idx");
        let (ip, lp) = write_idx(&d, IMAGES_MAGIC, 3, 3);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.images[0], vec![1.0; 4]);

        let (ip, lp) = write_idx(&d, 0x0803_0000, 3, 3);
        let e = load_idx(&ip, &lp).unwrap_err();
        assert!(e.to_string().contains("0x08030000"), "{e}");

        let (ip, lp) = write_idx(&d, IMAGES_MAGIC, 3, 2);
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(DataError::CountMismatch { images: 3, labels: 2 })
        ));
        std::fs::remove_dir_all(d).ok();
    }

    #[test]
    fn subsets() {
        let ds = Dataset {
            images: vec![vec![0.0]; 5],
            labels: vec![3, 6, 1, 6, 3],
            meta: DatasetMeta {
                source_resolution: 1,
                target_resolution: 1,
                classes: (0..10).collect(),
                normalization: "none".into(),
            },
        };
        let s = select_subset(&ds, &[3, 6]).unwrap();
        assert_eq!(s.labels, vec![0, 1, 1, 0]);
        assert_eq!(s.class_counts(), vec![2, 2]);
        assert!(matches!(select_subset(&ds, &[]), Err(DataError::NoClasses)));
        assert!(matches!(select_subset(&ds, &[3, 3]), Err(DataError::BadClass(3))));
    }

    #[test]
    fn pooling() {
        let c = vec![0.3; 784];
        for k in [4, 8, 16] {
            let out = downsample(&c, k).unwrap();
            assert_eq!(out.len(), k * k);
            assert!(out.iter().all(|v| (v - 0.3).abs() < 1e-12));
        }
        assert!(downsample(&vec![0.0; 784], 4).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(downsample(&c, 5), Err(DataError::Resolution(5))));
        // 7×7 tiles hold 24 or 25 lit cells of a checkerboard.
        let cb: Vec<f64> = (0..784).map(|i| ((i / 28 + i % 28) % 2) as f64).collect();
        for v in downsample(&cb, 4).unwrap() {
            assert!((v - 0.5).abs() <= 0.5 / 49.0 + 1e-12, "{v}");
        }
    }

    #[test]
    fn preparation() {
        let ds = Dataset {
            images: vec![vec![0.2, 0.4, 0.0, 0.4], vec![0.0; 4]],
            labels: vec![0, 1],
            meta: DatasetMeta {
                source_resolution: 2,
                target_resolution: 2,
                classes: vec![0, 1],
                normalization: "none".into(),
            },
        };
        let a = prepare(&ds, EncodingKind::Amplitude);
        let n0: f64 = a.samples.x[0].iter().map(|v| v * v).sum();
        assert!((n0 - 1.0).abs() < 1e-12);
        assert!((a.scales[0] - 0.6).abs() < 1e-12);
        assert_eq!(a.samples.x[1], vec![0.5; 4]);
        let p = prepare(&ds, EncodingKind::Probability);
        assert_eq!(p.samples.x[0], vec![0.5, 1.0, 0.0, 1.0]);
        assert!(p.samples.x.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn splits_are_deterministic() {
        let s = cap_dataset(50, 1);
        assert_eq!(cap_dataset(50, 1), s);
        let (a, b) = split(&s, 0.2, 7);
        let (c, d) = split(&s, 0.2, 7);
        assert_eq!((a.len(), b.len()), (40, 10));
        assert_eq!(a, c);
        assert_eq!(b, d);
    }
}
