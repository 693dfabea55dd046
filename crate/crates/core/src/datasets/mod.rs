//! Dataset acquisition and parsing: MNIST and Fashion-MNIST (IDX) and the
//! 8×8 handwritten digits corpus (CSV).

mod digits;
mod fetch;
mod idx;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::{encode_image, EncodingConfig, SpikeTime};
use crate::error::{Error, Result};

pub use digits::load_digits_csv;
pub use fetch::{default_cache_dir, fetch, import_local, CACHE_ENV};
pub use idx::{load_idx, read_idx_images, read_idx_labels};

/// One labelled image with integer intensities in `[0, i_max]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub pixels: Vec<u8>,
    pub label: u8,
}

/// A list of samples sharing one intensity range and class count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub i_max: u32,
    pub classes: usize,
}

impl Dataset {
    /// Validates every sample against the declared ranges.
    pub fn new(samples: Vec<Sample>, i_max: u32, classes: usize) -> Result<Self> {
        for (n, s) in samples.iter().enumerate() {
            if s.label as usize >= classes {
                return Err(Error::Input(format!(
                    "sample {n}: label {} outside 0..{classes}",
                    s.label
                )));
            }
            if let Some(p) = s.pixels.iter().find(|&&p| p as u32 > i_max) {
                return Err(Error::Input(format!("sample {n}: pixel {p} exceeds i_max {i_max}")));
            }
        }
        Ok(Dataset {
            samples,
            i_max,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_size(&self) -> usize {
        self.samples.first().map_or(0, |s| s.pixels.len())
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.samples.iter().map(|s| s.label as usize)
    }

    /// Latency-encodes every sample.
    pub fn encode(&self, t_max: u32) -> Result<EncodedDataset> {
        let cfg = EncodingConfig::new(self.i_max, t_max)?;
        let inputs = self
            .samples
            .iter()
            .map(|s| encode_image(&s.pixels, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedDataset {
            inputs,
            labels: self.labels().collect(),
            classes: self.classes,
        })
    }

    /// Stratified random subset of about `total` samples.
    pub fn stratified_subset(&self, total: usize, seed: u64) -> Result<Dataset> {
        if total >= self.len() {
            return Ok(self.clone());
        }
        let ratio = total as f64 / self.len() as f64;
        let (subset, _) = split(self, ratio, seed)?;
        Ok(subset)
    }
}

/// Spike-time inputs ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub inputs: Vec<Vec<SpikeTime>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_size(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }
}

/// How a cached file's bytes are verified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Checksum {
    Sha256(&'static str),
    Md5(&'static str),
}

/// One file of a dataset as stored in the cache.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteFile {
    /// File name inside the dataset's cache directory.
    pub name: &'static str,
    pub url: String,
    /// Gunzip the download before storing it.
    pub gunzip: bool,
    /// Checksum of the stored bytes.
    pub checksum: Checksum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DatasetName {
    Mnist,
    FashionMnist,
    Digits,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::FashionMnist => "fashion-mnist",
            DatasetName::Digits => "digits",
        }
    }
}

impl std::str::FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetName::Mnist),
            "fashion-mnist" | "fashion_mnist" | "fashionmnist" => Ok(DatasetName::FashionMnist),
            "digits" | "digits8x8" | "8x8-digits" => Ok(DatasetName::Digits),
            other => Err(Error::usage(format!("unknown dataset {other:?}"))),
        }
    }
}

impl std::fmt::Display for DatasetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a dataset comes from and what it should contain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub files: Vec<RemoteFile>,
    pub cache_dir: PathBuf,
    pub i_max: u32,
    pub classes: usize,
    /// Expected (train, test) sample counts; digits ships as one file.
    pub expected_counts: (usize, usize),
}

const MNIST_BASE: &str = "https://ossci-datasets.s3.amazonaws.com/mnist";
const FASHION_BASE: &str = "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com";

impl DatasetSpec {
    /// Built-in description; files land in `<cache_root>/<name>/`.
    pub fn builtin(name: DatasetName, cache_root: &Path) -> Self {
        let cache_dir = cache_root.join(name.as_str());
        match name {
            DatasetName::Mnist => DatasetSpec {
                name,
                files: vec![
                    RemoteFile {
                        name: "train-images-idx3-ubyte",
                        url: format!("{MNIST_BASE}/train-images-idx3-ubyte.gz"),
                        gunzip: true,
                        checksum: Checksum::Sha256("ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db"),
                    },
                    RemoteFile {
                        name: "train-labels-idx1-ubyte",
                        url: format!("{MNIST_BASE}/train-labels-idx1-ubyte.gz"),
                        gunzip: true,
                        checksum: Checksum::Sha256("65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5"),
                    },
                    RemoteFile {
                        name: "t10k-images-idx3-ubyte",
                        url: format!("{MNIST_BASE}/t10k-images-idx3-ubyte.gz"),
                        gunzip: true,
                        checksum: Checksum::Sha256("0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7"),
                    },
                    RemoteFile {
                        name: "t10k-labels-idx1-ubyte",
                        url: format!("{MNIST_BASE}/t10k-labels-idx1-ubyte.gz"),
                        gunzip: true,
                        checksum: Checksum::Sha256("ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2"),
                    },
                ],
                cache_dir,
                i_max: 255,
                classes: 10,
                expected_counts: (60_000, 10_000),
            },
            DatasetName::FashionMnist => DatasetSpec {
                name,
                files: vec![
                    RemoteFile {
                        name: "train-images-idx3-ubyte.gz",
                        url: format!("{FASHION_BASE}/train-images-idx3-ubyte.gz"),
                        gunzip: false,
                        checksum: Checksum::Md5("8d4fb7e6c68d591d4c3dfef9ec88bf0d"),
                    },
                    RemoteFile {
                        name: "train-labels-idx1-ubyte.gz",
                        url: format!("{FASHION_BASE}/train-labels-idx1-ubyte.gz"),
                        gunzip: false,
                        checksum: Checksum::Md5("25c81989df183df01b3e8a0aad5dffbe"),
                    },
                    RemoteFile {
                        name: "t10k-images-idx3-ubyte.gz",
                        url: format!("{FASHION_BASE}/t10k-images-idx3-ubyte.gz"),
                        gunzip: false,
                        checksum: Checksum::Md5("bef4ecab320f06d8554ea6380940ec79"),
                    },
                    RemoteFile {
                        name: "t10k-labels-idx1-ubyte.gz",
                        url: format!("{FASHION_BASE}/t10k-labels-idx1-ubyte.gz"),
                        gunzip: false,
                        checksum: Checksum::Md5("bb300cfdad3c16e7a12a480ee83cd310"),
                    },
                ],
                cache_dir,
                i_max: 255,
                classes: 10,
                expected_counts: (60_000, 10_000),
            },
            DatasetName::Digits => DatasetSpec {
                name,
                files: vec![RemoteFile {
                    name: "digits.csv",
                    url: "https://raw.githubusercontent.com/scikit-learn/scikit-learn/main/sklearn/datasets/data/digits.csv.gz".into(),
                    gunzip: true,
                    checksum: Checksum::Sha256("6ebb3d2fee246a4e99363262ddf8a00a3c41bee6014c373ed9d9216ba7f651b8"),
                }],
                cache_dir,
                i_max: 15,
                classes: 10,
                expected_counts: (1797, 0),
            },
        }
    }

    pub fn path(&self, file: &RemoteFile) -> PathBuf {
        self.cache_dir.join(file.name)
    }

    fn file(&self, index: usize) -> PathBuf {
        self.path(&self.files[index])
    }
}

/// Train and test sets for a fetched dataset. Digits ships as one file and
/// is split 80/20, stratified, with `split_seed`.
pub fn load(spec: &DatasetSpec, split_seed: u64) -> Result<(Dataset, Dataset)> {
    match spec.name {
        DatasetName::Mnist | DatasetName::FashionMnist => {
            let train = load_idx(&spec.file(0), &spec.file(1))?;
            let test = load_idx(&spec.file(2), &spec.file(3))?;
            for (set, expected, what) in [
                (&train, spec.expected_counts.0, "train"),
                (&test, spec.expected_counts.1, "test"),
            ] {
                if set.len() != expected {
                    return Err(Error::Input(format!(
                        "{} {what} set has {} samples, expected {expected}",
                        spec.name,
                        set.len()
                    )));
                }
            }
            Ok((train, test))
        }
        DatasetName::Digits => {
            let all = load_digits_csv(&spec.file(0))?;
            if all.len() != spec.expected_counts.0 {
                return Err(Error::Input(format!(
                    "digits has {} samples, expected {}",
                    all.len(),
                    spec.expected_counts.0
                )));
            }
            split(&all, 0.8, split_seed)
        }
    }
}

/// Deterministic class-stratified shuffled split. Each class contributes
/// `round(n_class · ratio)` samples to the first set.
pub fn split(data: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::usage(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, s) in data.samples.iter().enumerate() {
        by_class.entry(s.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for indices in by_class.values_mut() {
        indices.shuffle(&mut rng);
        let take = (indices.len() as f64 * ratio).round() as usize;
        first.extend_from_slice(&indices[..take]);
        second.extend_from_slice(&indices[take..]);
    }
    first.shuffle(&mut rng);
    second.shuffle(&mut rng);
    let pick = |ix: &[usize]| Dataset {
        samples: ix.iter().map(|&i| data.samples[i].clone()).collect(),
        i_max: data.i_max,
        classes: data.classes,
    };
    Ok((pick(&first), pick(&second)))
}
