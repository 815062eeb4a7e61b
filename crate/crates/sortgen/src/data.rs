//! Line-delimited JSON dataset files.
//!
//! A dataset directory holds:
//!
//! - `catalog.jsonl`: one item per line, `{"format", "id", "emb", "price", "ctr", "cvr", "cat"}`
//! - `train.jsonl`: one impression per line, `{"format", "user", "items", "clicks", "pays"}`
//! - `pools.jsonl`: one held-out pool per line, `{"format", "user", "latent", "items"}`
//! - `sim.toml`: the simulator configuration, including the ground-truth model
//!
//! Every record carries `"format": "sortgen-data-v1"`. An empty record set is
//! an empty file.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sortgen_core::simulator::{Dataset, EvalPool, ImpressionSample, SimConfig, SimUser};
use sortgen_core::{Item, LabelVector, UserContext};

pub const DATA_FORMAT: &str = "sortgen-data-v1";

pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const POOLS_FILE: &str = "pools.jsonl";
pub const SIM_FILE: &str = "sim.toml";

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
}

/// Item fields as they appear in files and requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemRecord {
    pub id: u64,
    pub emb: Vec<f64>,
    pub price: f64,
    pub ctr: f64,
    pub cvr: f64,
    pub cat: u32,
}

impl From<&Item> for ItemRecord {
    fn from(i: &Item) -> Self {
        Self { id: i.id, emb: i.embedding.clone(), price: i.price, ctr: i.prior_ctr, cvr: i.prior_cvr, cat: i.category }
    }
}

impl From<ItemRecord> for Item {
    fn from(r: ItemRecord) -> Self {
        Item { id: r.id, embedding: r.emb, price: r.price, prior_ctr: r.ctr, prior_cvr: r.cvr, category: r.cat }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogRecord {
    pub format: String,
    pub id: u64,
    pub emb: Vec<f64>,
    pub price: f64,
    pub ctr: f64,
    pub cvr: f64,
    pub cat: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub format: String,
    pub user: Vec<f64>,
    pub items: Vec<ItemRecord>,
    pub clicks: Vec<u8>,
    pub pays: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolRecord {
    pub format: String,
    /// Features shown to the model.
    pub user: Vec<f64>,
    /// Hidden taste used by the ground truth.
    pub latent: Vec<f64>,
    pub items: Vec<ItemRecord>,
}

trait Versioned {
    fn format(&self) -> &str;
}

macro_rules! versioned {
    ($($t:ty),*) => {$(
        impl Versioned for $t {
            fn format(&self) -> &str {
                &self.format
            }
        }
    )*};
}
versioned!(CatalogRecord, SampleRecord, PoolRecord);

fn flags(v: &[bool]) -> Vec<u8> {
    v.iter().map(|&b| u8::from(b)).collect()
}

fn unflag(v: &[u8]) -> Result<Vec<bool>, String> {
    v.iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(format!("label {other} is not 0 or 1")),
        })
        .collect()
}

impl From<&Item> for CatalogRecord {
    fn from(i: &Item) -> Self {
        let r = ItemRecord::from(i);
        Self { format: DATA_FORMAT.into(), id: r.id, emb: r.emb, price: r.price, ctr: r.ctr, cvr: r.cvr, cat: r.cat }
    }
}

impl From<CatalogRecord> for Item {
    fn from(r: CatalogRecord) -> Self {
        ItemRecord { id: r.id, emb: r.emb, price: r.price, ctr: r.ctr, cvr: r.cvr, cat: r.cat }.into()
    }
}

impl From<&ImpressionSample> for SampleRecord {
    fn from(s: &ImpressionSample) -> Self {
        Self {
            format: DATA_FORMAT.into(),
            user: s.user.features.clone(),
            items: s.items.iter().map(ItemRecord::from).collect(),
            clicks: flags(s.labels.clicks()),
            pays: flags(s.labels.pays()),
        }
    }
}

impl TryFrom<SampleRecord> for ImpressionSample {
    type Error = String;

    fn try_from(r: SampleRecord) -> Result<Self, String> {
        if r.clicks.len() != r.items.len() {
            return Err(format!("{} items but {} click labels", r.items.len(), r.clicks.len()));
        }
        let labels = LabelVector::new(unflag(&r.clicks)?, unflag(&r.pays)?).map_err(|e| e.to_string())?;
        Ok(Self { user: UserContext::new(r.user), items: r.items.into_iter().map(Item::from).collect(), labels })
    }
}

impl From<&EvalPool> for PoolRecord {
    fn from(p: &EvalPool) -> Self {
        Self {
            format: DATA_FORMAT.into(),
            user: p.user.context.features.clone(),
            latent: p.user.latent.clone(),
            items: p.pool.iter().map(ItemRecord::from).collect(),
        }
    }
}

impl From<PoolRecord> for EvalPool {
    fn from(r: PoolRecord) -> Self {
        EvalPool {
            user: SimUser { latent: r.latent, context: UserContext::new(r.user) },
            pool: r.items.into_iter().map(Item::from).collect(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

/// Writes one compact JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<usize, DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let mut n = 0;
    for r in records {
        serde_json::to_writer(&mut out, &r).map_err(|e| DataError::Record {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(io_err(path))?;
        n += 1;
    }
    out.flush().map_err(io_err(path))?;
    Ok(n)
}

/// Parses one document per line; failures name the 1-based line and field path.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let record = parse_document(&line).map_err(|message| DataError::Record {
            path: path.to_path_buf(),
            line: k + 1,
            message,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Deserializes one JSON document, reporting the field path on failure.
pub fn parse_document<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.inner().to_string()
        } else {
            format!("at `{path}`: {}", e.inner())
        }
    })?;
    de.end().map_err(|e| e.to_string())?;
    Ok(value)
}

fn read_versioned<R, T>(path: &Path, convert: impl Fn(R) -> Result<T, String>) -> Result<Vec<T>, DataError>
where
    R: DeserializeOwned + Versioned,
{
    read_jsonl::<R>(path)?
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let bad = |message| DataError::Record { path: path.to_path_buf(), line: k + 1, message };
            if r.format() != DATA_FORMAT {
                return Err(bad(format!("unsupported format `{}`", r.format())));
            }
            convert(r).map_err(bad)
        })
        .collect()
}

pub fn write_samples(path: &Path, samples: &[ImpressionSample]) -> Result<usize, DataError> {
    write_jsonl(path, samples.iter().map(SampleRecord::from))
}

pub fn read_samples(path: &Path) -> Result<Vec<ImpressionSample>, DataError> {
    read_versioned(path, |r: SampleRecord| ImpressionSample::try_from(r))
}

pub fn write_catalog(path: &Path, catalog: &[Item]) -> Result<usize, DataError> {
    write_jsonl(path, catalog.iter().map(CatalogRecord::from))
}

pub fn read_catalog(path: &Path) -> Result<Vec<Item>, DataError> {
    read_versioned(path, |r: CatalogRecord| Ok(Item::from(r)))
}

pub fn write_pools(path: &Path, pools: &[EvalPool]) -> Result<usize, DataError> {
    write_jsonl(path, pools.iter().map(PoolRecord::from))
}

pub fn read_pools(path: &Path) -> Result<Vec<EvalPool>, DataError> {
    read_versioned(path, |r: PoolRecord| Ok(EvalPool::from(r)))
}

/// A dataset together with the simulator settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredDataset {
    pub sim: SimConfig,
    pub data: Dataset,
}

/// Writes the four dataset files into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, stored: &StoredDataset) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let sim = toml::to_string(&stored.sim)?;
    fs::write(dir.join(SIM_FILE), sim).with_context(|| format!("writing {}", dir.join(SIM_FILE).display()))?;
    write_catalog(&dir.join(CATALOG_FILE), &stored.data.catalog)?;
    write_samples(&dir.join(TRAIN_FILE), &stored.data.samples)?;
    write_pools(&dir.join(POOLS_FILE), &stored.data.pools)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> anyhow::Result<StoredDataset> {
    let sim_path = dir.join(SIM_FILE);
    let text = fs::read_to_string(&sim_path).with_context(|| format!("reading {}", sim_path.display()))?;
    let sim: SimConfig = toml::from_str(&text).with_context(|| format!("parsing {}", sim_path.display()))?;
    Ok(StoredDataset {
        sim,
        data: Dataset {
            catalog: read_catalog(&dir.join(CATALOG_FILE))?,
            samples: read_samples(&dir.join(TRAIN_FILE))?,
            pools: read_pools(&dir.join(POOLS_FILE))?,
        },
    })
}
