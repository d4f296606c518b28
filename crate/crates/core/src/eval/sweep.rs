//! Grids of (method, N, M, seed) cells with a content-addressed result cache.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fpe::fpe;
use super::methods::{build_embedding, Method};
use super::tpa::{tpa, TpaConfig};
use crate::config::Hyperparameters;
use crate::env::{EnvKind, FeatureVector};
use crate::error::{Error, Result};
use crate::manifest::{encode_f64, sha256_hex};
use crate::tensor::Matrix;
use crate::train::derive_seed;

const CACHE_FORMAT: &str = "sirl-sweep-cell/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub env: EnvKind,
    pub methods: Vec<Method>,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Also emit one FPE row per (method, N, seed).
    pub fpe: bool,
    pub hp: Hyperparameters,
    pub tpa: TpaConfig,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.n.is_empty() || self.m.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("sweep grids must be nonempty"));
        }
        Ok(())
    }
}

/// One CSV line. FPE rows leave `m` empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub env: String,
    pub n: usize,
    pub m: Option<usize>,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Cells computed in this run, and cells served from the cache.
    pub computed: usize,
    pub cache_hits: usize,
    /// Embeddings trained (or drawn) in this run.
    pub embeddings_built: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    format: String,
    key: String,
    rows: Vec<SweepRow>,
    digest: String,
}

/// Content-addressed cell store; every access goes through one lock.
struct Cache {
    dir: Option<PathBuf>,
    lock: Mutex<()>,
}

impl Cache {
    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    fn get(&self, key: &str) -> Result<Option<Vec<SweepRow>>> {
        let Some(path) = self.path(key) else { return Ok(None) };
        let _guard = self.lock.lock().expect("cache lock");
        if !path.exists() {
            return Ok(None);
        }
        let entry: CacheEntry = serde_json::from_str(&fs::read_to_string(&path)?)
            .map_err(|e| Error::format(format!("cache entry {}: {e}", path.display())))?;
        if entry.format != CACHE_FORMAT || entry.key != key || entry.digest != rows_digest(&entry.rows) {
            return Err(Error::format(format!("cache entry {} is corrupted", path.display())));
        }
        Ok(Some(entry.rows))
    }

    fn put(&self, key: &str, rows: &[SweepRow]) -> Result<()> {
        let Some(path) = self.path(key) else { return Ok(()) };
        let entry = CacheEntry {
            format: CACHE_FORMAT.into(),
            key: key.into(),
            rows: rows.to_vec(),
            digest: rows_digest(rows),
        };
        let text = serde_json::to_string_pretty(&entry).expect("rows serialize");
        let _guard = self.lock.lock().expect("cache lock");
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

fn rows_digest(rows: &[SweepRow]) -> String {
    sha256_hex(serde_json::to_string(rows).expect("rows serialize").as_bytes())
}

/// Digest of a pool; part of every cell key.
pub fn pool_digest(inputs: &Matrix, features: &[FeatureVector]) -> String {
    let mut bytes = encode_f64(inputs.data());
    bytes.extend(encode_f64(&features.iter().flatten().copied().collect::<Vec<_>>()));
    sha256_hex(&bytes)
}

#[derive(Serialize)]
struct CellKey<'a> {
    format: &'a str,
    version: &'a str,
    pool: &'a str,
    env: EnvKind,
    method: Method,
    n: usize,
    m: Option<usize>,
    seed: u64,
    hp: &'a Hyperparameters,
    tpa: Option<&'a TpaConfig>,
}

impl CellKey<'_> {
    fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("key serializes").as_bytes())
    }
}

/// Runs every cell of the grid, reusing cached cells under `cache_dir`.
/// Rows come back in grid order: method, N, seed, then FPE before TPA by M.
pub fn run_sweep(
    config: &SweepConfig,
    inputs: &Matrix,
    features: &[FeatureVector],
    cache_dir: Option<&Path>,
) -> Result<SweepOutcome> {
    config.validate()?;
    if let Some(dir) = cache_dir {
        fs::create_dir_all(dir)?;
    }
    let cache = Cache {
        dir: cache_dir.map(Path::to_path_buf),
        lock: Mutex::new(()),
    };
    let pool = pool_digest(inputs, features);
    let version = env!("CARGO_PKG_VERSION");

    let mut groups = Vec::new();
    for &method in &config.methods {
        for &n in &config.n {
            for &seed in &config.seeds {
                groups.push((method, n, seed));
            }
        }
    }

    struct GroupResult {
        rows: Vec<SweepRow>,
        computed: usize,
        hits: usize,
        built: bool,
    }

    let results = groups
        .par_iter()
        .map(|&(method, n, seed)| -> Result<GroupResult> {
            let key = |m: Option<usize>| {
                CellKey {
                    format: CACHE_FORMAT,
                    version,
                    pool: &pool,
                    env: config.env,
                    method,
                    n,
                    m,
                    seed,
                    hp: &config.hp,
                    tpa: m.map(|_| &config.tpa),
                }
                .hash()
            };
            let mut cells: Vec<Option<usize>> = Vec::new();
            if config.fpe {
                cells.push(None);
            }
            cells.extend(config.m.iter().map(|&m| Some(m)));

            let mut out = GroupResult {
                rows: Vec::new(),
                computed: 0,
                hits: 0,
                built: false,
            };
            let mut embedding = None;
            for m in cells {
                let k = key(m);
                if let Some(rows) = cache.get(&k)? {
                    out.rows.extend(rows);
                    out.hits += 1;
                    continue;
                }
                if embedding.is_none() {
                    let rep_seed = derive_seed(seed, "representation");
                    embedding = Some(build_embedding(method.kind, config.env, inputs, features, n, &config.hp, rep_seed)?);
                    out.built = true;
                }
                let emb = embedding.as_ref().expect("built above");
                let (metric, value) = match m {
                    None => ("fpe", fpe(emb, inputs, features, derive_seed(seed, "fpe-split"))?.mse),
                    Some(m) => ("tpa", tpa(emb, inputs, features, m, &config.tpa, method.frozen, seed)?.mean),
                };
                let rows = vec![SweepRow {
                    method: method.to_string(),
                    env: config.env.to_string(),
                    n,
                    m,
                    seed,
                    metric: metric.into(),
                    value,
                }];
                cache.put(&k, &rows)?;
                out.rows.extend(rows);
                out.computed += 1;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut outcome = SweepOutcome {
        rows: Vec::new(),
        computed: 0,
        cache_hits: 0,
        embeddings_built: 0,
    };
    for r in results {
        outcome.rows.extend(r.rows);
        outcome.computed += r.computed;
        outcome.cache_hits += r.hits;
        outcome.embeddings_built += usize::from(r.built);
    }
    Ok(outcome)
}

pub fn write_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::format(e.to_string())))
        .collect()
}
