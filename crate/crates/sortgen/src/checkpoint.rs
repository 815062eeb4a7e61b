//! Plain-text checkpoints.
//!
//! ```text
//! sortgen-ckpt-v1
//! config_hash 9c2a0e4b1d7f3a55
//! config {"l_s":30,"l_o":10,...}
//! param embed.w 22,32 0.0123 -0.0456 ...
//! ```
//!
//! Values use the shortest decimal form that parses back to the same double.
//! The hash is FNV-1a 64 over the embedded config line, so a checkpoint can be
//! matched against the configuration a caller expects.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sortgen_core::nn::{ParamStore, Tensor};
use sortgen_core::{EngineConfig, SortModel};

pub const CKPT_FORMAT: &str = "sortgen-ckpt-v1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: checkpoint config hash {found:016x} does not match the expected config ({expected:016x})")]
    ConfigMismatch { path: String, found: u64, expected: u64 },
    #[error("{path}: {source}")]
    Model { path: String, source: sortgen_core::Error },
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn config_line(config: &EngineConfig) -> String {
    serde_json::to_string(config).expect("config serializes")
}

pub fn config_hash(config: &EngineConfig) -> u64 {
    fnv1a(config_line(config).as_bytes())
}

/// A model architecture bound to its trained parameters.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: SortModel,
    pub params: ParamStore,
    pub hash: u64,
}

impl Checkpoint {
    pub fn new(config: &EngineConfig, params: ParamStore) -> Result<Self, sortgen_core::Error> {
        let model = SortModel::new(config)?;
        let params = model.adopt(&params)?;
        Ok(Self { model, params, hash: config_hash(config) })
    }

    pub fn config(&self) -> &EngineConfig {
        self.model.config()
    }
}

pub fn render(config: &EngineConfig, params: &ParamStore) -> String {
    let line = config_line(config);
    let mut out = String::new();
    let _ = writeln!(out, "{CKPT_FORMAT}");
    let _ = writeln!(out, "config_hash {:016x}", fnv1a(line.as_bytes()));
    let _ = writeln!(out, "config {line}");
    for (name, t) in params.iter() {
        let shape: Vec<String> = t.shape().iter().map(ToString::to_string).collect();
        let _ = write!(out, "param {name} {}", shape.join(","));
        for v in t.data() {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
    }
    out
}

/// Writes through a temporary file so readers never see a partial checkpoint.
pub fn save(path: &Path, config: &EngineConfig, params: &ParamStore) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, render(config, params)).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn parse(path: &str, text: &str) -> Result<Checkpoint, CheckpointError> {
    let err = |line: usize, message: String| CheckpointError::Parse { path: path.into(), line, message };
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    match lines.next() {
        Some((_, CKPT_FORMAT)) => {}
        Some((n, other)) => return Err(err(n, format!("expected `{CKPT_FORMAT}`, found `{other}`"))),
        None => return Err(err(1, "empty file".into())),
    }
    let (n, hash_line) = lines.next().ok_or_else(|| err(2, "missing config_hash".into()))?;
    let stated = hash_line
        .strip_prefix("config_hash ")
        .and_then(|h| u64::from_str_radix(h, 16).ok())
        .ok_or_else(|| err(n, "malformed config_hash line".into()))?;
    let (n, cfg_line) = lines.next().ok_or_else(|| err(3, "missing config".into()))?;
    let cfg_text = cfg_line.strip_prefix("config ").ok_or_else(|| err(n, "malformed config line".into()))?;
    if fnv1a(cfg_text.as_bytes()) != stated {
        return Err(err(n, "embedded config does not match config_hash".into()));
    }
    let config: EngineConfig = crate::data::parse_document(cfg_text).map_err(|m| err(n, m))?;

    let mut params = ParamStore::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        if parts.next() != Some("param") {
            return Err(err(n, "expected a `param` line".into()));
        }
        let name = parts.next().ok_or_else(|| err(n, "missing parameter name".into()))?;
        let shape: Vec<usize> = parts
            .next()
            .ok_or_else(|| err(n, "missing shape".into()))?
            .split(',')
            .map(|d| d.parse().map_err(|_| err(n, format!("bad shape component `{d}`"))))
            .collect::<Result<_, _>>()?;
        let data: Vec<f64> = parts
            .map(|v| v.parse().map_err(|_| err(n, format!("bad value `{v}`"))))
            .collect::<Result<_, _>>()?;
        let tensor = Tensor::new(shape, data).map_err(|e| err(n, e.to_string()))?;
        params.add(name, tensor).map_err(|e| err(n, e.to_string()))?;
    }
    let mut ckpt = Checkpoint::new(&config, params).map_err(|source| CheckpointError::Model { path: path.into(), source })?;
    ckpt.hash = stated;
    Ok(ckpt)
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    parse(&path.display().to_string(), &text)
}

/// Loads and checks that the checkpoint was trained under `expected`.
pub fn load_expecting(path: &Path, expected: &EngineConfig) -> Result<Checkpoint, CheckpointError> {
    let ckpt = load(path)?;
    let want = config_hash(expected);
    if ckpt.hash != want {
        return Err(CheckpointError::ConfigMismatch { path: path.display().to_string(), found: ckpt.hash, expected: want });
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EngineConfig {
        EngineConfig { d_model: 8, head_hidden: 4, n_layers: 1, ..EngineConfig::default() }
    }

    #[test]
    fn render_parse_is_exact() {
        let cfg = small();
        let model = SortModel::new(&cfg).unwrap();
        let params = model.init_params(3);
        let text = render(&cfg, &params);
        let back = parse("mem", &text).unwrap();
        assert_eq!(back.params.values(), params.values());
        assert_eq!(render(back.config(), &back.params), text);
    }

    #[test]
    fn tampered_config_is_rejected() {
        let cfg = small();
        let params = SortModel::new(&cfg).unwrap().init_params(3);
        let text = render(&cfg, &params).replace("\"l_o\":10", "\"l_o\":9");
        assert!(parse("mem", &text).unwrap_err().to_string().contains("config_hash"));
    }

    #[test]
    fn bad_value_names_line() {
        let cfg = small();
        let params = SortModel::new(&cfg).unwrap().init_params(3);
        let mut text = render(&cfg, &params);
        text = text.replacen("param ", "param_ ", 1);
        let e = parse("mem", &text).unwrap_err().to_string();
        assert!(e.starts_with("mem:4:"), "{e}");
    }

    #[test]
    fn missing_parameter_is_a_model_error() {
        let cfg = small();
        let params = SortModel::new(&cfg).unwrap().init_params(3);
        let text = render(&cfg, &params);
        let cut: Vec<&str> = text.lines().take(5).collect();
        assert!(matches!(parse("mem", &cut.join("\n")), Err(CheckpointError::Model { .. })));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
