//! Call embeddings and the ground-truth × prediction cosine similarity matrix.
//!
//! Encoders implement [`EncoderPort`]. The built-in encoder is a signed,
//! hashed bag of character 3-grams; external encoders speak a small JSON
//! protocol either over a child process's stdio (one request per line) or
//! over HTTP `POST /encode`:
//!
//! ```text
//! request:  {"texts": ["...", ...]}
//! response: {"vectors": [[f64, ...], ...], "dim": n}
//! ```

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serialize::{serialize_call, SerializationPolicy};
use crate::trajectory::ToolCall;

pub const DEFAULT_BUILTIN_DIM: usize = 512;
pub const DEFAULT_EXTERNAL_DIM: usize = 384;
pub const MIN_BUILTIN_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if let Some(pos) = components.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Cosine similarity clamped to `[-1, 1]`. Equal nonzero vectors give exactly 1.
pub fn cosine(x: &Vector, y: &Vector) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    let (nx, ny) = (x.norm(), y.norm());
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroNorm);
    }
    if x.0 == y.0 {
        return Ok(1.0);
    }
    let dot: f64 = x.0.iter().zip(&y.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ny)).clamp(-1.0, 1.0))
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// splitmix64 finalizer, decorrelates bucket and sign bits.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// L2-normalized signed hash of character 3-grams. Bucket 0 is used as the
/// fallback one-hot for inputs with no grams (or whose grams cancel out).
pub fn builtin_encode(text: &str, dim: usize) -> Vector {
    assert!(dim >= MIN_BUILTIN_DIM, "builtin encoder needs dim >= {MIN_BUILTIN_DIM}");
    let mut v = vec![0.0f64; dim];
    let chars: Vec<char> = text.chars().collect();
    let mut add = |gram: &[char]| {
        let s: String = gram.iter().collect();
        let h = mix(fnv1a(s.as_bytes()));
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    };
    if chars.len() >= 3 {
        chars.windows(3).for_each(&mut add);
    } else if !chars.is_empty() {
        add(&chars);
    }
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|c| *c /= norm);
    }
    Vector(v)
}

/// Turns strings into vectors. Implementations must be deterministic within a
/// run and safe to call from several threads (a serial implementation can
/// simply lock internally).
pub trait EncoderPort: Send + Sync {
    /// Identity recorded in reports, since scores are encoder-relative.
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn encode_batch(&self, texts: &[String]) -> Result<Vec<Vector>>;
}

#[derive(Debug, Clone)]
pub struct BuiltinEncoder {
    dim: usize,
}

impl BuiltinEncoder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < MIN_BUILTIN_DIM {
            return Err(Error::Config(format!(
                "builtin encoder dim must be >= {MIN_BUILTIN_DIM}, got {dim}"
            )));
        }
        Ok(Self { dim })
    }
}

impl Default for BuiltinEncoder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_BUILTIN_DIM,
        }
    }
}

impl EncoderPort for BuiltinEncoder {
    fn id(&self) -> String {
        format!("builtin-char3-hash/{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_batch(&self, texts: &[String]) -> Result<Vec<Vector>> {
        Ok(texts.iter().map(|t| builtin_encode(t, self.dim)).collect())
    }
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EncodeResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

fn decode_response(resp: EncodeResponse, expected: usize, n_texts: usize, context: &str) -> Result<Vec<Vector>> {
    let fail = |message: String| Error::Encoder {
        context: context.to_string(),
        message,
    };
    if resp.dim != expected {
        return Err(fail(format!(
            "encoder reported dim {} but {expected} was configured",
            resp.dim
        )));
    }
    if resp.vectors.len() != n_texts {
        return Err(fail(format!(
            "requested {n_texts} vectors, received {}",
            resp.vectors.len()
        )));
    }
    resp.vectors
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            if v.len() != expected {
                return Err(fail(format!(
                    "vector {i} has {} components, expected {expected}",
                    v.len()
                )));
            }
            Vector::new(v).map_err(|e| fail(format!("vector {i}: {e}")))
        })
        .collect()
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Long-lived child process speaking line-delimited JSON on stdin/stdout.
/// Requests are serialized through a mutex.
pub struct ExecEncoder {
    command: String,
    dim: usize,
    io: Mutex<Option<ChildIo>>,
}

impl ExecEncoder {
    pub fn new(command: impl Into<String>, dim: usize) -> Self {
        Self {
            command: command.into(),
            dim,
            io: Mutex::new(None),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Encoder {
            context: format!("exec:{}", self.command),
            message: message.into(),
        }
    }

    fn spawn(&self) -> Result<ChildIo> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| self.err(format!("failed to spawn: {e}")))?;
        let stdin = child.stdin.take().ok_or_else(|| self.err("no stdin"))?;
        let stdout = BufReader::new(child.stdout.take().ok_or_else(|| self.err("no stdout"))?);
        Ok(ChildIo { child, stdin, stdout })
    }
}

impl Drop for ExecEncoder {
    fn drop(&mut self) {
        if let Ok(mut guard) = self.io.lock() {
            if let Some(mut io) = guard.take() {
                drop(io.stdin);
                let _ = io.child.wait();
            }
        }
    }
}

impl EncoderPort for ExecEncoder {
    fn id(&self) -> String {
        format!("exec:{}/{}", self.command, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_batch(&self, texts: &[String]) -> Result<Vec<Vector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut guard = self.io.lock().map_err(|_| self.err("encoder mutex poisoned"))?;
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let io = guard.as_mut().expect("spawned above");

        let mut line = serde_json::to_string(&EncodeRequest { texts }).map_err(|e| self.err(e.to_string()))?;
        line.push('\n');
        let exchange = io
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| io.stdin.flush())
            .and_then(|_| {
                let mut reply = String::new();
                io.stdout.read_line(&mut reply).map(|_| reply)
            });
        let reply = match exchange {
            Ok(reply) if !reply.trim().is_empty() => reply,
            Ok(_) => {
                *guard = None;
                return Err(self.err("encoder process closed its output"));
            }
            Err(e) => {
                *guard = None;
                return Err(self.err(format!("i/o failure: {e}")));
            }
        };
        let resp: EncodeResponse =
            serde_json::from_str(&reply).map_err(|e| self.err(format!("malformed response: {e}")))?;
        decode_response(resp, self.dim, texts.len(), &format!("exec:{}", self.command))
    }
}

/// HTTP encoder: `POST <base>/encode`.
pub struct HttpEncoder {
    url: String,
    dim: usize,
    agent: ureq::Agent,
}

impl HttpEncoder {
    pub fn new(base_url: &str, dim: usize, timeout: Duration) -> Self {
        let trimmed = base_url.trim_end_matches('/');
        let url = if trimmed.ends_with("/encode") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/encode")
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { url, dim, agent }
    }
}

impl EncoderPort for HttpEncoder {
    fn id(&self) -> String {
        format!("http:{}/{}", self.url, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_batch(&self, texts: &[String]) -> Result<Vec<Vector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let context = format!("http:{}", self.url);
        let fail = |message: String| Error::Encoder {
            context: context.clone(),
            message,
        };
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(EncodeRequest { texts })
            .map_err(|e| fail(e.to_string()))?;
        let body: EncodeResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| fail(format!("malformed response: {e}")))?;
        decode_response(body, self.dim, texts.len(), &context)
    }
}

/// Memoizes vectors per unique input string for the lifetime of the wrapper.
pub struct CachedEncoder {
    inner: Box<dyn EncoderPort>,
    cache: Mutex<HashMap<String, Vector>>,
}

impl CachedEncoder {
    pub fn new(inner: Box<dyn EncoderPort>) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }
}

impl EncoderPort for CachedEncoder {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn encode_batch(&self, texts: &[String]) -> Result<Vec<Vector>> {
        let missing: Vec<String> = {
            let cache = self.cache.lock().expect("cache mutex poisoned");
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .filter(|t| !cache.contains_key(*t) && seen.insert(t.as_str()))
                .cloned()
                .collect()
        };
        if !missing.is_empty() {
            let fresh = self.inner.encode_batch(&missing)?;
            let mut cache = self.cache.lock().expect("cache mutex poisoned");
            for (text, v) in missing.into_iter().zip(fresh) {
                cache.insert(text, v);
            }
        }
        let cache = self.cache.lock().expect("cache mutex poisoned");
        Ok(texts.iter().map(|t| cache[t].clone()).collect())
    }
}

/// Which encoder to use, as given on the command line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EncoderSpec {
    Builtin { dim: usize },
    Exec { command: String },
    Http { url: String },
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::Builtin {
            dim: DEFAULT_BUILTIN_DIM,
        }
    }
}

impl FromStr for EncoderSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "builtin" {
            return Ok(EncoderSpec::default());
        }
        if let Some(dim) = s.strip_prefix("builtin:") {
            let dim = dim.parse().map_err(|_| format!("invalid builtin dimension in {s:?}"))?;
            return Ok(EncoderSpec::Builtin { dim });
        }
        if let Some(cmd) = s.strip_prefix("exec:") {
            if cmd.trim().is_empty() {
                return Err("exec encoder needs a command".into());
            }
            return Ok(EncoderSpec::Exec {
                command: cmd.to_string(),
            });
        }
        if let Some(rest) = s.strip_prefix("http:") {
            let url = if rest.starts_with("//") {
                format!("http:{rest}")
            } else {
                rest.to_string()
            };
            return Ok(EncoderSpec::Http { url });
        }
        if s.starts_with("https://") {
            return Ok(EncoderSpec::Http { url: s.to_string() });
        }
        Err(format!(
            "unknown encoder {s:?}; expected builtin | exec:<cmd> | http:<url>"
        ))
    }
}

impl TryFrom<String> for EncoderSpec {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EncoderSpec> for String {
    fn from(e: EncoderSpec) -> String {
        e.to_string()
    }
}

impl fmt::Display for EncoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderSpec::Builtin { dim } if *dim == DEFAULT_BUILTIN_DIM => f.write_str("builtin"),
            EncoderSpec::Builtin { dim } => write!(f, "builtin:{dim}"),
            EncoderSpec::Exec { command } => write!(f, "exec:{command}"),
            EncoderSpec::Http { url } => write!(f, "http:{url}"),
        }
    }
}

impl EncoderSpec {
    /// Instantiates the encoder behind a per-string cache. `external_dim` applies
    /// to exec and http encoders.
    pub fn build(&self, external_dim: usize, timeout: Duration) -> Result<CachedEncoder> {
        let inner: Box<dyn EncoderPort> = match self {
            EncoderSpec::Builtin { dim } => Box::new(BuiltinEncoder::new(*dim)?),
            EncoderSpec::Exec { command } => Box::new(ExecEncoder::new(command.clone(), external_dim)),
            EncoderSpec::Http { url } => Box::new(HttpEncoder::new(url, external_dim, timeout)),
        };
        Ok(CachedEncoder::new(inner))
    }
}

/// Row-major `rows × cols` cosine similarities; rows index ground truth,
/// columns index prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    zero_norm_pairs: usize,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("similarity rows have unequal lengths".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(pos) = data.iter().position(|s| !(-1.0 - 1e-9..=1.0 + 1e-9).contains(s)) {
            return Err(Error::Shape(format!("similarity entry {pos} outside [-1, 1]")));
        }
        Ok(Self {
            rows: n,
            cols: m,
            data,
            zero_norm_pairs: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.rows && j < self.cols, "similarity index out of range");
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Number of entries forced to 0 because an embedding had zero norm.
    pub fn zero_norm_pairs(&self) -> usize {
        self.zero_norm_pairs
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
            zero_norm_pairs: self.zero_norm_pairs,
        }
    }
}

/// Serializes both call lists, embeds every distinct signature once, and
/// fills the cosine matrix. Zero-norm embeddings yield similarity 0.
pub fn similarity_matrix(
    gt_calls: &[&ToolCall],
    pred_calls: &[&ToolCall],
    encoder: &dyn EncoderPort,
    policy: &SerializationPolicy,
) -> Result<SimilarityMatrix> {
    let gt: Vec<String> = gt_calls
        .iter()
        .map(|c| serialize_call(c, policy))
        .collect::<Result<_>>()?;
    let pred: Vec<String> = pred_calls
        .iter()
        .map(|c| serialize_call(c, policy))
        .collect::<Result<_>>()?;
    similarity_from_signatures(&gt, &pred, encoder)
}

pub fn similarity_from_signatures(
    gt: &[String],
    pred: &[String],
    encoder: &dyn EncoderPort,
) -> Result<SimilarityMatrix> {
    let encode_side = |side: &str, texts: &[String]| -> Result<Vec<Vector>> {
        let vectors = encoder.encode_batch(texts).map_err(|e| Error::Encoder {
            context: format!("{side} calls"),
            message: e.to_string(),
        })?;
        if vectors.len() != texts.len() {
            return Err(Error::Encoder {
                context: format!("{side} calls"),
                message: format!("expected {} vectors, got {}", texts.len(), vectors.len()),
            });
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.dim() != encoder.dim() {
                return Err(Error::Encoder {
                    context: format!("{side} call {i}"),
                    message: format!("vector has dim {}, encoder declares {}", v.dim(), encoder.dim()),
                });
            }
        }
        Ok(vectors)
    };
    let xg = encode_side("ground-truth", gt)?;
    let xp = encode_side("predicted", pred)?;

    let rows: Vec<(Vec<f64>, usize)> = (0..gt.len())
        .into_par_iter()
        .map(|i| {
            let mut zero = 0;
            let row = (0..pred.len())
                .map(|j| {
                    if gt[i] == pred[j] && xg[i].norm() > 0.0 {
                        return Ok(1.0);
                    }
                    match cosine(&xg[i], &xp[j]) {
                        Ok(s) => Ok(s),
                        Err(Error::ZeroNorm) => {
                            zero += 1;
                            Ok(0.0)
                        }
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((row, zero))
        })
        .collect::<Result<_>>()?;

    let zero_norm_pairs = rows.iter().map(|(_, z)| z).sum();
    if zero_norm_pairs > 0 {
        log::warn!("{zero_norm_pairs} similarity entries involved zero-norm embeddings and were set to 0");
    }
    Ok(SimilarityMatrix {
        rows: gt.len(),
        cols: pred.len(),
        data: rows.into_iter().flat_map(|(r, _)| r).collect(),
        zero_norm_pairs,
    })
}
