//! Plain-text checkpoint format.
//!
//! ```text
//! simrel-mlp 1
//! role = V
//! head = sigmoid
//! layer_dims = 4 20 20 1
//! seed = 7
//! config_hash = 3f2a...
//! payload_bytes = 12345
//! ---
//! <layer 0: one line per weight row, then one line of biases>
//! <layer 1: ...>
//! ```
//!
//! A `clamp` head adds `clamp_lo = ...` and `clamp_hi = ...` header lines.
//! Numbers are shortest round-trip decimal, so loading is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{Head, Layer, Mlp, Role};
use crate::error::{Error, Result};
use crate::geometry::BoxSet;
use crate::scalar::Scalar;

const MAGIC: &str = "simrel-mlp 1";

/// Header fields that are not part of the network itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub config_hash: String,
}

fn join<T: Scalar>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn to_text<T: Scalar>(net: &Mlp<T>, meta: &CheckpointMeta) -> String {
    let mut payload = String::new();
    for l in &net.layers {
        for r in 0..l.rows {
            payload.push_str(&join(&l.w[r * l.cols..(r + 1) * l.cols]));
            payload.push('\n');
        }
        payload.push_str(&join(&l.b));
        payload.push('\n');
    }
    let mut h = String::new();
    writeln!(h, "{MAGIC}").unwrap();
    writeln!(h, "role = {}", net.role.as_str()).unwrap();
    writeln!(h, "head = {}", net.head.name()).unwrap();
    if let Head::BoxClamp(b) = &net.head {
        writeln!(h, "clamp_lo = {}", join(&b.lo)).unwrap();
        writeln!(h, "clamp_hi = {}", join(&b.hi)).unwrap();
    }
    let dims: Vec<String> = net.layer_dims().iter().map(|d| d.to_string()).collect();
    writeln!(h, "layer_dims = {}", dims.join(" ")).unwrap();
    writeln!(h, "seed = {}", net.seed).unwrap();
    writeln!(h, "config_hash = {}", meta.config_hash).unwrap();
    writeln!(h, "payload_bytes = {}", payload.len()).unwrap();
    writeln!(h, "---").unwrap();
    h + &payload
}

pub fn save<T: Scalar>(net: &Mlp<T>, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(net, meta))?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<(Mlp<T>, CheckpointMeta)> {
    let text = std::fs::read_to_string(path)?;
    from_text(&text, &path.display().to_string())
}

/// Loads and checks that the checkpoint holds a network of the given role.
pub fn load_role<T: Scalar>(path: &Path, role: Role) -> Result<(Mlp<T>, CheckpointMeta)> {
    let (net, meta) = load::<T>(path)?;
    if net.role != role {
        return Err(Error::RoleMismatch {
            expected: role.as_str().into(),
            found: net.role.as_str().into(),
        });
    }
    Ok((net, meta))
}

fn parse_list<T: Scalar>(s: &str, path: &str, at: &str) -> Result<Vec<T>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<T>().map_err(|_| Error::Checkpoint {
                path: path.into(),
                reason: format!("{at}: cannot parse number `{t}`"),
            })
        })
        .collect()
}

/// Parses checkpoint text; `path` only labels error messages.
pub fn from_text<T: Scalar>(text: &str, path: &str) -> Result<(Mlp<T>, CheckpointMeta)> {
    let bad = |reason: String| Error::Checkpoint {
        path: path.into(),
        reason,
    };
    let sep = text.find("\n---\n").ok_or_else(|| bad("missing `---` header terminator".into()))?;
    let (header, payload) = (&text[..sep], &text[sep + 5..]);
    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad(format!("line 1: expected `{MAGIC}`")));
    }
    let mut fields = std::collections::BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected `key = value`", i + 2)))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| bad(format!("header: missing `{k}`")));
    let role = match get("role")?.as_str() {
        "V" => Role::V,
        "K" => Role::K,
        other => return Err(bad(format!("header: unknown role `{other}`"))),
    };
    let head = match get("head")?.as_str() {
        "relu" => Head::Relu,
        "sigmoid" => Head::Sigmoid,
        "clamp" => {
            let lo = parse_list::<T>(get("clamp_lo")?, path, "clamp_lo")?;
            let hi = parse_list::<T>(get("clamp_hi")?, path, "clamp_hi")?;
            Head::BoxClamp(BoxSet::new(lo, hi).map_err(|e| bad(format!("clamp box: {e}")))?)
        }
        other => return Err(bad(format!("header: unknown head `{other}`"))),
    };
    let dims: Vec<usize> = get("layer_dims")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("layer_dims: bad entry `{t}`"))))
        .collect::<Result<_>>()?;
    let seed: u64 = get("seed")?.parse().map_err(|_| bad("seed: not an integer".into()))?;
    let expected: usize = get("payload_bytes")?
        .parse()
        .map_err(|_| bad("payload_bytes: not an integer".into()))?;
    if payload.len() != expected {
        return Err(Error::TruncatedCheckpoint {
            path: path.into(),
            expected,
            found: payload.len(),
        });
    }
    if dims.len() < 2 {
        return Err(bad("layer_dims: need at least input and output".into()));
    }
    let mut rows = payload.lines().enumerate();
    let mut layers = Vec::new();
    for (j, d) in dims.windows(2).enumerate() {
        let mut l = Layer::<T>::zeros(d[1], d[0]);
        for r in 0..=l.rows {
            let (ln, line) = rows
                .next()
                .ok_or_else(|| bad(format!("layer {j}: payload ends early")))?;
            let at = format!("payload line {}", ln + 1);
            let vals = parse_list::<T>(line, path, &at)?;
            let want = if r < l.rows { l.cols } else { l.rows };
            if vals.len() != want {
                return Err(Error::Dimension {
                    context: format!("checkpoint {path}, {at} (layer {j})"),
                    expected: want,
                    found: vals.len(),
                });
            }
            if r < l.rows {
                l.w[r * l.cols..(r + 1) * l.cols].copy_from_slice(&vals);
            } else {
                l.b = vals;
            }
        }
        layers.push(l);
    }
    if rows.next().is_some() {
        return Err(bad("payload has trailing lines beyond layer_dims".into()));
    }
    let mut net = Mlp::from_layers(role, head, layers)?;
    net.seed = seed;
    Ok((
        net,
        CheckpointMeta {
            config_hash: fields.get("config_hash").cloned().unwrap_or_default(),
        },
    ))
}
