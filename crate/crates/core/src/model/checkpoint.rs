//! On-disk model format.
//!
//! ```text
//! BITNET01
//! format_version=1
//! variant=rgb
//! ...config fields...
//! payload_fnv64=<hex>
//! param=<name> <d0>x<d1>x... <byte offset> <byte length>
//! ...
//! <blank line>
//! <little-endian f32 payload, manifest order>
//! ```
//!
//! Offsets are relative to the first payload byte. Training checkpoints add
//! `train.*` and `adam.*` keys and `adam.m.<name>` / `adam.v.<name>` entries.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{BitNetConfig, BitNetModel};
use crate::error::{Error, Result};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::RngState;

pub const CHECKPOINT_MAGIC: &str = "BITNET01";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Optimizer and data-stream position needed to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Optimizer steps completed.
    pub step: u64,
    /// Epochs completed.
    pub epoch: u64,
    pub rng_state: RngState,
    /// Moments are aligned with [`BitNetModel::params_mut`].
    pub adam: AdamState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: BitNetModel,
    pub train: Option<TrainState>,
}

struct Entry {
    name: String,
    dims: Vec<usize>,
    data: Vec<f32>,
}

fn fnv64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn param_names(model: &BitNetModel) -> Vec<String> {
    model
        .layers()
        .iter()
        .flat_map(|l| [format!("{}.weight", l.name), format!("{}.bias", l.name)])
        .collect()
}

fn param_entries(model: &BitNetModel) -> Vec<Entry> {
    let mut out = Vec::new();
    for l in model.layers() {
        out.push(Entry {
            name: format!("{}.weight", l.name),
            dims: l.params.weight.shape().dims().to_vec(),
            data: l.params.weight.data().to_vec(),
        });
        out.push(Entry {
            name: format!("{}.bias", l.name),
            dims: vec![l.params.bias.len()],
            data: l.params.bias.clone(),
        });
    }
    out
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let model = &self.model;
        let c = model.config();
        let widths: Vec<String> = c.widths.iter().map(|w| w.to_string()).collect();
        let mut header = vec![
            format!("format_version={CHECKPOINT_VERSION}"),
            format!("variant={}", c.variant),
            format!("num_stages={}", c.num_stages),
            format!("widths={}", widths.join(",")),
            format!("r_d={}", c.r_d),
            format!("r_u={}", c.r_u),
            format!("head_width={}", c.head_width),
            format!("use_bit_info={}", c.use_bit_info as u8),
            format!("use_msfi={}", c.use_msfi as u8),
            format!(
                "msfi_disconnect_from_smallest={}",
                c.msfi_disconnect_from_smallest
            ),
        ];

        let mut entries = param_entries(model);
        if let Some(t) = &self.train {
            let names = param_names(model);
            if t.adam.m.len() != names.len() || t.adam.v.len() != names.len() {
                return Err(Error::Checkpoint {
                    path: path.into(),
                    msg: format!(
                        "optimizer state has {} slices, model has {}",
                        t.adam.m.len(),
                        names.len()
                    ),
                });
            }
            header.push(format!("train.step={}", t.step));
            header.push(format!("train.epoch={}", t.epoch));
            header.push(format!("train.rng_state={}", t.rng_state));
            header.push(format!("adam.t={}", t.adam.t));
            header.push(format!("adam.beta1={:?}", t.adam.config.beta1));
            header.push(format!("adam.beta2={:?}", t.adam.config.beta2));
            header.push(format!("adam.eps={:?}", t.adam.config.eps));
            for (prefix, moments) in [("adam.m", &t.adam.m), ("adam.v", &t.adam.v)] {
                for (name, data) in names.iter().zip(moments) {
                    entries.push(Entry {
                        name: format!("{prefix}.{name}"),
                        dims: vec![data.len()],
                        data: data.clone(),
                    });
                }
            }
        }

        let mut payload = Vec::with_capacity(entries.iter().map(|e| e.data.len() * 4).sum());
        let mut manifest = Vec::with_capacity(entries.len());
        for e in &entries {
            let dims: Vec<String> = e.dims.iter().map(|d| d.to_string()).collect();
            manifest.push(format!(
                "param={} {} {} {}",
                e.name,
                dims.join("x"),
                payload.len(),
                e.data.len() * 4
            ));
            for v in &e.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        header.push(format!("payload_fnv64={:016x}", fnv64(&payload)));
        header.extend(manifest);

        let mut bytes = format!("{CHECKPOINT_MAGIC}\n{}\n\n", header.join("\n")).into_bytes();
        bytes.extend_from_slice(&payload);
        // Write then rename so a crash never leaves a half-written checkpoint.
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        parse(&bytes).map_err(|msg| Error::Checkpoint {
            path: path.into(),
            msg,
        })
    }
}

fn parse(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    let magic = format!("{CHECKPOINT_MAGIC}\n");
    if !bytes.starts_with(magic.as_bytes()) {
        return Err("not a checkpoint (bad magic)".into());
    }
    let rest = &bytes[magic.len()..];
    let split = rest
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or("header is not terminated by a blank line")?;
    let header = std::str::from_utf8(&rest[..split]).map_err(|_| "header is not UTF-8")?;
    let payload = &rest[split + 2..];

    let mut keys = BTreeMap::new();
    let mut manifest = Vec::new();
    for (i, line) in header.lines().enumerate() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("header line {} has no '=': {line:?}", i + 2))?;
        if k == "param" {
            manifest.push(parse_manifest_line(v)?);
        } else if keys.insert(k.to_string(), v.to_string()).is_some() {
            return Err(format!("duplicate header key {k}"));
        }
    }

    let get = |k: &str| {
        keys.get(k)
            .map(String::as_str)
            .ok_or_else(|| format!("missing header key {k}"))
    };
    let num = |k: &str| -> std::result::Result<u64, String> {
        get(k)?
            .parse()
            .map_err(|_| format!("header key {k} is not an integer"))
    };
    let flag = |k: &str| -> std::result::Result<bool, String> {
        match get(k)? {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(format!("header key {k} must be 0 or 1, got {other:?}")),
        }
    };

    let version = num("format_version")?;
    if version != CHECKPOINT_VERSION as u64 {
        return Err(format!(
            "unsupported format_version {version}, expected {CHECKPOINT_VERSION}"
        ));
    }
    let widths = get("widths")?
        .split(',')
        .map(|w| w.parse::<usize>().map_err(|_| format!("bad width {w:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let config = BitNetConfig {
        variant: get("variant")?.parse().map_err(|e: Error| e.to_string())?,
        num_stages: num("num_stages")? as usize,
        widths,
        r_d: num("r_d")? as usize,
        r_u: num("r_u")? as usize,
        head_width: num("head_width")? as usize,
        use_bit_info: flag("use_bit_info")?,
        use_msfi: flag("use_msfi")?,
        msfi_disconnect_from_smallest: num("msfi_disconnect_from_smallest")? as usize,
    };
    let expected_sum =
        u64::from_str_radix(get("payload_fnv64")?, 16).map_err(|_| "bad payload_fnv64")?;

    let total: usize = manifest.iter().map(|m| m.len).sum();
    if payload.len() < total {
        return Err(format!(
            "payload truncated: {} bytes, manifest needs {total}",
            payload.len()
        ));
    }
    if payload.len() > total {
        return Err(format!(
            "{} trailing bytes after payload",
            payload.len() - total
        ));
    }
    if fnv64(payload) != expected_sum {
        return Err("payload checksum mismatch".into());
    }

    let mut model = BitNetModel::build(config, 0).map_err(|e| e.to_string())?;
    let mut tensors = BTreeMap::new();
    let mut expected_offset = 0;
    for m in &manifest {
        if m.offset != expected_offset {
            return Err(format!(
                "parameter {}: offset {} but expected {expected_offset}",
                m.name, m.offset
            ));
        }
        let count: usize = m.dims.iter().product();
        if m.len != count * 4 {
            return Err(format!(
                "parameter {}: {} bytes do not hold shape {:?}",
                m.name, m.len, m.dims
            ));
        }
        let data: Vec<f32> = payload[m.offset..m.offset + m.len]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if tensors
            .insert(m.name.clone(), (m.dims.clone(), data))
            .is_some()
        {
            return Err(format!("parameter {} listed twice", m.name));
        }
        expected_offset += m.len;
    }

    for layer in model.layers_mut() {
        for (suffix, dims) in [
            ("weight", layer.params.weight.shape().dims().to_vec()),
            ("bias", vec![layer.params.bias.len()]),
        ] {
            let name = format!("{}.{suffix}", layer.name);
            let (got, data) = tensors
                .remove(&name)
                .ok_or_else(|| format!("parameter {name} missing"))?;
            if got != dims {
                return Err(format!(
                    "parameter {name}: shape {got:?} does not match {dims:?}"
                ));
            }
            let dst = if suffix == "weight" {
                layer.params.weight.data_mut()
            } else {
                layer.params.bias.as_mut_slice()
            };
            if data.iter().any(|v| !v.is_finite()) {
                return Err(format!("parameter {name} holds non-finite values"));
            }
            dst.copy_from_slice(&data);
        }
    }

    let train = if keys.contains_key("train.step") {
        let names = param_names(&model);
        let lens = model.param_lens();
        let mut take = |prefix: &str| -> std::result::Result<Vec<Vec<f32>>, String> {
            names
                .iter()
                .zip(&lens)
                .map(|(n, &len)| {
                    let key = format!("{prefix}.{n}");
                    let (_, data) = tensors
                        .remove(&key)
                        .ok_or_else(|| format!("parameter {key} missing"))?;
                    if data.len() != len {
                        return Err(format!(
                            "parameter {key}: {} values, expected {len}",
                            data.len()
                        ));
                    }
                    Ok(data)
                })
                .collect()
        };
        let m = take("adam.m")?;
        let v = take("adam.v")?;
        let float = |k: &str| -> std::result::Result<f64, String> {
            get(k)?
                .parse()
                .map_err(|_| format!("header key {k} is not a number"))
        };
        Some(TrainState {
            step: num("train.step")?,
            epoch: num("train.epoch")?,
            rng_state: get("train.rng_state")?.parse()?,
            adam: AdamState {
                config: AdamConfig {
                    beta1: float("adam.beta1")?,
                    beta2: float("adam.beta2")?,
                    eps: float("adam.eps")?,
                },
                m,
                v,
                t: num("adam.t")?,
            },
        })
    } else {
        None
    };

    if let Some(name) = tensors.keys().next() {
        return Err(format!("unexpected parameter {name}"));
    }
    Ok(Checkpoint { model, train })
}

struct ManifestLine {
    name: String,
    dims: Vec<usize>,
    offset: usize,
    len: usize,
}

fn parse_manifest_line(v: &str) -> std::result::Result<ManifestLine, String> {
    let parts: Vec<&str> = v.split(' ').collect();
    let [name, dims, offset, len] = parts[..] else {
        return Err(format!("malformed manifest line {v:?}"));
    };
    let bad = |what: &str| format!("parameter {name}: bad {what}");
    Ok(ManifestLine {
        name: name.to_string(),
        dims: dims
            .split('x')
            .map(|d| d.parse().map_err(|_| bad("shape")))
            .collect::<std::result::Result<_, _>>()?,
        offset: offset.parse().map_err(|_| bad("offset"))?,
        len: len.parse().map_err(|_| bad("length"))?,
    })
}

/// Writes model parameters only.
pub fn save_checkpoint(model: &BitNetModel, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint {
        model: model.clone(),
        train: None,
    }
    .save(path)
}

/// Reads a model, ignoring any training state in the file.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<BitNetModel> {
    Ok(Checkpoint::load(path)?.model)
}
