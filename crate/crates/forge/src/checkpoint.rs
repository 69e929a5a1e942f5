//! Bit-exact checkpoint files.
//!
//! A header of `key=value` lines, one blank line, then one record per stored
//! tensor in ascending name order: the name, the space-separated dims, the
//! little-endian f32 payload and a newline.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use forge_core::model::{ModelConfig, ParamTree};
use forge_core::surgery::{Checkpoint, FORMAT_VERSION};
use forge_core::Tensor;

use crate::error::{ForgeError, Result};

fn header(ck: &Checkpoint) -> String {
    let c = ck.params.config();
    let frozen: Vec<String> = ck.params.frozen_names().into_iter().collect();
    let mut h = String::new();
    let mut kv = |k: &str, v: String| {
        h.push_str(k);
        h.push('=');
        h.push_str(&v);
        h.push('\n');
    };
    kv("format_version", FORMAT_VERSION.to_string());
    kv("enc_layers", c.enc_layers.to_string());
    kv("dec_layers", c.dec_layers.to_string());
    kv("d_model", c.d_model.to_string());
    kv("d_ffn", c.d_ffn.to_string());
    kv("heads", c.heads.to_string());
    kv("src_vocab", c.src_vocab.to_string());
    kv("tgt_vocab", c.tgt_vocab.to_string());
    kv("max_positions", c.max_positions.to_string());
    kv("dropout", c.dropout.to_string());
    kv("tie_decoder_embeddings", c.tie_decoder_embeddings.to_string());
    kv("src_lang", ck.src_lang.clone());
    kv("tgt_lang", ck.tgt_lang.clone());
    kv("src_vocab_fingerprint", format!("{:016x}", ck.src_fingerprint));
    kv("tgt_vocab_fingerprint", format!("{:016x}", ck.tgt_fingerprint));
    kv("frozen", frozen.join(","));
    kv("tensors", ck.params.iter().count().to_string());
    h
}

/// Serializes a checkpoint to bytes.
pub fn to_bytes(ck: &Checkpoint) -> Vec<u8> {
    let mut out = header(ck).into_bytes();
    out.push(b'\n');
    for (name, t) in ck.params.iter() {
        out.extend_from_slice(name.as_bytes());
        out.push(b'\n');
        let dims: Vec<String> = t.dims().iter().map(usize::to_string).collect();
        out.extend_from_slice(dims.join(" ").as_bytes());
        out.push(b'\n');
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(b'\n');
    }
    out
}

/// Writes through a temporary file so a crash never leaves a partial checkpoint.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(ForgeError::io(dir))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(ForgeError::io(&tmp))?;
    f.write_all(&to_bytes(ck)).map_err(ForgeError::io(&tmp))?;
    f.sync_all().map_err(ForgeError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(ForgeError::io(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(ForgeError::io(path))?;
    from_bytes(&bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn line(&mut self, what: &str) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| ForgeError::Truncated(what.into()))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| ForgeError::Malformed(format!("non-UTF-8 text in {what}")))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(ForgeError::Truncated(what.into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

fn parse<T: std::str::FromStr>(fields: &BTreeMap<&str, &str>, key: &str) -> Result<T> {
    let v = fields
        .get(key)
        .ok_or_else(|| ForgeError::Malformed(format!("missing header key `{key}`")))?;
    v.parse()
        .map_err(|_| ForgeError::Malformed(format!("bad value `{v}` for header key `{key}`")))
}

fn parse_hex(fields: &BTreeMap<&str, &str>, key: &str) -> Result<u64> {
    let v: String = parse(fields, key)?;
    if v.len() != 16 {
        return Err(ForgeError::Malformed(format!("`{key}` must be 16 hex digits")));
    }
    u64::from_str_radix(&v, 16).map_err(|_| ForgeError::Malformed(format!("bad hex `{v}` for `{key}`")))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    let mut fields = BTreeMap::new();
    loop {
        let line = r.line("header")?;
        if line.is_empty() {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ForgeError::Malformed(format!("header line `{line}`")))?;
        if fields.insert(k, v).is_some() {
            return Err(ForgeError::Malformed(format!("duplicate header key `{k}`")));
        }
    }
    match fields.get("format_version") {
        Some(v) if *v == FORMAT_VERSION.to_string() => {}
        Some(v) => return Err(ForgeError::Version((*v).into())),
        None => return Err(ForgeError::Version(String::new())),
    }
    let config = ModelConfig {
        enc_layers: parse(&fields, "enc_layers")?,
        dec_layers: parse(&fields, "dec_layers")?,
        d_model: parse(&fields, "d_model")?,
        d_ffn: parse(&fields, "d_ffn")?,
        heads: parse(&fields, "heads")?,
        src_vocab: parse(&fields, "src_vocab")?,
        tgt_vocab: parse(&fields, "tgt_vocab")?,
        max_positions: parse(&fields, "max_positions")?,
        dropout: parse(&fields, "dropout")?,
        tie_decoder_embeddings: parse(&fields, "tie_decoder_embeddings")?,
    };
    config.validate()?;
    let expected: BTreeMap<String, Vec<usize>> = config.canonical_names().into_iter().collect();
    let count: usize = parse(&fields, "tensors")?;
    if count != expected.len() {
        return Err(ForgeError::Malformed(format!(
            "header lists {count} tensors, config implies {}",
            expected.len()
        )));
    }
    let mut params = BTreeMap::new();
    for _ in 0..count {
        let name = r.line("tensor name")?.to_string();
        let want = expected
            .get(&name)
            .ok_or_else(|| ForgeError::Malformed(format!("unexpected tensor `{name}`")))?;
        let dims_line = r.line(&format!("dims of `{name}`"))?;
        let dims: Vec<usize> = dims_line
            .split(' ')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| ForgeError::Malformed(format!("dims `{dims_line}` of `{name}`")))?;
        if &dims != want {
            return Err(ForgeError::Dims {
                name,
                found: dims,
                expected: want.clone(),
            });
        }
        let n: usize = dims.iter().product();
        let payload = r.take(4 * n, &format!("payload of `{name}`"))?;
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        match r.take(1, &format!("payload of `{name}`"))? {
            b"\n" => {}
            _ => return Err(ForgeError::Malformed(format!("missing record terminator after `{name}`"))),
        }
        if params.insert(name.clone(), Tensor::new(dims, values)?).is_some() {
            return Err(ForgeError::Malformed(format!("duplicate tensor `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(ForgeError::Malformed("trailing bytes after the last tensor".into()));
    }
    let mut tree = ParamTree::from_tensors(config, params)?;
    let frozen_field: String = parse(&fields, "frozen")?;
    let frozen: BTreeSet<String> = frozen_field.split(',').filter(|s| !s.is_empty()).map(String::from).collect();
    if let Some(bad) = frozen.iter().find(|n| !tree.contains(n)) {
        return Err(ForgeError::Malformed(format!("frozen list names unknown tensor `{bad}`")));
    }
    tree.set_frozen(&frozen)?;
    Ok(Checkpoint::new(
        tree,
        &parse::<String>(&fields, "src_lang")?,
        &parse::<String>(&fields, "tgt_lang")?,
        parse_hex(&fields, "src_vocab_fingerprint")?,
        parse_hex(&fields, "tgt_vocab_fingerprint")?,
    ))
}
