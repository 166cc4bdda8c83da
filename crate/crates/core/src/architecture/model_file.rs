//! Model container: a line-oriented text header followed by raw little-endian
//! `f64` parameter data in header order.
//!
//! ```text
//! SEIZURECAST-MODEL
//! version=1
//! input_channels=23
//! ...
//! tensor conv1.weight 16x1x1x20
//! ...
//! end
//! <binary payload>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Network, NetworkConfig, Parameter};
use crate::engine::tensor::format_shape;
use crate::engine::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &str = "SEIZURECAST-MODEL";
pub const VERSION: u32 = 1;
const END: &str = "end";

fn pairs(list: &[(usize, usize)]) -> String {
    list.iter()
        .map(|(a, b)| format!("{a}x{b}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn counts(list: &[usize]) -> String {
    list.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub(super) fn encode(net: &Network) -> Vec<u8> {
    let c = &net.config;
    let mut header = String::new();
    let _ = writeln!(header, "{MAGIC}");
    let _ = writeln!(header, "version={VERSION}");
    let _ = writeln!(header, "input_channels={}", c.input_channels);
    let _ = writeln!(header, "input_width={}", c.input_width);
    let _ = writeln!(header, "conv_kernels={}", pairs(&c.conv_kernels));
    let _ = writeln!(header, "pool_kernels={}", pairs(&c.pool_kernels));
    let _ = writeln!(header, "conv_out_channels={}", counts(&c.conv_out_channels));
    let _ = writeln!(header, "fc_sizes={}", counts(&c.fc_sizes));
    let _ = writeln!(header, "dropout_rate={:?}", c.dropout_rate);
    let _ = writeln!(header, "num_classes={}", c.num_classes);
    let _ = writeln!(header, "flatten_len={}", net.shapes.flatten_len());
    for p in &net.params {
        let _ = writeln!(header, "tensor {} {}", p.name, format_shape(p.value.shape()));
    }
    let _ = writeln!(header, "{END}");

    let mut bytes = header.into_bytes();
    bytes.reserve(net.parameter_count() * 8);
    for p in &net.params {
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

pub(super) fn save(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub(super) fn load(path: &Path) -> Result<Network> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

struct Header {
    fields: Vec<(String, String)>,
    tensors: Vec<(String, Vec<usize>)>,
}

impl Header {
    fn field(&self, key: &str, path: &Path) -> Result<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::format(path, format!("missing header field `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        let raw = self.field(key, path)?;
        raw.parse()
            .map_err(|_| Error::format(path, format!("bad value `{raw}` for `{key}`")))
    }

    fn list(&self, key: &str, path: &Path) -> Result<Vec<usize>> {
        let raw = self.field(key, path)?;
        raw.split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::format(path, format!("bad list `{raw}` for `{key}`")))
            })
            .collect()
    }

    fn pairs(&self, key: &str, path: &Path) -> Result<Vec<(usize, usize)>> {
        let raw = self.field(key, path)?;
        raw.split(',')
            .map(|s| parse_extent_pair(s).ok_or_else(|| Error::format(path, format!("bad kernel `{s}` in `{key}`"))))
            .collect()
    }
}

/// Parses `"HxW"`.
pub fn parse_extent_pair(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.trim().split_once('x')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<(Header, usize)> {
    let mut offset = 0;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(path, "header is not terminated by `end`"))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::format(path, "header is not valid UTF-8"))?;
        offset += nl + 1;
        if lines.is_empty() && line != MAGIC {
            return Err(Error::format(path, format!("bad magic: expected `{MAGIC}`")));
        }
        if line == END {
            break;
        }
        lines.push(line.to_owned());
    }
    let mut fields = Vec::new();
    let mut tensors = Vec::new();
    for line in &lines[1..] {
        if let Some(rest) = line.strip_prefix("tensor ") {
            let (name, shape) = rest
                .split_once(' ')
                .ok_or_else(|| Error::format(path, format!("bad tensor line `{line}`")))?;
            let shape = shape
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::format(path, format!("bad tensor shape `{shape}`")))?;
            tensors.push((name.to_owned(), shape));
        } else if let Some((k, v)) = line.split_once('=') {
            fields.push((k.to_owned(), v.to_owned()));
        } else {
            return Err(Error::format(path, format!("unrecognised header line `{line}`")));
        }
    }
    Ok((Header { fields, tensors }, offset))
}

pub(super) fn decode(bytes: &[u8], path: &Path) -> Result<Network> {
    let (header, offset) = parse_header(bytes, path)?;
    let version: u32 = header.parse("version", path)?;
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported model version {version}, expected {VERSION}"),
        ));
    }
    let config = NetworkConfig {
        input_channels: header.parse("input_channels", path)?,
        input_width: header.parse("input_width", path)?,
        conv_kernels: header.pairs("conv_kernels", path)?,
        pool_kernels: header.pairs("pool_kernels", path)?,
        conv_out_channels: header.list("conv_out_channels", path)?,
        fc_sizes: header.list("fc_sizes", path)?,
        dropout_rate: header.parse("dropout_rate", path)?,
        num_classes: header.parse("num_classes", path)?,
    };
    let table = config.shape_table()?;
    let recorded: usize = header.parse("flatten_len", path)?;
    if recorded != table.flatten_len() {
        return Err(Error::shape(
            "model shape table",
            format!("flatten length {} from config", table.flatten_len()),
            format!("{recorded} recorded in {}", path.display()),
        ));
    }
    let layout = config.parameter_layout()?;
    if layout != header.tensors {
        return Err(Error::shape(
            "model shape table",
            format!("{} tensors derived from config", layout.len()),
            format!("{} tensors listed, or names/shapes differ", header.tensors.len()),
        ));
    }
    let expected: usize = layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum::<usize>() * 8;
    let payload = &bytes[offset..];
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "parameter payload is {} bytes, expected {expected}",
                payload.len()
            ),
        ));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let params = layout
        .into_iter()
        .map(|(name, shape)| {
            let n = shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(n).collect();
            Ok(Parameter {
                name,
                value: Tensor::new(&shape, data)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Network::from_parameters(config, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Network::build(NetworkConfig::reduced(4, 500), &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let net = small_net(7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        net.save(&path).unwrap();
        let back = Network::load(&path).unwrap();
        assert_eq!(back, net);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let x = Tensor::new(&[4, 500], (0..2000).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            let a = net.predict(&x).unwrap();
            let b = back.predict(&x).unwrap();
            assert_eq!(a.data()[0].to_bits(), b.data()[0].to_bits());
            assert_eq!(a.data()[1].to_bits(), b.data()[1].to_bits());
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = encode(&small_net(1));
        bytes[0] = b'X';
        let err = decode(&bytes, Path::new("m.bin")).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut bytes = encode(&small_net(1));
        bytes.truncate(bytes.len() - 3);
        let err = decode(&bytes, Path::new("m.bin")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn version_mismatch_rejected() {
        let bytes = encode(&small_net(1));
        let text = String::from_utf8_lossy(&bytes).replacen("version=1", "version=9", 1);
        let err = decode(text.as_bytes(), Path::new("m.bin")).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn shape_table_mismatch_rejected() {
        let bytes = encode(&small_net(1));
        let header_end = bytes.windows(5).position(|w| w == b"\nend\n").unwrap() + 5;
        let header = String::from_utf8(bytes[..header_end].to_vec()).unwrap();
        let tampered = header.replacen("flatten_len=768", "flatten_len=769", 1);
        assert_ne!(tampered, header);
        let mut out = tampered.into_bytes();
        out.extend_from_slice(&bytes[header_end..]);
        assert!(matches!(decode(&out, Path::new("m.bin")), Err(Error::Shape { .. })));
    }

    #[test]
    fn loaded_model_rejects_other_input_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::build(NetworkConfig::standard(23, 5120), &mut rng).unwrap();
        let back = decode(&encode(&net), Path::new("m.bin")).unwrap();
        assert_eq!(back.shape_table().flatten_len(), 2560);
        let err = back.check_input(&[16, 8000]).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }
}
