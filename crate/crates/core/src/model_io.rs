//! Binary model files.
//!
//! Little-endian layout:
//!
//! ```text
//! "OSR1"  u32 version  u32 n_levels  u32 K  u32 patch_size  u32 hidden
//! u8 channel_mode (0 luma only, 1 per channel)  u8 round(100 * leaky_slope)
//! u64 seed
//! per channel, per band 0..=n_levels:
//!     K row-major d x d matrices (f64)
//!     W1 b1 W2 b2 W3 b3 (f64, weights row-major as outputs x inputs)
//! ```
//!
//! `K = 0` marks the regressor baseline, whose last layer maps back to `d`.

use std::path::Path;

use crate::blend::{BandMap, ChannelMode, PatchMap, RegressorMap, RetouchModel, WeightField};
use crate::error::{Error, Result};
use crate::mlp::{Head, Mlp};
use crate::pyramid::ScalePolicy;

pub const MAGIC: [u8; 4] = *b"OSR1";
pub const VERSION: u32 = 1;

fn slope_code(slope: f64) -> Result<u8> {
    let code = (slope * 100.0).round();
    if (0.0..=255.0).contains(&code) && (code / 100.0 - slope).abs() < 1e-12 {
        Ok(code as u8)
    } else {
        Err(Error::InvalidParameter(format!(
            "leaky slope {slope} is not a multiple of 0.01 in [0, 2.55]"
        )))
    }
}

pub fn encode_model(model: &RetouchModel) -> Result<Vec<u8>> {
    model.validate()?;
    if model.scale_policy != ScalePolicy::default() {
        return Err(Error::InvalidParameter(
            "only the default band scale policy can be stored".into(),
        ));
    }
    let first = model.first_map();
    let mut out = Vec::with_capacity(40 + 8 * model.param_count());
    out.extend_from_slice(&MAGIC);
    for v in [
        VERSION,
        model.n_levels as u32,
        first.k() as u32,
        model.patch_size as u32,
        first.hidden() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(match model.channel_mode {
        ChannelMode::LumaOnly => 0,
        ChannelMode::PerChannel => 1,
    });
    out.push(slope_code(first.leaky_slope())?);
    out.extend_from_slice(&model.seed.to_le_bytes());
    for map in model.maps.iter().flatten() {
        for seg in map.segments() {
            for v in seg {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn fill(&mut self, dst: &mut [f64]) -> Result<()> {
        let src = self.take(dst.len().checked_mul(8).ok_or(Error::Truncated)?)?;
        for (d, c) in dst.iter_mut().zip(src.chunks_exact(8)) {
            *d = f64::from_le_bytes(c.try_into().expect("8 bytes"));
            if !d.is_finite() {
                return Err(Error::Corrupt("non-finite parameter".into()));
            }
        }
        Ok(())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<RetouchModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4).map_err(|_| Error::Truncated)?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n_levels = r.u32()? as usize;
    let k = r.u32()? as usize;
    let patch_size = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let channel_mode = match r.u8()? {
        0 => ChannelMode::LumaOnly,
        1 => ChannelMode::PerChannel,
        m => return Err(Error::Corrupt(format!("unknown channel mode {m}"))),
    };
    let slope = r.u8()? as f64 / 100.0;
    let seed = r.u64()?;
    if patch_size == 0 || patch_size.is_multiple_of(2) || patch_size > 63 || hidden == 0 || n_levels > 30 {
        return Err(Error::Corrupt(format!(
            "implausible header: n_levels {n_levels}, patch size {patch_size}, hidden {hidden}"
        )));
    }
    let d = patch_size * patch_size;
    let per_map = if k == 0 {
        (d * hidden + hidden) + (hidden * hidden + hidden) + (hidden * d + d)
    } else {
        k * d * d + (d * hidden + hidden) + (hidden * hidden + hidden) + (hidden * k + k)
    };
    let n_maps = channel_mode.channels() * (n_levels + 1);
    let expected = per_map
        .checked_mul(n_maps)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Corrupt("parameter count overflows".into()))?;
    let remaining = bytes.len() - r.pos;
    if remaining < expected {
        return Err(Error::Truncated);
    }
    if remaining > expected {
        return Err(Error::Corrupt(format!("{} trailing bytes", remaining - expected)));
    }
    let mut maps = Vec::with_capacity(channel_mode.channels());
    for _ in 0..channel_mode.channels() {
        let mut bands = Vec::with_capacity(n_levels + 1);
        for _ in 0..=n_levels {
            let mut map = if k == 0 {
                PatchMap::Regressor(RegressorMap {
                    net: Mlp::zeros([d, hidden, hidden, d], slope, Head::LeakyRelu),
                })
            } else {
                PatchMap::Blend(BandMap {
                    k,
                    d,
                    matrices: vec![0.0; k * d * d],
                    field: WeightField::zeros(d, hidden, k, slope),
                })
            };
            for seg in map.segments_mut() {
                r.fill(seg)?;
            }
            bands.push(map);
        }
        maps.push(bands);
    }
    RetouchModel::new(n_levels, patch_size, channel_mode, seed, maps)
}

pub fn save_model(model: &RetouchModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(model)?;
    std::fs::write(path, bytes).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RetouchModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_model(kind_regressor: bool, mode: ChannelMode) -> RetouchModel {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let maps = (0..mode.channels())
            .map(|_| {
                (0..=2)
                    .map(|_| {
                        if kind_regressor {
                            PatchMap::Regressor(RegressorMap::init(9, 5, 0.01, &mut rng))
                        } else {
                            PatchMap::Blend(BandMap::init(3, 9, 5, 0.01, &mut rng))
                        }
                    })
                    .collect()
            })
            .collect();
        RetouchModel::new(2, 3, mode, 42, maps).unwrap()
    }

    #[test]
    fn round_trips_bitwise() {
        for reg in [false, true] {
            for mode in [ChannelMode::LumaOnly, ChannelMode::PerChannel] {
                let m = sample_model(reg, mode);
                let bytes = encode_model(&m).unwrap();
                let back = decode_model(&bytes).unwrap();
                assert_eq!(back, m);
                assert_eq!(encode_model(&back).unwrap(), bytes);
            }
        }
    }

    #[test]
    fn header_layout() {
        let m = sample_model(false, ChannelMode::LumaOnly);
        let bytes = encode_model(&m).unwrap();
        assert_eq!(&bytes[..4], b"OSR1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 5);
        assert_eq!(bytes[24], 0);
        assert_eq!(bytes[25], 1);
        assert_eq!(u64::from_le_bytes(bytes[26..34].try_into().unwrap()), 42);
        assert_eq!(bytes.len(), 34 + 8 * m.param_count());
        let first = f64::from_le_bytes(bytes[34..42].try_into().unwrap());
        assert_eq!(first, m.maps[0][0].segments()[0][0]);
    }

    #[test]
    fn rejects_bad_files() {
        let bytes = encode_model(&sample_model(false, ChannelMode::LumaOnly)).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_model(&bad), Err(Error::UnsupportedVersion(2))));
        assert!(matches!(decode_model(&bytes[..bytes.len() - 1]), Err(Error::Truncated)));
        assert!(matches!(decode_model(&bytes[..10]), Err(Error::Truncated)));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_model(&long), Err(Error::Corrupt(_))));
        let mut bad = bytes.clone();
        bad[24] = 7;
        assert!(matches!(decode_model(&bad), Err(Error::Corrupt(_))));
        let mut nan = bytes.clone();
        nan[34..42].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_model(&nan), Err(Error::Corrupt(_))));
    }

    #[test]
    fn rejects_unrepresentable_models() {
        let mut m = sample_model(false, ChannelMode::LumaOnly);
        m.scale_policy = ScalePolicy::Strict;
        assert!(encode_model(&m).is_err());
        let mut m = sample_model(false, ChannelMode::LumaOnly);
        for map in m.maps.iter_mut().flatten() {
            if let PatchMap::Blend(b) = map {
                b.field.net.leaky_slope = 0.015;
            }
        }
        assert!(encode_model(&m).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.osr");
        let m = sample_model(true, ChannelMode::LumaOnly);
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
        assert!(matches!(load_model(dir.path().join("missing")), Err(Error::Read { .. })));
    }
}
