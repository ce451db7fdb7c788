//! Binary checkpoint format for layer stacks.
//!
//! Layout: magic "ASNN", format version u32, section count u32, then per
//! section a length-prefixed UTF-8 name and a layer list. Every integer is
//! little-endian; parameters are raw f64 bits, so a round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::conv::{Conv2d, ConvTranspose2d};
use super::layer::{Dense, Layer, LayerStack};

const MAGIC: &[u8; 4] = b"ASNN";
const VERSION: u32 = 1;

const TAG_CONV: u8 = 1;
const TAG_CONV_T: u8 = 2;
const TAG_DENSE: u8 = 3;
const TAG_RELU: u8 = 4;
const TAG_RESHAPE: u8 = 5;

fn write_f64s<W: Write>(w: &mut W, data: &[f64]) -> Result<()> {
    for &v in data {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

fn write_layer<W: Write>(w: &mut W, layer: &Layer) -> Result<()> {
    match layer {
        Layer::Conv2d(c) => {
            w.write_u8(TAG_CONV)?;
            for dim in [c.in_ch, c.out_ch, c.kernel.0, c.kernel.1, c.stride.0, c.stride.1] {
                w.write_u32::<LittleEndian>(dim as u32)?;
            }
            write_f64s(w, c.weight.data())?;
            write_f64s(w, c.bias.data())?;
        }
        Layer::ConvTranspose2d(c) => {
            w.write_u8(TAG_CONV_T)?;
            for dim in [c.in_ch, c.out_ch, c.kernel.0, c.kernel.1, c.stride.0, c.stride.1] {
                w.write_u32::<LittleEndian>(dim as u32)?;
            }
            write_f64s(w, c.weight.data())?;
            write_f64s(w, c.bias.data())?;
        }
        Layer::Dense(d) => {
            w.write_u8(TAG_DENSE)?;
            w.write_u32::<LittleEndian>(d.in_dim as u32)?;
            w.write_u32::<LittleEndian>(d.out_dim as u32)?;
            write_f64s(w, d.weight.data())?;
            write_f64s(w, d.bias.data())?;
        }
        Layer::Relu => w.write_u8(TAG_RELU)?,
        Layer::Reshape(shape) => {
            w.write_u8(TAG_RESHAPE)?;
            w.write_u32::<LittleEndian>(shape.len() as u32)?;
            for &d in shape {
                w.write_u32::<LittleEndian>(d as u32)?;
            }
        }
    }
    Ok(())
}

fn read_layer<R: Read>(r: &mut R) -> Result<Layer> {
    let tag = r.read_u8()?;
    match tag {
        TAG_CONV | TAG_CONV_T => {
            let mut dims = [0usize; 6];
            for d in &mut dims {
                *d = r.read_u32::<LittleEndian>()? as usize;
            }
            let [in_ch, out_ch, kh, kw, sh, sw] = dims;
            let wlen = in_ch * out_ch * kh * kw;
            let weight = read_f64s(r, wlen)?;
            let bias = read_f64s(r, out_ch)?;
            let bias = Tensor::from_vec(&[out_ch], bias)?;
            if tag == TAG_CONV {
                let weight = Tensor::from_vec(&[out_ch, in_ch, kh, kw], weight)?;
                Ok(Layer::Conv2d(Conv2d::new(
                    in_ch,
                    out_ch,
                    (kh, kw),
                    (sh, sw),
                    weight,
                    bias,
                )?))
            } else {
                let weight = Tensor::from_vec(&[in_ch, out_ch, kh, kw], weight)?;
                Ok(Layer::ConvTranspose2d(ConvTranspose2d::new(
                    in_ch,
                    out_ch,
                    (kh, kw),
                    (sh, sw),
                    weight,
                    bias,
                )?))
            }
        }
        TAG_DENSE => {
            let in_dim = r.read_u32::<LittleEndian>()? as usize;
            let out_dim = r.read_u32::<LittleEndian>()? as usize;
            let weight = Tensor::from_vec(&[out_dim, in_dim], read_f64s(r, in_dim * out_dim)?)?;
            let bias = Tensor::from_vec(&[out_dim], read_f64s(r, out_dim)?)?;
            Ok(Layer::Dense(Dense::new(in_dim, out_dim, weight, bias)?))
        }
        TAG_RELU => Ok(Layer::Relu),
        TAG_RESHAPE => {
            let ndim = r.read_u32::<LittleEndian>()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.read_u32::<LittleEndian>()? as usize);
            }
            Ok(Layer::Reshape(shape))
        }
        other => Err(Error::Format(format!("unknown layer tag {}", other))),
    }
}

/// Write named stacks to one checkpoint file.
pub fn save_stacks(path: &Path, sections: &[(&str, &LayerStack)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(sections.len() as u32)?;
    for (name, stack) in sections {
        let bytes = name.as_bytes();
        w.write_u32::<LittleEndian>(bytes.len() as u32)?;
        w.write_all(bytes)?;
        w.write_u32::<LittleEndian>(stack.layers.len() as u32)?;
        for layer in &stack.layers {
            write_layer(&mut w, layer)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read every named stack from a checkpoint file.
pub fn load_stacks(path: &Path) -> Result<Vec<(String, LayerStack)>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:?} in {}",
            magic,
            path.display()
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {} unsupported (expected {})",
            version, VERSION
        )));
    }
    let n_sections = r.read_u32::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(n_sections);
    for _ in 0..n_sections {
        let name_len = r.read_u32::<LittleEndian>()? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("section name is not UTF-8".into()))?;
        let n_layers = r.read_u32::<LittleEndian>()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            layers.push(read_layer(&mut r)?);
        }
        out.push((name, LayerStack::new(layers)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn sample_stacks() -> (LayerStack, LayerStack) {
        let mut rng = rng_from(51);
        let a = LayerStack::new(vec![
            Layer::Conv2d(Conv2d::init(1, 3, (2, 2), (2, 2), &mut rng).unwrap()),
            Layer::Relu,
            Layer::Reshape(vec![12]),
            Layer::Dense(Dense::init(12, 4, &mut rng).unwrap()),
        ]);
        let b = LayerStack::new(vec![
            Layer::Dense(Dense::init(4, 12, &mut rng).unwrap()),
            Layer::Relu,
            Layer::Reshape(vec![3, 2, 2]),
            Layer::ConvTranspose2d(ConvTranspose2d::init(3, 1, (2, 2), (2, 2), &mut rng).unwrap()),
        ]);
        (a, b)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (enc, dec) = sample_stacks();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_stacks(&path, &[("encoder", &enc), ("decoder", &dec)]).unwrap();
        let loaded = load_stacks(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "encoder");
        assert_eq!(loaded[0].1, enc);
        assert_eq!(loaded[1].0, "decoder");
        assert_eq!(loaded[1].1, dec);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(load_stacks(&path), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_wrong_version() {
        let (enc, _) = sample_stacks();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_stacks(&path, &[("encoder", &enc)]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_stacks(&path), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_truncated_file() {
        let (enc, _) = sample_stacks();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_stacks(&path, &[("encoder", &enc)]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        assert!(load_stacks(&path).is_err());
    }

    #[test]
    fn rejects_unknown_layer_tag() {
        let (enc, _) = sample_stacks();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_stacks(&path, &[("e", &enc)]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // first layer tag sits after magic, version, count, name, layer count
        let tag_pos = 4 + 4 + 4 + 4 + 1 + 4;
        assert_eq!(bytes[tag_pos], TAG_CONV);
        bytes[tag_pos] = 77;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_stacks(&path), Err(Error::Format(_))));
    }
}
