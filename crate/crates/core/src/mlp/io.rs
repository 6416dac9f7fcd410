//! Binary model format, little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "ASSOCMLP"
//! version      u32      1
//! input_dim    u32
//! layer_count  u32      hidden layers + output layer
//! widths       u32 x layer_count (last must be 1)
//! parameters   f64 x N  per layer: weights (row-major, out x in), then biases
//! ```

use std::path::Path;

use super::model::{Layer, MlpModel};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"ASSOCMLP";
pub const MODEL_VERSION: u32 = 1;

pub fn model_to_bytes(model: &MlpModel) -> Vec<u8> {
    let layers = model.layers();
    let mut out = Vec::with_capacity(20 + 4 * layers.len() + 8 * model.num_params());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
    }
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::ModelParse {
                offset: self.buf.len(),
                message: format!("unexpected end of file while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn model_from_bytes(buf: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8, "magic")? != MODEL_MAGIC {
        return Err(Error::ModelParse { offset: 0, message: "bad magic".into() });
    }
    let version_at = r.pos;
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::ModelParse {
            offset: version_at,
            message: format!("unsupported version {version}"),
        });
    }
    let input_dim = r.u32("input dimension")? as usize;
    if input_dim == 0 {
        return Err(Error::ModelValidation("input dimension is zero".into()));
    }
    let count_at = r.pos;
    let count = r.u32("layer count")? as usize;
    if count == 0 {
        return Err(Error::ModelValidation("model has no layers".into()));
    }
    // every layer needs at least its width and one weight
    if count > buf.len() / 4 {
        return Err(Error::ModelParse {
            offset: count_at,
            message: format!("layer count {count} exceeds file size"),
        });
    }
    let mut widths = Vec::with_capacity(count);
    for i in 0..count {
        let w = r.u32(&format!("width of layer {i}"))? as usize;
        if w == 0 {
            return Err(Error::ModelValidation(format!("layer {i}: zero width")));
        }
        widths.push(w);
    }
    if widths[count - 1] != 1 {
        return Err(Error::ModelValidation(format!(
            "layer {}: output layer has width {}, expected 1",
            count - 1,
            widths[count - 1]
        )));
    }
    let mut layers = Vec::with_capacity(count);
    let mut prev = input_dim;
    for (i, &w) in widths.iter().enumerate() {
        let mut weights = Vec::with_capacity(prev * w);
        for _ in 0..prev * w {
            weights.push(r.f64(&format!("weights of layer {i}"))?);
        }
        let mut biases = Vec::with_capacity(w);
        for _ in 0..w {
            biases.push(r.f64(&format!("biases of layer {i}"))?);
        }
        layers.push(Layer { in_dim: prev, out_dim: w, weights, biases });
        prev = w;
    }
    if r.pos != buf.len() {
        return Err(Error::ModelParse {
            offset: r.pos,
            message: format!("{} trailing bytes", buf.len() - r.pos),
        });
    }
    MlpModel::from_layers(input_dim, layers)
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let bytes = model_to_bytes(&MlpModel::zeros(40, &[7]));
        assert_eq!(&bytes[..8], b"ASSOCMLP");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &40u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &2u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &7u32.to_le_bytes());
        assert_eq!(&bytes[24..28], &1u32.to_le_bytes());
        assert_eq!(bytes.len(), 28 + 8 * (40 * 7 + 7 + 7 + 1));
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let bytes = model_to_bytes(&MlpModel::init(6, &[3], 1));
        for cut in [0, 5, 10, 27, bytes.len() - 1] {
            match model_from_bytes(&bytes[..cut]) {
                Err(Error::ModelParse { offset, .. }) => assert!(offset <= cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(model_from_bytes(&extra), Err(Error::ModelParse { offset, .. }) if offset == bytes.len()));
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let mut bytes = model_to_bytes(&MlpModel::init(6, &[3], 1));
        // output width 2
        bytes[24..28].copy_from_slice(&2u32.to_le_bytes());
        let err = model_from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::ModelValidation(ref m) if m.contains("layer 1")), "{err}");
        let mut bytes = model_to_bytes(&MlpModel::init(6, &[3], 1));
        bytes[20..24].copy_from_slice(&0u32.to_le_bytes());
        let err = model_from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::ModelValidation(ref m) if m.contains("layer 0")), "{err}");
    }

    #[test]
    fn non_finite_parameters_are_rejected() {
        let mut bytes = model_to_bytes(&MlpModel::zeros(2, &[]));
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(model_from_bytes(&bytes), Err(Error::ModelValidation(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = MlpModel::init(40, &[7], 5);
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }

    proptest! {
        #[test]
        fn round_trip_preserves_outputs(seed in any::<u64>(), input in 1usize..12, h1 in 1usize..9, deep in any::<bool>()) {
            let hidden = if deep { vec![h1, 3] } else { vec![h1] };
            let m = MlpModel::init(input, &hidden, seed);
            let back = model_from_bytes(&model_to_bytes(&m)).unwrap();
            let x: Vec<f64> = (0..input * 4).map(|i| ((i as f64) * 0.37).sin()).collect();
            let a = m.forward_flat(&x).unwrap();
            let b = back.forward_flat(&x).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
