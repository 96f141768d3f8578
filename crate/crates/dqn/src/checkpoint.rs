//! Checkpoint file format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   4 bytes  "DQNC"
//! version u32      currently 1
//! geometry 11×u32  input C,H,W · conv1 outC,k,stride · conv2 outC,k,stride ·
//!                  hidden · num_actions
//! params  8 tensors of f32, row-major, in fixed order (conv1 filters, conv1
//!         bias, conv2 filters, conv2 bias, fc1 weight, fc1 bias, out weight,
//!         out bias)
//! rmsprop 8 mean-square tensors of f32 in the same order
//! hyper   3×f64: decay, epsilon, learning rate
//! ```
//!
//! Loads reject wrong magic, unknown versions, inconsistent geometry,
//! truncated or oversized files, naming the field at fault.

use crate::error::{Error, Result};
use crate::nn::{ConvSpec, Geometry, ParamTensors, QNetParams};
use crate::optim::{RmsPropHyper, RmsPropState};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DQNC";
const VERSION: u32 = 1;

/// A loaded checkpoint: parameters plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: QNetParams<f32>,
    pub rms: RmsPropState<f32>,
}

impl Checkpoint {
    /// Errors unless the checkpoint was written for exactly this geometry.
    pub fn require_geometry(&self, expected: &Geometry) -> Result<()> {
        if self.params.geometry() != expected {
            return Err(Error::Format(format!(
                "geometry mismatch: checkpoint has {:?}, expected {:?}",
                self.params.geometry(),
                expected
            )));
        }
        Ok(())
    }
}

fn geometry_words(g: &Geometry) -> [u32; 11] {
    [
        g.input_channels as u32,
        g.input_height as u32,
        g.input_width as u32,
        g.conv1.out_channels as u32,
        g.conv1.kernel as u32,
        g.conv1.stride as u32,
        g.conv2.out_channels as u32,
        g.conv2.kernel as u32,
        g.conv2.stride as u32,
        g.hidden as u32,
        g.num_actions as u32,
    ]
}

pub fn save_checkpoint(
    params: &QNetParams<f32>,
    rms: &RmsPropState<f32>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for word in geometry_words(params.geometry()) {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    for (_, tensor) in params.tensors.blocks() {
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for ((name, ms), (_, p)) in rms.mean_square.blocks().iter().zip(params.tensors.blocks()) {
        if ms.shape() != p.shape() {
            return Err(Error::Shape(format!(
                "optimizer state {name} has shape {:?}, parameters have {:?}",
                ms.shape(),
                p.shape()
            )));
        }
        for v in ms.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in [
        rms.hyper.decay,
        rms.hyper.epsilon_denom,
        rms.hyper.learning_rate,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "unexpected end of file reading {field}"
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize, field: &str) -> Result<Vec<f32>> {
        let raw = self.take(4 * n, field)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };

    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let mut words = [0u32; 11];
    let names = [
        "geometry input_channels",
        "geometry input_height",
        "geometry input_width",
        "geometry conv1_out_channels",
        "geometry conv1_kernel",
        "geometry conv1_stride",
        "geometry conv2_out_channels",
        "geometry conv2_kernel",
        "geometry conv2_stride",
        "geometry hidden",
        "geometry num_actions",
    ];
    for (w, name) in words.iter_mut().zip(names) {
        *w = r.u32(name)?;
    }
    let geometry = Geometry {
        input_channels: words[0] as usize,
        input_height: words[1] as usize,
        input_width: words[2] as usize,
        conv1: ConvSpec {
            out_channels: words[3] as usize,
            kernel: words[4] as usize,
            stride: words[5] as usize,
        },
        conv2: ConvSpec {
            out_channels: words[6] as usize,
            kernel: words[7] as usize,
            stride: words[8] as usize,
        },
        hidden: words[9] as usize,
        num_actions: words[10] as usize,
    };
    geometry
        .validate()
        .map_err(|e| Error::Format(format!("inconsistent geometry in checkpoint: {e}")))?;

    let mut param_tensors = ParamTensors::zeros(&geometry)?;
    for (name, tensor) in param_tensors.blocks_mut() {
        let data = r.f32_vec(tensor.len(), name)?;
        tensor.data_mut().copy_from_slice(&data);
    }
    let mut ms_tensors = ParamTensors::zeros(&geometry)?;
    for (name, tensor) in ms_tensors.blocks_mut() {
        let field = format!("mean_square {name}");
        let data = r.f32_vec(tensor.len(), &field)?;
        tensor.data_mut().copy_from_slice(&data);
    }
    let hyper = RmsPropHyper {
        decay: r.f64("rmsprop decay")?,
        epsilon_denom: r.f64("rmsprop epsilon")?,
        learning_rate: r.f64("rmsprop learning_rate")?,
    };
    hyper
        .validate()
        .map_err(|e| Error::Format(format!("invalid optimizer settings in checkpoint: {e}")))?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint payload",
            bytes.len() - r.pos
        )));
    }

    let params = QNetParams::from_tensors(geometry, param_tensors)?;
    let mut rms = RmsPropState::new(&geometry, hyper)?;
    rms.mean_square = ms_tensors;
    Ok(Checkpoint { params, rms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geometry() -> Geometry {
        Geometry {
            input_channels: 2,
            input_height: 8,
            input_width: 8,
            conv1: ConvSpec {
                out_channels: 3,
                kernel: 3,
                stride: 1,
            },
            conv2: ConvSpec {
                out_channels: 2,
                kernel: 2,
                stride: 2,
            },
            hidden: 6,
            num_actions: 3,
        }
    }

    fn random_state(seed: u64) -> (QNetParams<f32>, RmsPropState<f32>) {
        let g = geometry();
        let params = init_params::<f32>(g, seed).unwrap();
        let mut rms = RmsPropState::new(&g, RmsPropHyper::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        for (_, t) in rms.mean_square.blocks_mut() {
            for v in t.data_mut() {
                *v = rng.gen_range(0.0f32..2.0);
            }
        }
        (params, rms)
    }

    #[test]
    fn round_trip_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.dqnc");
        let (params, rms) = random_state(5);
        save_checkpoint(&params, &rms, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.params, params);
        assert_eq!(loaded.rms, rms);
    }

    #[test]
    fn truncated_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.dqnc");
        let (params, rms) = random_state(6);
        save_checkpoint(&params, &rms, &path).unwrap();
        let full = std::fs::read(&path).unwrap();
        for cut in [2usize, 7, 20, 60, full.len() / 2, full.len() - 3] {
            let part = dir.path().join("cut.dqnc");
            std::fs::write(&part, &full[..cut]).unwrap();
            let err = load_checkpoint(&part).unwrap_err();
            assert!(matches!(err, Error::Format(_)), "cut {cut}: {err:?}");
        }
    }

    #[test]
    fn bad_magic_and_version_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.dqnc");
        let (params, rms) = random_state(7);
        save_checkpoint(&params, &rms, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();

        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        std::fs::write(&path, &wrong_magic).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        bytes[4] = 9; // version -> 9
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.dqnc");
        let (params, rms) = random_state(8);
        save_checkpoint(&params, &rms, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }

    #[test]
    fn geometry_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.dqnc");
        let (params, rms) = random_state(9);
        save_checkpoint(&params, &rms, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let mut other = geometry();
        other.hidden = 7;
        let err = loaded.require_geometry(&other).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        loaded.require_geometry(&geometry()).unwrap();
    }

    #[test]
    fn missing_file_is_an_io_error_with_path() {
        let err = load_checkpoint("/nonexistent/nowhere.dqnc").unwrap_err();
        match err {
            Error::Io { path, .. } => assert!(path.to_string_lossy().contains("nowhere")),
            other => panic!("expected io error, got {other:?}"),
        }
    }
}
