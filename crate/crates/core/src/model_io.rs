//! Binary model serialization: versioned header, scaling parameters,
//! random layer, coefficients, and any retained training features, all
//! little-endian.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data_model::ScaleParams;
use crate::elm::HiddenLayer;
use crate::error::{Error, Result};
use crate::pipeline::{TrainedModel, Variant};
use crate::wcf::{CombineRule, WcfConfig};

const MAGIC: &[u8; 8] = b"ASMLELM\x01";
const VERSION: u32 = 1;

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_matrix(buf: &mut Vec<u8>, m: &DMatrix<f64>) {
    push_u32(buf, m.nrows() as u32);
    push_u32(buf, m.ncols() as u32);
    for v in m.as_slice() {
        push_f64(buf, *v);
    }
}

fn push_opt_matrix(buf: &mut Vec<u8>, m: Option<&DMatrix<f64>>) {
    match m {
        Some(m) => {
            buf.push(1);
            push_matrix(buf, m);
        }
        None => buf.push(0),
    }
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    push_u32(&mut buf, VERSION);
    buf.push(match model.variant {
        Variant::AsmlBelm => 0,
        Variant::AsmlNlelm => 1,
        Variant::AsmlKelm => 2,
    });
    buf.push(u8::from(model.wcf));
    buf.push(match model.wcf_cfg.combine_rule {
        CombineRule::Linear => 0,
        CombineRule::Sqrt => 1,
    });
    buf.push(0); // pad
    push_u32(&mut buf, model.num_classes as u32);
    push_u32(&mut buf, model.wcf_cfg.window as u32);
    push_f64(&mut buf, model.scale.min);
    push_f64(&mut buf, model.scale.max);
    push_f64(&mut buf, model.wcf_cfg.mu);
    push_f64(&mut buf, model.wcf_cfg.z);
    push_f64(&mut buf, model.sigma_w);
    push_f64(&mut buf, model.sigma_s);
    match &model.hidden {
        Some(layer) => {
            buf.push(1);
            push_matrix(&mut buf, &layer.weights);
            push_matrix(&mut buf, &DMatrix::from_column_slice(layer.biases.len(), 1, layer.biases.as_slice()));
        }
        None => buf.push(0),
    }
    push_opt_matrix(&mut buf, model.train_spectral.as_ref());
    push_opt_matrix(&mut buf, model.train_spatial.as_ref());
    push_matrix(&mut buf, &model.coefficients);
    fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a>(Cursor<&'a [u8]>);

impl Reader<'_> {
    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.0.read_exact(&mut b).map_err(|_| Error::load("model", "truncated file"))?;
        Ok(b[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b).map_err(|_| Error::load("model", "truncated file"))?;
        Ok(u32::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b).map_err(|_| Error::load("model", "truncated file"))?;
        Ok(f64::from_le_bytes(b))
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let mut data = vec![0.0; rows * cols];
        for v in &mut data {
            *v = self.f64()?;
        }
        Ok(DMatrix::from_column_slice(rows, cols, &data))
    }

    fn opt_matrix(&mut self) -> Result<Option<DMatrix<f64>>> {
        if self.u8()? == 1 {
            Ok(Some(self.matrix()?))
        } else {
            Ok(None)
        }
    }
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::load("model", "bad magic"));
    }
    let mut r = Reader(Cursor::new(&bytes[8..]));
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::load("model", format!("unsupported version {version}")));
    }
    let variant = match r.u8()? {
        0 => Variant::AsmlBelm,
        1 => Variant::AsmlNlelm,
        2 => Variant::AsmlKelm,
        v => return Err(Error::load("variant", format!("unknown tag {v}"))),
    };
    let wcf = r.u8()? == 1;
    let combine_rule = match r.u8()? {
        0 => CombineRule::Linear,
        1 => CombineRule::Sqrt,
        v => return Err(Error::load("combine_rule", format!("unknown tag {v}"))),
    };
    r.u8()?; // pad
    let num_classes = r.u32()? as usize;
    let window = r.u32()? as usize;
    let scale = ScaleParams { min: r.f64()?, max: r.f64()? };
    let mu = r.f64()?;
    let z = r.f64()?;
    let sigma_w = r.f64()?;
    let sigma_s = r.f64()?;
    let hidden = if r.u8()? == 1 {
        let weights = r.matrix()?;
        let bias_mat = r.matrix()?;
        Some(HiddenLayer {
            weights,
            biases: DVector::from_column_slice(bias_mat.as_slice()),
        })
    } else {
        None
    };
    let train_spectral = r.opt_matrix()?;
    let train_spatial = r.opt_matrix()?;
    let coefficients = r.matrix()?;
    Ok(TrainedModel {
        variant,
        wcf,
        num_classes,
        scale,
        hidden,
        train_spectral,
        train_spatial,
        sigma_w,
        sigma_s,
        wcf_cfg: WcfConfig { window, z, mu, combine_rule },
        coefficients,
    })
}
