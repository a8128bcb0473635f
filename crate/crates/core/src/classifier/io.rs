//! Binary model container.
//!
//! Single model (`EWSVM1`), all numbers little-endian:
//!
//! ```text
//! magic        6 bytes  "EWSVM1"
//! gamma kind   u8       0 = fixed, 1 = scaled from data
//! reserved     u8       0
//! C            f64
//! gamma        f64      resolved kernel width
//! n_features   u64
//! n_support    u64
//! mean         f64 × n_features
//! std          f64 × n_features
//! vectors      f64 × n_support × n_features   row-major, standardized
//! dual coeffs  f64 × n_support
//! bias         f64
//! ```
//!
//! Chained model (`EWCHN1`): magic, one direction byte (0 = VALARO,
//! 1 = AROVAL), then the first and second stages as consecutive `EWSVM1`
//! records.

use std::io::{Read, Write};

use ndarray::Array2;

use super::{ChainDirection, ChainedModel, Gamma, SvmError, TrainedSvm};
use crate::features::Standardizer;

pub const MODEL_MAGIC: &[u8; 6] = b"EWSVM1";
pub const CHAINED_MAGIC: &[u8; 6] = b"EWCHN1";

fn put_f64(w: &mut impl Write, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_f64(r: &mut impl Read) -> Result<f64, SvmError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64, SvmError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn get_vec(r: &mut impl Read, n: usize) -> Result<Vec<f64>, SvmError> {
    (0..n).map(|_| get_f64(r)).collect()
}

fn truncated(e: std::io::Error) -> SvmError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        SvmError::Format("unexpected end of model data".into())
    } else {
        SvmError::Io(e)
    }
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 6]) -> Result<(), SvmError> {
    let mut m = [0u8; 6];
    r.read_exact(&mut m).map_err(truncated)?;
    if &m != magic {
        return Err(SvmError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn write_model(w: &mut impl Write, model: &TrainedSvm) -> Result<(), SvmError> {
    w.write_all(MODEL_MAGIC)?;
    let kind = match model.gamma_spec {
        Gamma::Value(_) => 0u8,
        Gamma::Scale => 1u8,
    };
    w.write_all(&[kind, 0])?;
    put_f64(w, model.c)?;
    put_f64(w, model.gamma)?;
    put_u64(w, model.n_features() as u64)?;
    put_u64(w, model.n_support() as u64)?;
    for v in model.standardizer.mean.iter().chain(&model.standardizer.std) {
        put_f64(w, *v)?;
    }
    for v in model.support_vectors.iter() {
        put_f64(w, *v)?;
    }
    for v in &model.dual_coeffs {
        put_f64(w, *v)?;
    }
    put_f64(w, model.bias)?;
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<TrainedSvm, SvmError> {
    expect_magic(r, MODEL_MAGIC)?;
    let mut flags = [0u8; 2];
    r.read_exact(&mut flags).map_err(truncated)?;
    let c = get_f64(r)?;
    let gamma = get_f64(r)?;
    let gamma_spec = match flags[0] {
        0 => Gamma::Value(gamma),
        1 => Gamma::Scale,
        other => return Err(SvmError::Format(format!("unknown gamma kind {other}"))),
    };
    let n_features = get_u64(r)? as usize;
    let n_support = get_u64(r)? as usize;
    const LIMIT: usize = 1 << 32;
    if n_features == 0 || n_features > LIMIT || n_support > LIMIT / n_features.max(1) {
        return Err(SvmError::Format(format!(
            "implausible dimensions {n_support} × {n_features}"
        )));
    }
    let mean = get_vec(r, n_features)?;
    let std = get_vec(r, n_features)?;
    let sv = get_vec(r, n_support * n_features)?;
    let dual_coeffs = get_vec(r, n_support)?;
    let bias = get_f64(r)?;
    Ok(TrainedSvm {
        support_vectors: Array2::from_shape_vec((n_support, n_features), sv)
            .expect("length checked"),
        dual_coeffs,
        bias,
        c,
        gamma_spec,
        gamma,
        standardizer: Standardizer { mean, std },
    })
}

pub fn write_chained(w: &mut impl Write, model: &ChainedModel) -> Result<(), SvmError> {
    w.write_all(CHAINED_MAGIC)?;
    w.write_all(&[match model.direction {
        ChainDirection::ValAro => 0,
        ChainDirection::AroVal => 1,
    }])?;
    write_model(w, &model.first)?;
    write_model(w, &model.second)
}

pub fn read_chained(r: &mut impl Read) -> Result<ChainedModel, SvmError> {
    expect_magic(r, CHAINED_MAGIC)?;
    let mut d = [0u8; 1];
    r.read_exact(&mut d).map_err(truncated)?;
    let direction = match d[0] {
        0 => ChainDirection::ValAro,
        1 => ChainDirection::AroVal,
        other => return Err(SvmError::Format(format!("unknown chain direction {other}"))),
    };
    let first = read_model(r)?;
    let second = read_model(r)?;
    if second.n_features() != first.n_features() + 1 {
        return Err(SvmError::Format(format!(
            "second stage expects {} features, first stage {}",
            second.n_features(),
            first.n_features()
        )));
    }
    Ok(ChainedModel {
        direction,
        first,
        second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train_smo, RbfParams, SmoConfig};
    use crate::signal::BinaryLabel;
    use ndarray::array;

    fn model() -> TrainedSvm {
        let x = array![[0.0, 0.3], [1.0, 1.1], [0.1, 1.0], [1.2, 0.0], [0.4, 0.4]];
        let y = [
            BinaryLabel::Low,
            BinaryLabel::Low,
            BinaryLabel::High,
            BinaryLabel::High,
            BinaryLabel::Low,
        ];
        train_smo(x.view(), &y, RbfParams::default(), &SmoConfig::default()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let mut buf = Vec::new();
        write_model(&mut buf, &m).unwrap();
        assert_eq!(&buf[..6], b"EWSVM1");
        assert_eq!(buf[6], 1);
        let back = read_model(&mut buf.as_slice()).unwrap();
        assert_eq!(back.gamma.to_bits(), m.gamma.to_bits());
        assert_eq!(back.bias.to_bits(), m.bias.to_bits());
        assert_eq!(back, m);
        let mut again = Vec::new();
        write_model(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn header_layout() {
        let m = model();
        let mut buf = Vec::new();
        write_model(&mut buf, &m).unwrap();
        assert_eq!(&buf[8..16], &m.c.to_le_bytes());
        assert_eq!(&buf[16..24], &m.gamma.to_le_bytes());
        assert_eq!(&buf[24..32], &2u64.to_le_bytes());
        let expected = 6 + 2 + 8 * 4 + 8 * 4 + m.n_support() * 8 * 3 + 8;
        assert_eq!(buf.len(), expected);
    }

    #[test]
    fn truncation_and_magic_errors() {
        let mut buf = Vec::new();
        write_model(&mut buf, &model()).unwrap();
        buf.pop();
        assert!(matches!(read_model(&mut buf.as_slice()), Err(SvmError::Format(_))));
        buf[0] = b'X';
        assert!(matches!(read_model(&mut buf.as_slice()), Err(SvmError::Format(_))));
    }
}
