//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes      | field                                   |
//! |------------|-----------------------------------------|
//! | 4          | magic `CPCK`                            |
//! | 4  (u32)   | format version, currently 1             |
//! | 1  (u8)    | model kind: 0 = policy, 1 = regressor   |
//! | 1  (u8)    | flags: bit 0 = fitted                   |
//! | 4  (u32)   | model id length `n`                     |
//! | n          | model id, UTF-8                         |
//! | 4  (u32)   | feature dimension `d`                   |
//! | 8  (f64)   | temperature                             |
//! | 8·d (f64)  | weights                                 |

const MAGIC: &[u8; 4] = b"CPCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Policy,
    Regressor,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("trailing bytes after weights")]
    Trailing,
    #[error("model id is not UTF-8")]
    BadId,
    #[error("unknown model kind {0}")]
    BadKind(u8),
    #[error("checkpoint holds a different model kind")]
    WrongKind,
}

pub(crate) struct RawCheckpoint {
    pub kind: ModelKind,
    pub fitted: bool,
    pub model_id: String,
    pub temperature: f64,
    pub weights: Vec<f64>,
}

pub(crate) fn encode(
    kind: ModelKind,
    model_id: &str,
    temperature: f64,
    fitted: bool,
    weights: &[f64],
) -> Vec<u8> {
    let mut out = Vec::with_capacity(30 + model_id.len() + 8 * weights.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match kind {
        ModelKind::Policy => 0,
        ModelKind::Regressor => 1,
    });
    out.push(u8::from(fitted));
    out.extend_from_slice(&(model_id.len() as u32).to_le_bytes());
    out.extend_from_slice(model_id.as_bytes());
    out.extend_from_slice(&(weights.len() as u32).to_le_bytes());
    out.extend_from_slice(&temperature.to_le_bytes());
    for w in weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<RawCheckpoint, CheckpointError> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let kind = match r.take(1)?[0] {
        0 => ModelKind::Policy,
        1 => ModelKind::Regressor,
        k => return Err(CheckpointError::BadKind(k)),
    };
    let fitted = r.take(1)?[0] & 1 == 1;
    let id_len = r.u32()? as usize;
    let model_id = String::from_utf8(r.take(id_len)?.to_vec()).map_err(|_| CheckpointError::BadId)?;
    let dim = r.u32()? as usize;
    let temperature = r.f64()?;
    let weights = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    if !r.buf.is_empty() {
        return Err(CheckpointError::Trailing);
    }
    Ok(RawCheckpoint {
        kind,
        fitted,
        model_id,
        temperature,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{ScoreRegressor, TacticPolicy};
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let p = TacticPolicy {
            model_id: "p0".into(),
            temperature: 1.0,
            weights: vec![0.5, -2.0],
        };
        let b = p.to_bytes();
        assert_eq!(&b[..4], b"CPCK");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(b[8], 0);
        assert_eq!(&b[10..14], &2u32.to_le_bytes());
        assert_eq!(&b[14..16], b"p0");
        assert_eq!(&b[16..20], &2u32.to_le_bytes());
        assert_eq!(&b[20..28], &1.0f64.to_le_bytes());
        assert_eq!(&b[28..36], &0.5f64.to_le_bytes());
        assert_eq!(b.len(), 44);
    }

    #[test]
    fn corrupt_inputs() {
        let p = TacticPolicy::zeros("p", 4, 1.0);
        let b = p.to_bytes();
        assert_eq!(TacticPolicy::from_bytes(&b[..b.len() - 1]), Err(CheckpointError::Truncated));
        let mut extra = b.clone();
        extra.push(0);
        assert_eq!(TacticPolicy::from_bytes(&extra), Err(CheckpointError::Trailing));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert_eq!(TacticPolicy::from_bytes(&bad), Err(CheckpointError::BadMagic));
        assert_eq!(ScoreRegressor::from_bytes(&b), Err(CheckpointError::WrongKind));
    }

    proptest! {
        #[test]
        fn policy_round_trip(
            id in "[a-z0-9_]{0,12}",
            temp in 1e-3f64..10.0,
            weights in proptest::collection::vec(-1e6f64..1e6, 0..64),
        ) {
            let p = TacticPolicy { model_id: id, temperature: temp, weights };
            prop_assert_eq!(TacticPolicy::from_bytes(&p.to_bytes()).unwrap(), p);
        }
    }
}
