//! Binary persistence of a preconditioner ledger.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic  b"PTCE"     4 bytes
//! version u32        = 1
//! dim, base_rank, records   u64 each
//! gamma   base_rank x f64
//! basis   base_rank x dim x f64
//! per record: tag u8
//!   0 (parametric): rho f64, z dim x f64, y dim x f64
//!   1 (block):      rank u64, d rank x f64, P rank x dim x f64, W rank x dim x f64
//! ```
//!
//! The regularization solve is not stored; it is supplied on load.

use std::io::{Read, Write};

use super::{BasePreconditioner, PreconditionerState, QnUpdate, RegSolve};
use crate::error::{Error, Result};
use crate::linalg::Vector;

const MAGIC: &[u8; 4] = b"PTCE";
const VERSION: u32 = 1;

impl PreconditionerState {
    pub fn write_sidecar(&self, mut out: impl Write) -> Result<()> {
        let n = self.dim();
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        for v in [n, self.base.basis.len(), self.ledger.len()] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        write_f64s(&mut out, &self.base.gamma)?;
        for v in &self.base.basis {
            write_f64s(&mut out, v)?;
        }
        for rec in &self.ledger {
            match rec {
                QnUpdate::Parametric { z, y, rho } => {
                    out.write_all(&[0])?;
                    write_f64s(&mut out, &[*rho])?;
                    write_f64s(&mut out, z)?;
                    write_f64s(&mut out, y)?;
                }
                QnUpdate::Block { p, w, d } => {
                    out.write_all(&[1])?;
                    out.write_all(&(d.len() as u64).to_le_bytes())?;
                    write_f64s(&mut out, d)?;
                    for v in p.iter().chain(w) {
                        write_f64s(&mut out, v)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_sidecar(mut input: impl Read, reg_solve: RegSolve) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Io("not a preconditioner sidecar".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(Error::Io(format!("unsupported sidecar version {version}")));
        }
        let n = read_u64(&mut input)?;
        let base_rank = read_u64(&mut input)?;
        let records = read_u64(&mut input)?;
        let gamma = read_f64s(&mut input, base_rank)?;
        let basis = (0..base_rank)
            .map(|_| read_vector(&mut input, n))
            .collect::<Result<Vec<_>>>()?;
        let base = BasePreconditioner::new(n, reg_solve, basis, gamma)?;
        let mut state = PreconditionerState::from_base(base);
        for _ in 0..records {
            let mut tag = [0u8; 1];
            input.read_exact(&mut tag)?;
            let rec = match tag[0] {
                0 => {
                    let rho = read_f64s(&mut input, 1)?[0];
                    let z = read_vector(&mut input, n)?;
                    let y = read_vector(&mut input, n)?;
                    QnUpdate::Parametric { z, y, rho }
                }
                1 => {
                    let rank = read_u64(&mut input)?;
                    let d = read_f64s(&mut input, rank)?;
                    let p = (0..rank)
                        .map(|_| read_vector(&mut input, n))
                        .collect::<Result<Vec<_>>>()?;
                    let w = (0..rank)
                        .map(|_| read_vector(&mut input, n))
                        .collect::<Result<Vec<_>>>()?;
                    QnUpdate::Block { p, w, d }
                }
                t => return Err(Error::Io(format!("unknown record tag {t}"))),
            };
            state.ledger.push(rec);
        }
        Ok(state)
    }
}

fn write_f64s(out: &mut impl Write, xs: &[f64]) -> Result<()> {
    for x in xs {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64(input: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::Io("length overflow".into()))
}

fn read_f64s(input: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count.min(1 << 20));
    let mut b = [0u8; 8];
    for _ in 0..count {
        input.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

fn read_vector(input: &mut impl Read, n: usize) -> Result<Vector> {
    Vector::new(read_f64s(input, n)?)
}
