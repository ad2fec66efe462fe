//! Flat binary ensemble files: one JSON header line, then the fields as
//! little-endian `f64`, replica-major.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{Ensemble, LatticeConfig};
use crate::error::{invalid, Error, Result};

pub const ENSEMBLE_SCHEMA: &str = "kpzlab.ensemble/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema: String,
    config: LatticeConfig,
    initial: serde_json::Value,
    seed: u64,
    n_replicas: usize,
    n_sites: usize,
    clamps: u64,
    site_updates: u64,
}

pub fn write_ensemble<W: Write>(mut w: W, e: &Ensemble) -> Result<()> {
    let header = Header {
        schema: ENSEMBLE_SCHEMA.into(),
        config: e.config,
        initial: e.initial.clone(),
        seed: e.seed,
        n_replicas: e.n_replicas,
        n_sites: e.n_sites,
        clamps: e.clamps,
        site_updates: e.site_updates,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(e.fields.len() * 8);
    for v in &e.fields {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_ensemble<R: Read>(r: R) -> Result<Ensemble> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let h: Header = serde_json::from_slice(&line)?;
    if h.schema != ENSEMBLE_SCHEMA {
        return Err(Error::Schema {
            expected: ENSEMBLE_SCHEMA.into(),
            found: h.schema,
        });
    }
    let count = h
        .n_replicas
        .checked_mul(h.n_sites)
        .ok_or_else(|| invalid("ensemble header sizes overflow"))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != count * 8 {
        return Err(invalid(format!(
            "ensemble body has {} bytes, header implies {}",
            body.len(),
            count * 8
        )));
    }
    let fields = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Ensemble {
        config: h.config,
        initial: h.initial,
        seed: h.seed,
        n_replicas: h.n_replicas,
        n_sites: h.n_sites,
        fields,
        clamps: h.clamps,
        site_updates: h.site_updates,
    })
}
