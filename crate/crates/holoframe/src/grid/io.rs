//! Form serialisation: a little-endian binary format (bit-exact) and CSV.
//!
//! Binary layout: magic `HFGF`, `u32` version, `u32` n, `u32` q, `f64` r, `f64` h,
//! `f64` subdomain fraction, `u32`-prefixed algebra id, `u32` d, `u32` component
//! count, then per component a `u64` node count followed by `2*d*count` `f64`s.

use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::{layouts, multi_indices, GForm, GridDomain, GridError};
use crate::lie::LieAlgebra;

const MAGIC: &[u8; 4] = b"HFGF";
const VERSION: u32 = 1;

pub fn write_binary<W: Write>(f: &GForm, w: &mut W) -> Result<(), GridError> {
    let dom = f.domain();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dom.n() as u32).to_le_bytes())?;
    w.write_all(&(f.degree() as u32).to_le_bytes())?;
    for x in [dom.r(), dom.h(), dom.subdomain_fraction()] {
        w.write_all(&x.to_le_bytes())?;
    }
    let id = f.algebra().id().as_bytes();
    w.write_all(&(id.len() as u32).to_le_bytes())?;
    w.write_all(id)?;
    w.write_all(&(f.dim() as u32).to_le_bytes())?;
    w.write_all(&(f.num_components() as u32).to_le_bytes())?;
    for c in 0..f.num_components() {
        let data = f.component(c);
        w.write_all(&((data.len() / f.dim()) as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(data.len() * 16);
        for v in data {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, GridError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, GridError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, GridError> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn resolve(id: &str, algebra: Option<&Arc<LieAlgebra>>) -> Result<Arc<LieAlgebra>, GridError> {
    match algebra {
        Some(g) if g.id() == id => Ok(g.clone()),
        Some(g) => Err(GridError::Format(format!("file algebra '{id}' differs from '{}'", g.id()))),
        None => Ok(Arc::new(LieAlgebra::by_name(id)?)),
    }
}

/// Reads a binary form. Without an explicit algebra the stored id must name a built-in.
pub fn read_binary<R: Read>(r: &mut R, algebra: Option<&Arc<LieAlgebra>>) -> Result<GForm, GridError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GridError::Format("not a form file".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(GridError::Format(format!("unsupported version {version}")));
    }
    let n = read_u32(r)? as usize;
    let q = read_u32(r)? as usize;
    let (rad, h, frac) = (read_f64(r)?, read_f64(r)?, read_f64(r)?);
    let id_len = read_u32(r)? as usize;
    if id_len > 4096 {
        return Err(GridError::Format("algebra id too long".into()));
    }
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id)?;
    let id = String::from_utf8(id).map_err(|_| GridError::Format("algebra id is not UTF-8".into()))?;
    let g = resolve(&id, algebra)?;
    let d = read_u32(r)? as usize;
    if d != g.dim() {
        return Err(GridError::Format(format!("stored dimension {d} differs from algebra dimension {}", g.dim())));
    }
    let dom = GridDomain::new(n, rad, h, frac)?;
    let ncomp = read_u32(r)? as usize;
    let ls = layouts(n, q);
    if ncomp != ls.len() {
        return Err(GridError::Format(format!("expected {} components, found {ncomp}", ls.len())));
    }
    let mut comps = Vec::with_capacity(ncomp);
    for l in ls {
        let count = read_u64(r)? as usize;
        if count != dom.size(l) {
            return Err(GridError::Format(format!("component has {count} nodes, grid has {}", dom.size(l))));
        }
        let mut raw = vec![0u8; count * d * 16];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(16)
            .map(|b| {
                let re = f64::from_le_bytes(b[..8].try_into().unwrap());
                let im = f64::from_le_bytes(b[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        comps.push(data);
    }
    GForm::from_components(&dom, &g, q, comps)
}

/// CSV with a `#` metadata line, then one row per (component, node).
pub fn write_csv<W: Write>(f: &GForm, w: &mut W) -> Result<(), GridError> {
    let dom = f.domain();
    let n = dom.n();
    writeln!(
        w,
        "# n={} q={} r={} h={} subdomain_fraction={} algebra={} d={}",
        n,
        f.degree(),
        dom.r(),
        dom.h(),
        dom.subdomain_fraction(),
        f.algebra().id(),
        f.dim()
    )?;
    let mut header = vec!["component".to_string(), "node".to_string()];
    for p in 1..=n {
        header.push(format!("x{p}"));
        header.push(format!("y{p}"));
    }
    for name in f.algebra().names() {
        header.push(format!("{name}_re"));
        header.push(format!("{name}_im"));
    }
    writeln!(w, "{}", header.join(","))?;
    let labels = multi_indices(n, f.degree());
    for c in 0..f.num_components() {
        let l = f.layout(c);
        for idx in 0..dom.size(l) {
            let x = dom.coords(l, idx);
            let mut row = vec![labels[c].clone(), idx.to_string()];
            for v in &x[..2 * n] {
                row.push(v.to_string());
            }
            for v in f.value(c, idx) {
                row.push(v.re.to_string());
                row.push(v.im.to_string());
            }
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// Reads the CSV written by [`write_csv`].
pub fn read_csv<R: BufRead>(r: R, algebra: Option<&Arc<LieAlgebra>>) -> Result<GForm, GridError> {
    let mut lines = r.lines();
    let meta = lines.next().ok_or_else(|| GridError::Format("empty file".into()))??;
    let meta = meta.strip_prefix('#').ok_or_else(|| GridError::Format("missing metadata line".into()))?;
    let mut get = std::collections::HashMap::new();
    for kv in meta.split_whitespace() {
        if let Some((k, v)) = kv.split_once('=') {
            get.insert(k.to_string(), v.to_string());
        }
    }
    let field = |k: &str| get.get(k).cloned().ok_or_else(|| GridError::Format(format!("missing '{k}'")));
    let num = |k: &str| -> Result<f64, GridError> {
        field(k)?.parse::<f64>().map_err(|_| GridError::Format(format!("bad value for '{k}'")))
    };
    let n = num("n")? as usize;
    let q = num("q")? as usize;
    let dom = GridDomain::new(n, num("r")?, num("h")?, num("subdomain_fraction")?)?;
    let g = resolve(&field("algebra")?, algebra)?;
    let d = g.dim();
    lines.next().ok_or_else(|| GridError::Format("missing header".into()))??;
    let labels = multi_indices(n, q);
    let mut f = GForm::zeros(&dom, &g, q)?;
    let mut seen: Vec<Vec<bool>> = (0..f.num_components()).map(|c| vec![false; dom.size(f.layout(c))]).collect();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 2 + 2 * n + 2 * d {
            return Err(GridError::Format(format!("row has {} columns", cols.len())));
        }
        let c = labels
            .iter()
            .position(|s| s == cols[0])
            .ok_or_else(|| GridError::Format(format!("unknown component '{}'", cols[0])))?;
        let idx: usize = cols[1].parse().map_err(|_| GridError::Format("bad node index".into()))?;
        if idx >= seen[c].len() {
            return Err(GridError::Format(format!("node {idx} out of range")));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| GridError::Format(format!("bad number '{s}'")));
        let vals = &cols[2 + 2 * n..];
        let mut v = Vec::with_capacity(d);
        for t in 0..d {
            v.push(C64::new(parse(vals[2 * t])?, parse(vals[2 * t + 1])?));
        }
        let dd = f.dim();
        f.component_mut(c)[idx * dd..(idx + 1) * dd].copy_from_slice(&v);
        seen[c][idx] = true;
    }
    if seen.iter().flatten().any(|s| !s) {
        return Err(GridError::Format("missing rows".into()));
    }
    Ok(f)
}
