//! On-disk formats.
//!
//! Grid functions use a self-describing text format (`.gfn`): a short header
//! followed by one node value per line in flat index order (x fastest).
//! Floats print in Rust's shortest round-trip form, so read(write(f)) == f
//! bit for bit.
//!
//! ```text
//! gridfunction v1
//! dim 1
//! lo -1 0
//! hi 1 0
//! h 0.0078125
//! support 0 0 0.5        (optional: center_x center_y radius)
//! values 512
//! <512 lines>
//! ```
//!
//! Candidates (atoms, molecules) pair a `.gfn` with a JSON sidecar carrying
//! the ball, parameter bundle, weight family and seed.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ParamsConfig, WeightConfig};
use hardy_core::atoms::AtomCandidate;
use hardy_core::{Ball, GridFunction, GridSpec, Qexp};

pub fn write_gridfunction(f: &GridFunction, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("gridfunction v1\n");
    out.push_str(&format!("dim {}\n", f.spec.dim));
    out.push_str(&format!("lo {} {}\n", f.spec.lo[0], f.spec.lo[1]));
    out.push_str(&format!("hi {} {}\n", f.spec.hi[0], f.spec.hi[1]));
    out.push_str(&format!("h {}\n", f.spec.h));
    if let Some(b) = f.support_hint {
        out.push_str(&format!("support {} {} {}\n", b.center[0], b.center[1], b.radius));
    }
    out.push_str(&format!("values {}\n", f.values.len()));
    for v in &f.values {
        out.push_str(&format!("{v}\n"));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_gridfunction(path: &Path) -> Result<GridFunction> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != "gridfunction v1" {
        bail!("not a gridfunction v1 file: {}", path.display());
    }
    let mut dim = 0usize;
    let mut lo = [0.0; 2];
    let mut hi = [0.0; 2];
    let mut h = 0.0;
    let mut support: Option<Ball> = None;
    let mut count = 0usize;
    for line in lines.by_ref() {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        match key {
            "dim" => dim = rest[0].parse()?,
            "lo" => lo = [rest[0].parse()?, rest[1].parse()?],
            "hi" => hi = [rest[0].parse()?, rest[1].parse()?],
            "h" => h = rest[0].parse()?,
            "support" => {
                support = Some(Ball::new(
                    [rest[0].parse()?, rest[1].parse()?],
                    rest[2].parse()?,
                )?);
            }
            "values" => {
                count = rest[0].parse()?;
                break;
            }
            other => bail!("unknown header key '{other}'"),
        }
    }
    let mut values = Vec::with_capacity(count);
    for line in lines {
        if line.is_empty() {
            continue;
        }
        values.push(line.parse::<f64>()?);
    }
    if values.len() != count {
        bail!("expected {count} values, found {}", values.len());
    }
    let spec = GridSpec::new(dim, lo, hi, h)?;
    Ok(GridFunction::new(spec, values, support)?)
}

/// JSON sidecar for a serialized candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSidecar {
    pub ball_center: [f64; 2],
    pub ball_radius: f64,
    pub params: ParamsConfig,
    pub weight: WeightConfig,
    pub seed: u64,
}

pub fn write_candidate(c: &AtomCandidate, weight: &WeightConfig, seed: u64, base: &Path) -> Result<()> {
    write_gridfunction(&c.f, &base.with_extension("gfn"))?;
    let q = match c.params.q {
        Qexp::Finite(v) => Some(v),
        Qexp::Infinity => None,
    };
    let side = CandidateSidecar {
        ball_center: c.ball.center,
        ball_radius: c.ball.radius,
        params: ParamsConfig {
            p: c.params.p,
            q,
            eta: c.params.eta,
            lambda: c.params.lambda,
            mu: c.params.mu,
            delta: c.params.delta,
            q_omega: 1.0,
        },
        weight: weight.clone(),
        seed,
    };
    std::fs::write(
        base.with_extension("json"),
        serde_json::to_string_pretty(&side)?,
    )?;
    Ok(())
}

pub fn read_candidate(base: &Path) -> Result<AtomCandidate> {
    let f = read_gridfunction(&base.with_extension("gfn"))?;
    let text = std::fs::read_to_string(base.with_extension("json"))?;
    let side: CandidateSidecar = serde_json::from_str(&text)?;
    let dim = f.spec.dim;
    Ok(AtomCandidate {
        f,
        ball: Ball::new(side.ball_center, side.ball_radius)?,
        params: side.params.build(dim)?,
        omega: side.weight.build(dim)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gridfunction_round_trip_is_bit_exact() {
        let spec = GridSpec::new(1, [-1.0, 0.0], [1.0, 0.0], 0.0625).unwrap();
        let f = GridFunction::from_fn(spec, |x| (x[0] * 3.7).sin() / 3.0)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.gfn");
        write_gridfunction(&f, &path).unwrap();
        let g = read_gridfunction(&path).unwrap();
        assert_eq!(f.spec, g.spec);
        assert_eq!(f.values, g.values);
    }
}
