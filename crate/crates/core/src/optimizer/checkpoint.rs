//! Save and restore an [`OptimizerState`].
//!
//! A checkpoint is a directory holding `x.vrmx`, `s.vrmx`, `d.vrmx` (and
//! `t.vrmx` when the auxiliary sequence is tracked), each the stacked
//! `dn x p` matrix in the binary matrix format, plus `manifest.txt` with one
//! `key = value` pair per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{stream_rng, OptimizerState};
use crate::error::{Error, Result};
use crate::linalg::StackedVariable;
use crate::network::CommLedger;
use crate::problems::io::{read_matrix, write_matrix};

const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.txt";

pub fn save(dir: impl AsRef<Path>, state: &OptimizerState, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix(dir.join("x.vrmx"), &state.x.to_stacked())?;
    write_matrix(dir.join("s.vrmx"), &state.s.to_stacked())?;
    write_matrix(dir.join("d.vrmx"), &state.d.to_stacked())?;
    if let Some(t) = &state.t_aux {
        write_matrix(dir.join("t.vrmx"), &t.to_stacked())?;
    }
    let (n, p) = state.x.block_shape();
    let mut m = String::new();
    let _ = writeln!(m, "format_version = {FORMAT_VERSION}");
    let _ = writeln!(m, "agents = {}", state.agents());
    let _ = writeln!(m, "n = {n}");
    let _ = writeln!(m, "p = {p}");
    let _ = writeln!(m, "k = {}", state.k);
    let _ = writeln!(m, "t = {}", state.t);
    let _ = writeln!(m, "iterations = {}", state.iterations);
    let _ = writeln!(m, "rounds = {}", state.comm.rounds);
    let _ = writeln!(m, "samples = {}", state.samples);
    let _ = writeln!(m, "seed = {seed}");
    let _ = writeln!(m, "tracked = {}", state.t_aux.is_some());
    let _ = writeln!(m, "shared_word_pos = {}", state.shared_rng.get_word_pos());
    for (i, r) in state.rngs.iter().enumerate() {
        let _ = writeln!(m, "agent_word_pos.{i} = {}", r.get_word_pos());
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, m).map_err(|e| Error::io(path, e))
}

/// Returns the state and the master seed it was created with.
pub fn load(dir: impl AsRef<Path>) -> Result<(OptimizerState, u64)> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut kv = BTreeMap::new();
    let mut offset = 0u64;
    for line in text.lines() {
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            let (k, v) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
                offset,
                reason: format!("manifest line `{trimmed}` is not `key = value`"),
            })?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        offset += line.len() as u64 + 1;
    }
    fn get<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
        kv.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse {
                offset: 0,
                reason: format!("manifest key `{key}` missing or malformed"),
            })
    }
    let version: u32 = get(&kv, "format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Parse {
            offset: 0,
            reason: format!("unsupported checkpoint version {version}"),
        });
    }
    let d: usize = get(&kv, "agents")?;
    let n: usize = get(&kv, "n")?;
    let p: usize = get(&kv, "p")?;
    let seed: u64 = get(&kv, "seed")?;
    let tracked: bool = get(&kv, "tracked")?;

    let load_stack = |name: &str| -> Result<StackedVariable> {
        let v = StackedVariable::from_stacked(&read_matrix(dir.join(name))?, d)?;
        if v.block_shape() != (n, p) {
            return Err(Error::ShapeMismatch {
                context: "checkpoint block",
                expected: (n, p),
                got: v.block_shape(),
            });
        }
        Ok(v)
    };

    let mut shared_rng = stream_rng(seed, 0);
    shared_rng.set_word_pos(get(&kv, "shared_word_pos")?);
    let rngs = (0..d)
        .map(|i| {
            let mut r = stream_rng(seed, i as u64 + 1);
            r.set_word_pos(get(&kv, &format!("agent_word_pos.{i}"))?);
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;

    let state = OptimizerState {
        x: load_stack("x.vrmx")?,
        s: load_stack("s.vrmx")?,
        d: load_stack("d.vrmx")?,
        t_aux: if tracked { Some(load_stack("t.vrmx")?) } else { None },
        k: get(&kv, "k")?,
        t: get(&kv, "t")?,
        iterations: get(&kv, "iterations")?,
        comm: CommLedger::new(d, n, p).with_rounds(get(&kv, "rounds")?),
        samples: get(&kv, "samples")?,
        rngs,
        shared_rng,
    };
    Ok((state, seed))
}
