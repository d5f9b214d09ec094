//! Binary checkpoints.
//!
//! A UTF-8 header followed by raw little-endian `f64` values:
//!
//! ```text
//! graphdiff-checkpoint 1
//! config depth=<d> hidden=<h> steps=<T> schedule=<kind>
//! state step=<u64> epoch=<usize> seed=<u64> best_loss=<f64> best_epoch=<usize>
//! tensor <name> f64 <dim>[,<dim>...]
//! ...
//! end
//! <values of every tensor, in header order>
//! ```
//!
//! Tensor names are prefixed `params.`, `best.`, `adam.m.` and `adam.v.`;
//! `schedule.beta_bar` holds the cumulative flip probabilities.

use std::fs;
use std::path::Path;

use super::TrainState;
use crate::denoiser::MiniPpgnParams;
use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, ScheduleKind};

const MAGIC: &str = "graphdiff-checkpoint 1";

struct Entry<'a> {
    name: String,
    shape: Vec<usize>,
    data: &'a [f64],
}

pub(crate) fn encode(state: &TrainState) -> Vec<u8> {
    let mut entries = vec![Entry {
        name: "schedule.beta_bar".into(),
        shape: vec![state.schedule.beta_bar_values().len()],
        data: state.schedule.beta_bar_values(),
    }];
    let groups: [(&str, &[f64]); 4] = [
        ("params", state.params.values()),
        ("best", state.best_params.values()),
        ("adam.m", &state.first_moment),
        ("adam.v", &state.second_moment),
    ];
    for (prefix, values) in groups {
        for spec in state.params.tensors() {
            entries.push(Entry {
                name: format!("{prefix}.{}", spec.name),
                shape: spec.shape.clone(),
                data: &values[spec.offset..spec.offset + spec.len()],
            });
        }
    }

    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!(
        "config depth={} hidden={} steps={} schedule={}\n",
        state.params.depth(),
        state.params.hidden(),
        state.schedule.steps(),
        state.schedule.kind()
    ));
    header.push_str(&format!(
        "state step={} epoch={} seed={} best_loss={:?} best_epoch={}\n",
        state.step, state.epoch, state.seed, state.best_loss, state.best_epoch
    ));
    for e in &entries {
        let dims: Vec<String> = e.shape.iter().map(usize::to_string).collect();
        header.push_str(&format!("tensor {} f64 {}\n", e.name, dims.join(",")));
    }
    header.push_str("end\n");

    let mut out = header.into_bytes();
    for e in &entries {
        for v in e.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
        .ok_or_else(|| bad(format!("missing `{key}` in {line:?}")))
}

fn parse<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    let raw = field(line, key)?;
    raw.parse()
        .map_err(|_| bad(format!("invalid `{key}` value {raw:?}")))
}

pub(crate) fn decode(bytes: &[u8]) -> Result<TrainState> {
    let end_marker = b"\nend\n";
    let header_len = bytes
        .windows(end_marker.len())
        .position(|w| w == end_marker)
        .map(|p| p + end_marker.len())
        .ok_or_else(|| bad("header terminator not found"))?;
    let header = std::str::from_utf8(&bytes[..header_len]).map_err(|_| bad("header is not UTF-8"))?;
    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("not a graphdiff checkpoint"));
    }
    let config = lines.next().ok_or_else(|| bad("missing config line"))?;
    let state_line = lines.next().ok_or_else(|| bad("missing state line"))?;
    let depth: usize = parse(config, "depth")?;
    let hidden: usize = parse(config, "hidden")?;
    let steps: usize = parse(config, "steps")?;
    let kind = field(config, "schedule")?;

    let mut tensors: Vec<(String, usize)> = Vec::new();
    for line in lines {
        if line == "end" {
            break;
        }
        let mut parts = line.split_whitespace();
        let (Some("tensor"), Some(name), Some("f64"), Some(dims), None) =
            (parts.next(), parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad(format!("malformed tensor line {line:?}")));
        };
        let len = dims
            .split(',')
            .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad shape {dims:?}"))))
            .product::<Result<usize>>()?;
        tensors.push((name.to_string(), len));
    }

    let payload = &bytes[header_len..];
    let total: usize = tensors.iter().map(|(_, l)| l).sum();
    if payload.len() != total * 8 {
        return Err(bad(format!(
            "payload has {} bytes, header describes {}",
            payload.len(),
            total * 8
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take = |name: &str, len: usize| -> Result<Vec<f64>> {
        let (found, l) = tensors
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| bad(format!("missing tensor {name}")))?;
        debug_assert_eq!(found, name);
        if *l != len {
            return Err(bad(format!("tensor {name} has {l} values, expected {len}")));
        }
        Ok(values.by_ref().take(len).collect())
    };

    let template = MiniPpgnParams::zeros(depth, hidden)?;
    let expected_order: Vec<String> = std::iter::once("schedule.beta_bar".to_string())
        .chain(["params", "best", "adam.m", "adam.v"].iter().flat_map(|prefix| {
            template
                .tensors()
                .iter()
                .map(move |t| format!("{prefix}.{}", t.name))
        }))
        .collect();
    if tensors.iter().map(|(n, _)| n).ne(expected_order.iter()) {
        return Err(bad("tensor list does not match the configured network"));
    }

    let beta_bar = take("schedule.beta_bar", steps + 1)?;
    let schedule = match kind.parse::<ScheduleKind>() {
        Ok(k) => {
            let s = NoiseSchedule::new(k, steps)?;
            if s.beta_bar_values() != beta_bar.as_slice() {
                return Err(bad("stored schedule differs from its declared kind"));
            }
            s
        }
        Err(_) if kind == "custom" => NoiseSchedule::relaxed(beta_bar)?,
        Err(e) => return Err(e),
    };

    let mut group = |prefix: &str| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(template.len());
        for spec in template.tensors() {
            out.extend(take(&format!("{prefix}.{}", spec.name), spec.len())?);
        }
        Ok(out)
    };
    let params = MiniPpgnParams::from_values(depth, hidden, group("params")?)?;
    let best_params = MiniPpgnParams::from_values(depth, hidden, group("best")?)?;
    let first_moment = group("adam.m")?;
    let second_moment = group("adam.v")?;

    Ok(TrainState {
        params,
        schedule,
        first_moment,
        second_moment,
        step: parse(state_line, "step")?,
        epoch: parse(state_line, "epoch")?,
        seed: parse(state_line, "seed")?,
        best_params,
        best_loss: parse(state_line, "best_loss")?,
        best_epoch: parse(state_line, "best_epoch")?,
    })
}

pub fn save_checkpoint(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(state)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::TrainConfig;

    fn state() -> TrainState {
        let config = TrainConfig {
            depth: 2,
            hidden: 3,
            steps: 8,
            seed: 5,
            ..TrainConfig::default()
        };
        let mut s = TrainState::new(&config).unwrap();
        s.first_moment.iter_mut().enumerate().for_each(|(i, m)| *m = i as f64 * 1e-3);
        s.second_moment.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64).sqrt());
        s.step = 17;
        s.epoch = 4;
        s.best_loss = 0.123456789;
        s.best_epoch = 3;
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = state();
        let bytes = encode(&s);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn fresh_state_with_infinite_best_loss() {
        let config = TrainConfig { depth: 1, hidden: 2, steps: 4, schedule: ScheduleKind::Cosine, ..TrainConfig::default() };
        let s = TrainState::new(&config).unwrap();
        assert_eq!(decode(&encode(&s)).unwrap(), s);
    }

    #[test]
    fn header_echoes_config() {
        let bytes = encode(&state());
        let text = String::from_utf8_lossy(&bytes[..200]);
        assert!(text.contains("config depth=2 hidden=3 steps=8 schedule=linear"));
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&state());
        assert!(decode(&bytes[..bytes.len() - 8]).is_err());
        assert!(decode(b"hello\nend\n").is_err());
        let text = String::from_utf8_lossy(&bytes).replace("hidden=3", "hidden=4");
        assert!(decode(text.as_bytes()).is_err());
    }
}
