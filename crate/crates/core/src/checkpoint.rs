//! Checkpoints: a versioned plain-text snapshot of an agent's networks.
//! Floats are written in Rust's shortest round-trip display form, so a
//! save/load cycle reproduces every parameter bit-exactly.
//!
//! Layout:
//! ```text
//! optionrl-checkpoint v1
//! algo soap
//! obs_dim 3
//! n_actions 2
//! n_options 4
//! net policy
//! dims 3 64 64 8
//! w <row-major floats of layer 0>
//! b <biases of layer 0>
//! w …            (one w/b pair per layer)
//! net value
//! …
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::algo::{AgentNets, AlgoKind};
use crate::num::Mlp;
use crate::{Error, Result};

fn push_net(out: &mut String, name: &str, net: &Mlp) {
    writeln!(out, "net {name}").unwrap();
    let dims = net.dims();
    writeln!(out, "dims {}", dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ")).unwrap();
    let mut idx = 0;
    for l in 0..dims.len() - 1 {
        for (label, count) in [("w", dims[l] * dims[l + 1]), ("b", dims[l + 1])] {
            let vals: Vec<String> = (0..count)
                .map(|_| {
                    let v = net.param(idx).to_string();
                    idx += 1;
                    v
                })
                .collect();
            writeln!(out, "{label} {}", vals.join(" ")).unwrap();
        }
    }
}

/// Render a checkpoint to its text form.
pub fn render(nets: &AgentNets, algo: AlgoKind) -> String {
    let mut out = String::new();
    writeln!(out, "optionrl-checkpoint v1").unwrap();
    writeln!(out, "algo {algo}").unwrap();
    writeln!(out, "obs_dim {}", nets.obs_dim).unwrap();
    writeln!(out, "n_actions {}", nets.n_actions).unwrap();
    writeln!(out, "n_options {}", nets.n_options).unwrap();
    push_net(&mut out, "policy", &nets.policy);
    push_net(&mut out, "value", &nets.value);
    if let Some(net) = &nets.transition {
        push_net(&mut out, "transition", net);
    }
    if let Some(net) = &nets.termination {
        push_net(&mut out, "termination", net);
    }
    if let Some(net) = &nets.inter_option {
        push_net(&mut out, "inter_option", net);
    }
    out.push_str("end\n");
    out
}

/// Parse the text form back into networks.
pub fn parse(text: &str) -> Result<(AgentNets, AlgoKind)> {
    let mut lines = text.lines().peekable();
    let mut field = |key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| Error::Parse(format!("checkpoint truncated before '{key}'")))?;
        line.strip_prefix(key)
            .map(|rest| rest.trim().to_string())
            .ok_or_else(|| Error::Parse(format!("expected '{key} …', got '{line}'")))
    };
    if field("optionrl-checkpoint")? != "v1" {
        return Err(Error::Parse("unsupported checkpoint version".into()));
    }
    let algo = AlgoKind::parse(&field("algo")?)?;
    let parse_usize = |s: String| -> Result<usize> {
        s.parse().map_err(|e| Error::Parse(format!("bad integer '{s}': {e}")))
    };
    let obs_dim = parse_usize(field("obs_dim")?)?;
    let n_actions = parse_usize(field("n_actions")?)?;
    let n_options = parse_usize(field("n_options")?)?;

    let mut nets: Vec<(String, Mlp)> = Vec::new();
    loop {
        let line = lines.next().ok_or_else(|| Error::Parse("checkpoint missing 'end'".into()))?;
        if line == "end" {
            break;
        }
        let name = line
            .strip_prefix("net ")
            .ok_or_else(|| Error::Parse(format!("expected 'net <name>' or 'end', got '{line}'")))?
            .to_string();
        let dims_line = lines.next().ok_or_else(|| Error::Parse("missing dims".into()))?;
        let dims: Vec<usize> = dims_line
            .strip_prefix("dims ")
            .ok_or_else(|| Error::Parse(format!("expected 'dims …', got '{dims_line}'")))?
            .split_whitespace()
            .map(|w| w.parse().map_err(|e| Error::Parse(format!("bad dim '{w}': {e}"))))
            .collect::<Result<_>>()?;
        if dims.len() < 2 {
            return Err(Error::Parse(format!("net '{name}' needs at least two dims")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            for (label, count, dest) in
                [("w", dims[l] * dims[l + 1], &mut weights), ("b", dims[l + 1], &mut biases)]
            {
                let line = lines.next().ok_or_else(|| Error::Parse(format!("net '{name}' truncated")))?;
                let vals: Vec<f64> = line
                    .strip_prefix(label)
                    .ok_or_else(|| Error::Parse(format!("expected '{label} …' in net '{name}', got '{line}'")))?
                    .split_whitespace()
                    .map(|w| w.parse().map_err(|e| Error::Parse(format!("bad float '{w}': {e}"))))
                    .collect::<Result<_>>()?;
                if vals.len() != count {
                    return Err(Error::Parse(format!(
                        "net '{name}' layer {l}: expected {count} {label} values, got {}",
                        vals.len()
                    )));
                }
                dest.push(vals);
            }
        }
        nets.push((name, Mlp::from_params(dims, weights, biases)?));
    }

    let mut take = |name: &str| -> Option<Mlp> {
        nets.iter().position(|(n, _)| n == name).map(|i| nets.remove(i).1)
    };
    let policy = take("policy").ok_or_else(|| Error::Parse("checkpoint lacks a policy net".into()))?;
    let value = take("value").ok_or_else(|| Error::Parse("checkpoint lacks a value net".into()))?;
    let transition = take("transition");
    let termination = take("termination");
    let inter_option = take("inter_option");
    if let Some((name, _)) = nets.first() {
        return Err(Error::Parse(format!("unknown net '{name}' in checkpoint")));
    }
    let agent = AgentNets { obs_dim, n_actions, n_options, policy, value, transition, termination, inter_option };
    validate_shapes(&agent, algo)?;
    Ok((agent, algo))
}

fn validate_shapes(nets: &AgentNets, algo: AlgoKind) -> Result<()> {
    let (n, na, od) = (nets.n_options, nets.n_actions, nets.obs_dim);
    let shape_err = |what: &str| Err(Error::Parse(format!("checkpoint {what} shape inconsistent")));
    if nets.policy.in_dim() != od || nets.policy.out_dim() != n * na {
        return shape_err("policy");
    }
    if nets.value.in_dim() != od || nets.value.out_dim() != n {
        return shape_err("value");
    }
    if let Some(t) = &nets.transition {
        if t.in_dim() != od + na || t.out_dim() != n * n {
            return shape_err("transition");
        }
    }
    for (name, net) in [("termination", &nets.termination), ("inter_option", &nets.inter_option)] {
        if let Some(m) = net {
            if m.in_dim() != od || m.out_dim() != n {
                return shape_err(name);
            }
        }
    }
    match algo {
        AlgoKind::Ppoc if nets.termination.is_none() || nets.inter_option.is_none() => {
            shape_err("sampled-option nets missing")
        }
        AlgoKind::Soap | AlgoKind::Ppoem if nets.transition.is_none() => shape_err("transition net missing"),
        _ => Ok(()),
    }
}

pub fn save(nets: &AgentNets, algo: AlgoKind, path: &Path) -> Result<()> {
    std::fs::write(path, render(nets, algo))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(AgentNets, AlgoKind)> {
    parse(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_nets(algo: AlgoKind, n: usize, seed: u64) -> AgentNets {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AgentNets::init(algo, 4, 2, n, &[9, 5], &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact_for_every_algo_shape() {
        for (algo, n) in [(AlgoKind::Ppo, 1), (AlgoKind::Soap, 4), (AlgoKind::Ppoem, 3), (AlgoKind::Ppoc, 4)] {
            let nets = sample_nets(algo, n, 7 + n as u64);
            let text = render(&nets, algo);
            let (back, back_algo) = parse(&text).unwrap();
            assert_eq!(back, nets, "{algo}");
            assert_eq!(back_algo, algo);
            assert_eq!(render(&back, back_algo), text, "stable re-render");
        }
    }

    #[test]
    fn survives_a_disk_cycle() {
        let nets = sample_nets(AlgoKind::Soap, 2, 1);
        let dir = std::env::temp_dir().join("optionrl-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.ckpt");
        save(&nets, AlgoKind::Soap, &path).unwrap();
        let (back, algo) = load(&path).unwrap();
        assert_eq!(back, nets);
        assert_eq!(algo, AlgoKind::Soap);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn rejects_malformed_checkpoints() {
        let nets = sample_nets(AlgoKind::Soap, 2, 2);
        let good = render(&nets, AlgoKind::Soap);
        assert!(parse(&good.replace("v1", "v9")).is_err());
        assert!(parse(&good.replace("net value", "net voodoo")).is_err());
        assert!(parse(good.split_at(good.len() / 2).0).is_err());
        // a missing required net
        let no_transition = good
            .lines()
            .scan(false, |skipping, line| {
                if line == "net transition" {
                    *skipping = true;
                } else if line.starts_with("net ") || line == "end" {
                    *skipping = false;
                }
                Some(if *skipping { None } else { Some(line) })
            })
            .flatten()
            .collect::<Vec<_>>()
            .join("\n");
        assert!(parse(&no_transition).is_err());
        // sampled-option checkpoint without its extra nets
        let ppoc = sample_nets(AlgoKind::Ppoc, 2, 3);
        let broken = render(&ppoc, AlgoKind::Ppoc).replace("net termination", "net transition");
        assert!(parse(&broken).is_err());
    }

    #[test]
    fn rejects_shape_mismatches() {
        let nets = sample_nets(AlgoKind::Soap, 2, 4);
        let text = render(&nets, AlgoKind::Soap).replace("n_options 2", "n_options 3");
        assert!(parse(&text).is_err());
    }
}
