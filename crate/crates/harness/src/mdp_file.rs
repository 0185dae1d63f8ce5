//! MDP definition files.
//!
//! ```toml
//! gamma = 0.8
//! start = 0            # optional, default 0
//! terminal = []        # optional list of terminal states
//! # transition[s][a] is the next-state distribution, one entry per state.
//! transition = [
//!   [[0.7, 0.3], [0.2, 0.8]],
//!   [[0.6, 0.4], [0.1, 0.9]],
//! ]
//! # reward[s][a] is either one number (paid on every successor) or a row
//! # of per-successor rewards.
//! reward = [
//!   [[0.0, 1.0], [0.0, 1.0]],
//!   [0.0, 1.0],
//! ]
//! ```
//!
//! State and action counts are implied by the shape of `transition`.
//! Rewards must be non-negative.

use std::path::Path;

use robust_reward::mdp::MdpModel;
use toml::{Table, Value};

use crate::config::{float_list, ConfigError, Section};

#[derive(Debug, Clone, PartialEq)]
pub struct MdpFile {
    pub model: MdpModel<f64>,
    pub start: usize,
}

fn err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

pub fn load(path: &Path) -> Result<MdpFile, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| err(path.display().to_string(), e.to_string()))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<MdpFile, ConfigError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| err("<mdp>", e.to_string().trim().to_string()))?;
    let t = Section::new(&table, "");
    t.allow(&["gamma", "start", "terminal", "transition", "reward"])?;
    let gamma = t.req_float("gamma")?;
    let start = t.uint("start")?.unwrap_or(0) as usize;
    let terminal: Vec<usize> = match t.floats("terminal")? {
        None => Vec::new(),
        Some(v) => v
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if x < 0.0 || x.fract() != 0.0 {
                    Err(err(format!("terminal[{i}]"), "expected a state index"))
                } else {
                    Ok(x as usize)
                }
            })
            .collect::<Result<_, _>>()?,
    };

    let states = nested(t.get("transition"), "transition")?;
    let ns = states.len();
    if ns == 0 {
        return Err(err("transition", "at least one state is required"));
    }
    let mut transition = Vec::with_capacity(ns);
    for (s, v) in states.iter().enumerate() {
        let path = format!("transition[{s}]");
        let actions = v
            .as_array()
            .ok_or_else(|| err(&path, "expected a list of action rows"))?;
        let rows = actions
            .iter()
            .enumerate()
            .map(|(a, row)| float_list(row, &format!("{path}[{a}]")))
            .collect::<Result<Vec<_>, _>>()?;
        transition.push(rows);
    }
    let na = transition[0].len();

    let reward_states = nested(t.get("reward"), "reward")?;
    if reward_states.len() != ns {
        return Err(err(
            "reward",
            format!("expected {ns} states, got {}", reward_states.len()),
        ));
    }
    let mut reward = Vec::with_capacity(ns);
    for (s, v) in reward_states.iter().enumerate() {
        let path = format!("reward[{s}]");
        let actions = v
            .as_array()
            .ok_or_else(|| err(&path, "expected a list per action"))?;
        if actions.len() != na {
            return Err(err(
                &path,
                format!("expected {na} actions, got {}", actions.len()),
            ));
        }
        let mut rows = Vec::with_capacity(na);
        for (a, entry) in actions.iter().enumerate() {
            let p = format!("{path}[{a}]");
            rows.push(match entry {
                Value::Float(_) | Value::Integer(_) => {
                    let x = float_list(&Value::Array(vec![entry.clone()]), &p)?[0];
                    vec![x; ns]
                }
                _ => float_list(entry, &p)?,
            });
        }
        reward.push(rows);
    }
    let model = MdpModel::new(transition, reward, gamma, &terminal)
        .map_err(|e| err("<mdp>", e.to_string()))?;
    if start >= ns || model.is_terminal(start) {
        return Err(err("start", "must be a non-terminal state"));
    }
    Ok(MdpFile { model, start })
}

fn nested<'a>(v: Option<&'a Value>, path: &str) -> Result<&'a Vec<Value>, ConfigError> {
    v.ok_or_else(|| err(path, "missing"))?
        .as_array()
        .ok_or_else(|| err(path, "expected a list"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STATE: &str = r#"
gamma = 0.8
transition = [
  [[0.7, 0.3], [0.2, 0.8]],
  [[0.6, 0.4], [0.1, 0.9]],
]
reward = [
  [[0.0, 1.0], [0.0, 1.0]],
  [0.5, [0.0, 1.0]],
]
"#;

    #[test]
    fn parses_scalar_and_row_rewards() {
        let f = parse(TWO_STATE).unwrap();
        assert_eq!(f.model.num_states(), 2);
        assert_eq!(f.model.reward_row(1, 0), &[0.5, 0.5]);
        assert_eq!(f.model.reward_row(1, 1), &[0.0, 1.0]);
        assert_eq!(f.start, 0);
    }

    #[test]
    fn reports_bad_rows() {
        let e = parse(&TWO_STATE.replace("[0.1, 0.9]", "[0.1, \"x\"]")).unwrap_err();
        assert_eq!(e.path, "transition[1][1][1]");
        let e = parse(&TWO_STATE.replace("[0.1, 0.9]", "[0.1, 0.8]")).unwrap_err();
        assert!(e.message.contains("sums to"));
        let e = parse(&TWO_STATE.replace("gamma = 0.8", "")).unwrap_err();
        assert_eq!(e.path, "gamma");
        let e = parse(&format!("{TWO_STATE}\nstart = 5\n")).unwrap_err();
        assert_eq!(e.path, "start");
    }
}
