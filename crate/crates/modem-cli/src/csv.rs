//! Metrics CSV: comma-separated, one header row, UTF-8, LF line endings.
//! Missing values are empty fields. Floats use shortest round-trip
//! formatting, so a parse/write cycle is byte-exact.

use anyhow::{bail, Context};
use modem::pipeline::MetricsRow;

pub const CSV_HEADER: &str = "step,phase,td_loss,reward_loss,consistency_loss,policy_loss,bc_loss,kappa,epsilon,episode_return,eval_success_rate,wall_seconds";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn row_to_csv(r: &MetricsRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        r.step,
        r.phase,
        opt(r.td_loss),
        opt(r.reward_loss),
        opt(r.consistency_loss),
        opt(r.policy_loss),
        opt(r.bc_loss),
        r.kappa,
        r.epsilon,
        opt(r.episode_return),
        opt(r.eval_success_rate),
        opt(r.wall_seconds),
    )
}

fn parse_opt(field: &str, name: &str) -> anyhow::Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    Ok(Some(field.parse::<f64>().with_context(|| format!("bad {} field '{}'", name, field))?))
}

pub fn parse_metrics_csv(text: &str) -> anyhow::Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        Some(h) => bail!("unexpected CSV header '{}'", h),
        None => bail!("empty CSV"),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            bail!("line {}: expected 12 fields, got {}", i + 2, fields.len());
        }
        rows.push(MetricsRow {
            step: fields[0].parse().with_context(|| format!("line {}: step", i + 2))?,
            phase: fields[1].parse().with_context(|| format!("line {}: phase", i + 2))?,
            td_loss: parse_opt(fields[2], "td_loss")?,
            reward_loss: parse_opt(fields[3], "reward_loss")?,
            consistency_loss: parse_opt(fields[4], "consistency_loss")?,
            policy_loss: parse_opt(fields[5], "policy_loss")?,
            bc_loss: parse_opt(fields[6], "bc_loss")?,
            kappa: fields[7].parse().with_context(|| format!("line {}: kappa", i + 2))?,
            epsilon: fields[8].parse().with_context(|| format!("line {}: epsilon", i + 2))?,
            episode_return: parse_opt(fields[9], "episode_return")?,
            eval_success_rate: parse_opt(fields[10], "eval_success_rate")?,
            wall_seconds: parse_opt(fields[11], "wall_seconds")?,
        });
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&row_to_csv(r));
        out.push('\n');
    }
    out
}
