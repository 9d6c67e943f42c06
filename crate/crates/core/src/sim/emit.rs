//! Result files. Numbers are rounded to 12 significant digits so repeated
//! runs produce identical bytes.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::engine::SimResult;
use super::experiments::{BeliefTable, CeilingComparison};

pub const STEPS_HEADER: &str = "step,p_eth,p_dai,volume,total_minted,liquidations";

/// `v` rounded to 12 significant digits.
pub fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { 0.0 } else { v };
    }
    format!("{v:.11e}").parse().expect("formatted float parses")
}

pub fn fmt_num(v: f64) -> String {
    format!("{}", round_sig(v))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_num)
}

fn json_num(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(round_sig(v)).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

fn json_opt(v: Option<f64>) -> serde_json::Value {
    v.map_or(serde_json::Value::Null, json_num)
}

fn write(path: PathBuf, text: String, manifest: &mut Vec<PathBuf>) -> io::Result<()> {
    fs::write(&path, text)?;
    manifest.push(path);
    Ok(())
}

pub fn steps_csv(result: &SimResult) -> String {
    let mut out = String::with_capacity(64 * (result.records.len() + 1));
    out.push_str(STEPS_HEADER);
    out.push('\n');
    for r in &result.records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step,
            fmt_num(r.p_eth),
            fmt_num(r.p_dai),
            fmt_num(r.volume),
            fmt_num(r.total_minted),
            r.liquidations
        ));
    }
    out
}

pub fn summary_json(result: &SimResult) -> String {
    let s = &result.summary;
    let value = json!({
        "mean_p_dai": json_num(s.mean_p_dai),
        "mean_abs_dev": json_num(s.mean_abs_dev),
        "pearson": json_opt(s.pearson),
        "min_p_dai": json_num(s.min_p_dai),
        "max_p_dai": json_num(s.max_p_dai),
        "seed": result.seed,
        "config_hash": result.config_hash,
    });
    let mut text = serde_json::to_string_pretty(&value).expect("json value serializes");
    text.push('\n');
    text
}

/// Writes `steps.csv` and `summary.json` into `out_dir`.
pub fn emit(result: &SimResult, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut manifest = Vec::new();
    write(out_dir.join("steps.csv"), steps_csv(result), &mut manifest)?;
    write(out_dir.join("summary.json"), summary_json(result), &mut manifest)?;
    Ok(manifest)
}

fn b_label(b: f64) -> String {
    format!("b_{}", fmt_num(b))
}

/// One run directory per belief weight plus `belief_table.csv`.
pub fn emit_belief_table(table: &BeliefTable, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut manifest = Vec::new();
    for (row, result) in table.rows.iter().zip(&table.results) {
        manifest.extend(emit(result, &out_dir.join(b_label(row.b)))?);
    }
    let mut csv = String::from("b,mean_p_dai,mean_abs_dev,pearson\n");
    for r in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_num(r.b),
            fmt_num(r.mean_p_dai),
            fmt_num(r.mean_abs_dev),
            fmt_opt(r.pearson)
        ));
    }
    csv.push_str(&format!(
        "# deviation_monotone={},pearson_monotone={}\n",
        table.deviation_monotone, table.pearson_monotone
    ));
    write(out_dir.join("belief_table.csv"), csv, &mut manifest)?;
    Ok(manifest)
}

/// `baseline/` and `ceiling/` run directories, a per-step `comparison.csv`
/// and a `comparison.json` summary.
pub fn emit_ceiling(cmp: &CeilingComparison, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut manifest = emit(&cmp.baseline, &out_dir.join("baseline"))?;
    manifest.extend(emit(&cmp.capped, &out_dir.join("ceiling"))?);
    let mut csv = String::from("step,p_eth,p_dai_baseline,p_dai_ceiling,minted_baseline,minted_ceiling\n");
    for (a, b) in cmp.baseline.records.iter().zip(&cmp.capped.records) {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            a.step,
            fmt_num(a.p_eth),
            fmt_num(a.p_dai),
            fmt_num(b.p_dai),
            fmt_num(a.total_minted),
            fmt_num(b.total_minted)
        ));
    }
    write(out_dir.join("comparison.csv"), csv, &mut manifest)?;
    let value = json!({
        "ceiling": json_num(cmp.ceiling),
        "mean_p_dai_baseline": json_num(cmp.mean_p_dai_baseline),
        "mean_p_dai_ceiling": json_num(cmp.mean_p_dai_ceiling),
        "rejected_mints": cmp.rejected_mints,
        "binding": cmp.binding,
        "raises_price": cmp.raises_price,
    });
    let mut text = serde_json::to_string_pretty(&value).expect("json value serializes");
    text.push('\n');
    write(out_dir.join("comparison.json"), text, &mut manifest)?;
    Ok(manifest)
}
