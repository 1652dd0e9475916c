use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::bench::{extrapolate_savings, BenchError, BenchRecord};
use crate::scheduler::Timing;

/// Published multi-century saving shown next to computed rows. Its inputs
/// are not available, so it is never recomputed.
pub const REFERENCE_SAVINGS_DAYS: f64 = 181.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    ChunkSweep,
    Firstprivate,
    Hetero,
    ErrorGrowth,
}

impl Template {
    /// Experiment id of the records the template consumes.
    pub fn family(self) -> &'static str {
        match self {
            Template::ChunkSweep => "chunk-sweep",
            Template::Firstprivate => "firstprivate",
            Template::Hetero => "hetero",
            Template::ErrorGrowth => "error-growth",
        }
    }
}

impl FromStr for Template {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Template::ChunkSweep,
            Template::Firstprivate,
            Template::Hetero,
            Template::ErrorGrowth,
        ]
        .into_iter()
        .find(|t| t.family() == s)
        .ok_or_else(|| format!("unknown template `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub markdown: String,
    pub csv: String,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn markdown(&self) -> String {
        let mut s = format!("| {} |\n", self.header.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(self.header.len()));
        for r in &self.rows {
            let _ = writeln!(s, "| {} |", r.join(" | "));
        }
        s
    }

    fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn stat(values: impl Iterator<Item = f64>) -> Timing {
    Timing::from_samples(values.collect())
}

fn group_by<'a>(records: &[&'a BenchRecord], key: &str) -> BTreeMap<String, Vec<&'a BenchRecord>> {
    let mut groups: BTreeMap<String, Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.get(key).unwrap_or("-").to_owned()).or_default().push(r);
    }
    groups
}

/// Formats the records of one experiment family as a markdown table and
/// the matching CSV.
pub fn table_report(records: &[BenchRecord], template: Template) -> Result<Report, BenchError> {
    let family: Vec<&BenchRecord> = records
        .iter()
        .filter(|r| r.experiment == template.family())
        .collect();
    if family.is_empty() {
        return Err(BenchError::MissingFamily(template.family().into()));
    }
    let (table, footer) = match template {
        Template::ChunkSweep => (chunk_sweep(&family), String::new()),
        Template::Firstprivate => (firstprivate(&family), String::new()),
        Template::Hetero => (hetero(&family), String::new()),
        Template::ErrorGrowth => error_growth(&family),
    };
    Ok(Report {
        markdown: table.markdown() + &footer,
        csv: table.csv(),
    })
}

fn chunk_sweep(records: &[&BenchRecord]) -> Table {
    let mut t = Table::new(&[
        "omp_chunk_size",
        "mean_wall_s",
        "median_wall_s",
        "min_wall_s",
        "max_wall_s",
        "cov",
        "mean_overhead_pct",
        "mean_imbalance",
        "reps",
    ]);
    let mut groups: Vec<(usize, Vec<&BenchRecord>)> = group_by(records, "omp_chunk")
        .into_iter()
        .map(|(k, v)| (k.parse().unwrap_or(usize::MAX), v))
        .collect();
    groups.sort_by_key(|(k, _)| *k);
    for (size, rs) in groups {
        let wall = stat(rs.iter().map(|r| r.wall_s));
        t.push(vec![
            size.to_string(),
            num(wall.mean),
            num(wall.median),
            num(wall.min),
            num(wall.max),
            format!("{:.4}", wall.cov),
            format!("{:.2}", stat(rs.iter().map(|r| r.overhead_pct)).mean),
            format!("{:.3}", stat(rs.iter().map(|r| r.imbalance)).mean),
            rs.len().to_string(),
        ]);
    }
    t
}

fn firstprivate(records: &[&BenchRecord]) -> Table {
    let groups = group_by(records, "data_env");
    let mut header = vec!["metric".to_string()];
    header.extend(groups.keys().cloned());
    let mut t = Table {
        header,
        rows: Vec::new(),
    };
    let rows: [(&str, fn(&BenchRecord) -> f64); 4] = [
        ("Loop runtime", |r| r.wall_s),
        ("Avg. thread runtime", |r| r.get_f64("mean_busy_s").unwrap_or(f64::NAN)),
        ("% Overhead", |r| r.overhead_pct),
        ("Copy time", |r| r.copy_s),
    ];
    for (label, f) in rows {
        let mut row = vec![label.to_string()];
        row.extend(groups.values().map(|rs| num(stat(rs.iter().map(|r| f(r))).mean)));
        t.push(row);
    }
    let mut row = vec!["Loop runtime CoV".to_string()];
    row.extend(
        groups
            .values()
            .map(|rs| format!("{:.4}", stat(rs.iter().map(|r| r.wall_s)).cov)),
    );
    t.push(row);
    t
}

fn hetero(records: &[&BenchRecord]) -> Table {
    let groups = group_by(records, "hetero_mode");
    let wall = |mode: &str| stat(groups.get(mode).into_iter().flatten().map(|r| r.wall_s));
    let part = groups.get("partitioned").cloned().unwrap_or_default();
    let host = stat(part.iter().map(|r| r.get_f64("host_s").unwrap_or(f64::NAN)));
    let device = stat(part.iter().map(|r| r.get_f64("device_s").unwrap_or(f64::NAN)));
    let (h, d, p) = (wall("host-only"), wall("device-only"), wall("partitioned"));
    let mut t = Table::new(&[
        "statistic",
        "host_only_s",
        "device_only_s",
        "total_s",
        "host_s",
        "device_s",
        "overhead_s",
    ]);
    let pick: [(&str, fn(&Timing) -> f64); 2] = [("mean", |s| s.mean), ("median", |s| s.median)];
    for (label, f) in pick {
        t.push(vec![
            label.into(),
            num(f(&h)),
            num(f(&d)),
            num(f(&p)),
            num(f(&host)),
            num(f(&device)),
            num(f(&p) - f(&host).max(f(&device))),
        ]);
    }
    t.push(vec![
        "cov".into(),
        format!("{:.4}", h.cov),
        format!("{:.4}", d.cov),
        format!("{:.4}", p.cov),
        format!("{:.4}", host.cov),
        format!("{:.4}", device.cov),
        "-".into(),
    ]);
    t
}

fn error_growth(records: &[&BenchRecord]) -> (Table, String) {
    let mut t = Table::new(&["timestep", "rms_mod", "rms_pert", "ratio"]);
    let mut rows: Vec<(usize, f64, f64)> = records
        .iter()
        .map(|r| {
            (
                r.get("timestep").and_then(|v| v.parse().ok()).unwrap_or(0),
                r.get_f64("rms_mod").unwrap_or(f64::NAN),
                r.get_f64("rms_pert").unwrap_or(f64::NAN),
            )
        })
        .collect();
    rows.sort_by_key(|r| r.0);
    let mut worst = 0.0f64;
    let mut pass = true;
    for &(step, m, p) in &rows {
        let ratio = if m == 0.0 { 0.0 } else { m / p };
        worst = worst.max(ratio);
        pass &= m <= p;
        t.push(vec![step.to_string(), format!("{m:.6e}"), format!("{p:.6e}"), format!("{ratio:.3e}")]);
    }
    let footer = format!(
        "\nenvelope: {} (worst rms_mod/rms_pert = {worst:.3e})\n",
        if pass { "pass" } else { "FAIL" }
    );
    (t, footer)
}

/// Savings table for `(label, t_base_s, t_opt_s)` rows plus the reference
/// figure.
pub fn extrapolation_report(
    rows: &[(String, f64, f64)],
    days: f64,
    years: f64,
) -> Result<Report, BenchError> {
    let mut t = Table::new(&["configuration", "t_base_s", "t_opt_s", "savings_days", "kind"]);
    for (label, base, opt) in rows {
        let saved = extrapolate_savings(*base, *opt, days, years)?;
        t.push(vec![label.clone(), num(*base), num(*opt), format!("{saved:.3}"), "computed".into()]);
    }
    t.push(vec![
        "reference".into(),
        "-".into(),
        "-".into(),
        format!("{REFERENCE_SAVINGS_DAYS:.1}"),
        "reference".into(),
    ]);
    Ok(Report {
        markdown: t.markdown(),
        csv: t.csv(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(exp: &str, wall: f64, notes: &[(&str, &str)]) -> BenchRecord {
        let mut r = BenchRecord::new(exp, "h", 0);
        r.wall_s = wall;
        for (k, v) in notes {
            r = r.note(k, v);
        }
        r
    }

    #[test]
    fn empty_family_is_an_error() {
        assert!(matches!(
            table_report(&[], Template::ChunkSweep),
            Err(BenchError::MissingFamily(_))
        ));
        let other = vec![rec("firstprivate", 1.0, &[])];
        assert!(table_report(&other, Template::Hetero).is_err());
    }

    #[test]
    fn chunk_sweep_one_row_per_size_in_numeric_order() {
        let recs: Vec<_> = [(16, 1.0), (1, 2.0), (4, 3.0), (1, 4.0)]
            .iter()
            .map(|(c, w)| rec("chunk-sweep", *w, &[("omp_chunk", &c.to_string())]))
            .collect();
        let r = table_report(&recs, Template::ChunkSweep).unwrap();
        let lines: Vec<_> = r.csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,3.000000,3.000000,"));
        assert!(lines[3].starts_with("16,"));
        assert_eq!(r, table_report(&recs, Template::ChunkSweep).unwrap());
    }

    #[test]
    fn firstprivate_rows() {
        let recs = vec![
            rec("firstprivate", 2.0, &[("data_env", "copy-all"), ("mean_busy_s", "1.5")]),
            rec("firstprivate", 1.0, &[("data_env", "copy-scalars-only"), ("mean_busy_s", "0.9")]),
        ];
        let r = table_report(&recs, Template::Firstprivate).unwrap();
        for row in ["Loop runtime", "Avg. thread runtime", "% Overhead"] {
            assert!(r.markdown.contains(row));
        }
        assert!(r.csv.starts_with("metric,copy-all,copy-scalars-only\n"));
    }

    #[test]
    fn extrapolation_has_reference_row() {
        let r = extrapolation_report(&[("tuned".into(), 20.0, 10.0)], 5.0, 1000.0).unwrap();
        assert!(r.csv.contains("tuned,20.000000,10.000000,8.449,computed"));
        assert!(r.csv.contains("reference,-,-,181.0,reference"));
    }
}
