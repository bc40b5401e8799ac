use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{ap, class_mf, mf_ods, BenchConfig, PrTable};

/// One row of the report table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    pub mf: f64,
    pub ap: f64,
    /// Threshold at which `mf` is reached.
    pub ods_threshold: f64,
    pub gt_pixels: u64,
    /// Classes without any ground truth do not enter the means.
    pub excluded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassRow>,
    pub mean_mf: f64,
    pub mean_ap: f64,
    pub images: usize,
    pub max_dist_frac: f64,
    pub halve: bool,
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Resolved configuration of the run that produced the predictions.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn from_table(
        table: &PrTable,
        names: &[String],
        images: usize,
        bench: &BenchConfig,
        config: serde_json::Value,
    ) -> EvalReport {
        let mf = mf_ods(table);
        let aps = ap(table);
        let totals = table.gt_totals();
        let mut notes = Vec::new();
        let classes: Vec<ClassRow> = (0..table.k())
            .map(|k| {
                let class = names.get(k).cloned().unwrap_or_else(|| format!("class{}", k + 1));
                let excluded = totals[k] == 0;
                if excluded {
                    notes.push(format!("class '{class}' has no ground truth and is excluded from the means"));
                }
                ClassRow {
                    mf: mf.per_class[k],
                    ap: aps.per_class[k],
                    ods_threshold: class_mf(&table.thresholds, &table.counts[k]).1,
                    gt_pixels: totals[k],
                    excluded,
                    class,
                }
            })
            .collect();
        EvalReport {
            classes,
            mean_mf: mf.mean,
            mean_ap: aps.mean,
            images,
            max_dist_frac: bench.max_dist_frac,
            halve: bench.halve,
            thresholds: table.thresholds.clone(),
            notes,
            config,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned plain-text table, scores in percent.
    pub fn to_text(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.class.len())
            .chain(["class".len(), "mean".len()])
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>5}  {:>8}", "class", "MF", "AP", "t", "gt");
        for c in &self.classes {
            let mark = if c.excluded { " *" } else { "" };
            let _ = writeln!(
                out,
                "{:<width$}  {:>6.1}  {:>6.1}  {:>5.2}  {:>8}{mark}",
                c.class,
                100.0 * c.mf,
                100.0 * c.ap,
                c.ods_threshold,
                c.gt_pixels
            );
        }
        let _ = writeln!(out, "{:<width$}  {:>6.1}  {:>6.1}", "mean", 100.0 * self.mean_mf, 100.0 * self.mean_ap);
        for n in &self.notes {
            let _ = writeln!(out, "* {n}");
        }
        out
    }
}

/// Raw PR points: `class,threshold,tp,fp,fn,precision,recall,f`.
pub fn pr_csv(table: &PrTable, names: &[String]) -> String {
    let mut out = String::from("class,threshold,tp,fp,fn,precision,recall,f\n");
    for (k, counts) in table.counts.iter().enumerate() {
        let name = names.get(k).cloned().unwrap_or_else(|| format!("class{}", k + 1));
        for (t, c) in table.thresholds.iter().zip(counts) {
            let _ = writeln!(
                out,
                "{name},{t},{},{},{},{},{},{}",
                c.tp,
                c.fp,
                c.fn_,
                c.precision(),
                c.recall(),
                c.f_measure()
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::Counts;

    #[test]
    fn absent_class_is_excluded_and_noted() {
        let mut table = PrTable::new(2, vec![0.5]);
        table.counts[0][0] = Counts { tp: 3, fp: 1, fn_: 1 };
        let names = vec!["a".to_string(), "b".to_string()];
        let r = EvalReport::from_table(&table, &names, 1, &BenchConfig::default(), serde_json::Value::Null);
        assert!((r.mean_mf - 0.75).abs() < 1e-12);
        assert!(r.classes[1].excluded);
        assert_eq!(r.notes.len(), 1);
        assert!(r.to_text().contains("mean"));
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(pr_csv(&table, &names).lines().count(), 3);
    }
}
