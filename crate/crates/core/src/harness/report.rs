use std::fmt::Write as _;

use super::{ExperimentConfig, RoundResult};
use crate::evaluation::delta_pct;

pub const REPORT_HEADER: &str =
    "author\tbaseline_f1\taug_f1\tdF1_pct\tbaseline_k\taug_k\tdK_pct\tmcnemar_p\tsignificant";

/// Unweighted means over rounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacroRow {
    pub baseline_f1: f64,
    pub aug_f1: f64,
    pub baseline_k: f64,
    pub aug_k: f64,
    pub significant: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub rounds: Vec<RoundResult>,
    pub macro_row: MacroRow,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn pct(base: f64, aug: f64) -> String {
    delta_pct(base, aug).map_or_else(|| "NA".to_string(), |d| format!("{d:.2}"))
}

impl Report {
    /// Rounds are sorted by author.
    pub fn from_rounds(mut rounds: Vec<RoundResult>) -> Self {
        rounds.sort_by(|a, b| a.author.cmp(&b.author));
        let macro_row = MacroRow {
            baseline_f1: mean(rounds.iter().map(|r| r.baseline.f1)),
            aug_f1: mean(rounds.iter().map(|r| r.augmented.f1)),
            baseline_k: mean(rounds.iter().map(|r| r.baseline.k)),
            aug_k: mean(rounds.iter().map(|r| r.augmented.k)),
            significant: rounds.iter().filter(|r| r.significant()).count(),
        };
        Report { rounds, macro_row }
    }

    /// One row per author and a final `MACRO` row whose changes are taken
    /// between the averaged metrics.
    pub fn to_tsv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for r in &self.rounds {
            let (b, a) = (&r.baseline, &r.augmented);
            writeln!(
                s,
                "{}\t{:.4}\t{:.4}\t{}\t{:.4}\t{:.4}\t{}\t{:.6}\t{}",
                r.author,
                b.f1,
                a.f1,
                pct(b.f1, a.f1),
                b.k,
                a.k,
                pct(b.k, a.k),
                r.mcnemar.p_value,
                if r.significant() { "yes" } else { "no" }
            )
            .expect("string write");
        }
        let m = &self.macro_row;
        writeln!(
            s,
            "MACRO\t{:.4}\t{:.4}\t{}\t{:.4}\t{:.4}\t{}\tNA\t{}/{}",
            m.baseline_f1,
            m.aug_f1,
            pct(m.baseline_f1, m.aug_f1),
            m.baseline_k,
            m.aug_k,
            pct(m.baseline_k, m.aug_k),
            m.significant,
            self.rounds.len()
        )
        .expect("string write");
        s
    }

    /// Forged-probe acceptance rates, when a probe was configured.
    pub fn probe_tsv(&self) -> Option<String> {
        if self.rounds.iter().all(|r| r.baseline.probe_fpr.is_none()) {
            return None;
        }
        let mut s = String::from("author\tbaseline_fpr\taug_fpr\n");
        let f = |v: Option<f64>| v.map_or_else(|| "NA".into(), |x| format!("{x:.4}"));
        for r in &self.rounds {
            writeln!(s, "{}\t{}\t{}", r.author, f(r.baseline.probe_fpr), f(r.augmented.probe_fpr)).expect("string write");
        }
        Some(s)
    }

    pub fn manifest(&self, cfg: &ExperimentConfig) -> String {
        let mut s = String::new();
        writeln!(s, "config_hash\t{:016x}", cfg.hash()).expect("string write");
        writeln!(s, "seed\t{}", cfg.seed).expect("string write");
        if let Some(d) = &cfg.dataset {
            writeln!(s, "dataset\t{}", d.display()).expect("string write");
        }
        for r in &self.rounds {
            writeln!(
                s,
                "round\t{}\ttest_hash={:016x}\ttrain={}\taugmented_train={}\tforgeries={}",
                r.author, r.baseline.test_hash, r.baseline.n_train, r.augmented.n_train, r.n_forgeries
            )
            .expect("string write");
        }
        s
    }
}
