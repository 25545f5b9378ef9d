//! Text and CSV rendering of study results.

use std::fmt::Write as _;

use ethgame_core::analysis::{
    AnalysisError, BehaviorReport, PerformanceReport, RationalityReport, SignedRankOutcome,
    SurveyReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Study {
    Performance,
    Rationality,
    Behavior,
    Survey,
}

/// Rows of (label, value) for one study, shared by both renderers.
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn kv(title: &str, rows: Vec<(&str, String)>) -> Self {
        Self {
            title: title.to_owned(),
            header: vec!["metric".into(), "value".into()],
            rows: rows
                .into_iter()
                .map(|(k, v)| vec![k.to_owned(), v])
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let cols = self.header.len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| {
                std::iter::once(&self.header)
                    .chain(&self.rows)
                    .map(|r| r[c].len())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = format!("{}\n", self.title);
        let line = |row: &[String]| {
            row.iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| {
                    if i == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
        };
        writeln!(out, "{}", line(&self.header)).unwrap();
        writeln!(
            out,
            "{}",
            widths
                .iter()
                .map(|w| "-".repeat(*w))
                .collect::<Vec<_>>()
                .join("  ")
        )
        .unwrap();
        for row in &self.rows {
            writeln!(out, "{}", line(row)).unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("write to memory");
        for row in &self.rows {
            w.write_record(row).expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is UTF-8")
    }
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

pub fn performance_table(r: &PerformanceReport) -> Table {
    let mut rows = vec![
        ("paired_subjects", r.n_pairs.to_string()),
        ("automated_mean_roi", num(r.automated.mean)),
        ("automated_median_roi", num(r.automated.median)),
        ("discretion_mean_roi", num(r.discretion.mean)),
        ("discretion_median_roi", num(r.discretion.median)),
        ("mean_diff", num(r.mean_diff)),
        ("median_diff", num(r.median_diff)),
    ];
    match r.test {
        SignedRankOutcome::Applicable(t) => {
            rows.push(("nonzero_pairs", t.n.to_string()));
            rows.push(("wilcoxon_statistic", num(t.statistic)));
            rows.push((
                "p_two_sided",
                t.p_value
                    .map(num)
                    .unwrap_or_else(|| "NOT_APPLICABLE".into()),
            ));
        }
        SignedRankOutcome::NotApplicable { nonzero_pairs } => {
            rows.push(("nonzero_pairs", nonzero_pairs.to_string()));
            rows.push(("wilcoxon_statistic", "NOT_APPLICABLE".into()));
            rows.push(("p_two_sided", "NOT_APPLICABLE".into()));
        }
    }
    Table::kv(
        "Performance: Automated vs Discretion ROI (sessions 1-2)",
        rows,
    )
}

pub fn rationality_table(r: &RationalityReport) -> Table {
    Table::kv(
        "Rationality: self-selection vs better prior mode",
        vec![
            ("consistency_rate", num(r.rate)),
            ("n_consistent", r.n_consistent.to_string()),
            ("n_inconsistent", r.n_inconsistent.to_string()),
            ("n_eligible", r.n_eligible.to_string()),
            ("n_ties_excluded", r.n_ties_excluded.to_string()),
        ],
    )
}

pub fn behavior_table(r: &BehaviorReport) -> Table {
    Table::kv(
        "Behavior: LoC score vs Automated selection",
        vec![("point_biserial_r", num(r.r)), ("n", r.n.to_string())],
    )
}

pub fn survey_table(r: &SurveyReport) -> Table {
    Table {
        title: format!("Survey: agreement by question (n = {})", r.n),
        header: vec![
            "question".into(),
            "top3_percent".into(),
            "bottom4_percent".into(),
        ],
        rows: r
            .questions
            .iter()
            .map(|q| {
                vec![
                    format!("Q{}", q.question),
                    format!("{:.2}", q.top3),
                    format!("{:.2}", q.bottom4),
                ]
            })
            .collect(),
    }
}

pub fn render(study: Study, tables: &crate::export::StudyTables) -> Result<Table, AnalysisError> {
    use ethgame_core::analysis::*;
    Ok(match study {
        Study::Performance => performance_table(&performance_study(&tables.sessions)?),
        Study::Rationality => rationality_table(&rationality_study(&tables.sessions)?),
        Study::Behavior => behavior_table(&behavior_study(&tables.subjects, &tables.sessions)?),
        Study::Survey => survey_table(&survey_report(&tables.survey)?),
    })
}
