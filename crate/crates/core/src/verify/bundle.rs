use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::reports::InequalityReport;
use super::suite::{MemberStatus, Role};
use super::{Setting, VerifyConfig};
use crate::carpet::CarpetSpec;
use crate::error::Result;
use crate::penergy::RhoEstimate;

pub const INDEX_CSV_HEADER: &str = "inequality,function,role,c_hat,c_hat_doubled,stability,pass";
pub const PLOT_CSV_HEADER: &str = "function,inequality,n,left,left_err,right,right_err";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub members_total: usize,
    /// Members whose every report passes.
    pub members_passed: usize,
    pub members_failed: Vec<String>,
    /// Negative controls that were not flagged as non-members.
    pub controls_unflagged: Vec<String>,
    pub skipped: Vec<String>,
    pub pass: bool,
}

impl SuiteSummary {
    pub fn from_statuses(statuses: &[MemberStatus]) -> SuiteSummary {
        let measured = |s: &&MemberStatus| s.skipped.is_none();
        let members: Vec<&MemberStatus> = statuses.iter().filter(|s| s.role == Role::Member).filter(measured).collect();
        let members_failed: Vec<String> =
            members.iter().filter(|s| !s.failed.is_empty()).map(|s| s.name.clone()).collect();
        let controls_unflagged: Vec<String> = statuses
            .iter()
            .filter(|s| s.role == Role::NegativeControl)
            .filter(measured)
            .filter(|s| !s.growth_flagged)
            .map(|s| s.name.clone())
            .collect();
        let skipped = statuses.iter().filter(|s| s.skipped.is_some()).map(|s| s.name.clone()).collect();
        SuiteSummary {
            members_total: members.len(),
            members_passed: members.len() - members_failed.len(),
            pass: !members.is_empty() && members_failed.is_empty() && controls_unflagged.is_empty(),
            members_failed,
            controls_unflagged,
            skipped,
        }
    }
}

/// Everything a suite run produced, with the inputs needed to replay it.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteBundle {
    pub version: String,
    pub spec: CarpetSpec,
    pub p: f64,
    pub config: VerifyConfig,
    pub rho: RhoEstimate,
    pub setting: Setting,
    pub members: Vec<MemberStatus>,
    pub reports: Vec<InequalityReport>,
    pub summary: SuiteSummary,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    version: &'a str,
    seed: u64,
    p: f64,
    config: &'a VerifyConfig,
    setting: &'a Setting,
    report: &'a InequalityReport,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::Member => "member",
        Role::Probe => "probe",
        Role::NegativeControl => "negative_control",
    }
}

impl SuiteBundle {
    pub fn index_csv(&self) -> String {
        let mut out = format!("{INDEX_CSV_HEADER}\n");
        for r in &self.reports {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.id,
                r.function,
                role_name(r.role),
                opt(r.c_hat),
                opt(r.c_hat_doubled),
                opt(r.stability),
                r.pass
            );
        }
        out
    }

    pub fn plot_csv(&self) -> String {
        let mut out = format!("{PLOT_CSV_HEADER}\n");
        for r in &self.reports {
            for row in &r.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.function, r.id, row.n, row.left, row.left_err, row.right, row.right_err
                );
            }
        }
        out
    }

    /// Writes `bundle.json`, `index.csv`, `plot.csv` and one JSON per
    /// report under `reports/`. Output depends only on the bundle.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let reports_dir = dir.join("reports");
        std::fs::create_dir_all(&reports_dir)?;
        for r in &self.reports {
            let file = ReportFile {
                version: &self.version,
                seed: self.config.quad.seed,
                p: self.p,
                config: &self.config,
                setting: &self.setting,
                report: r,
            };
            let path = reports_dir.join(format!("{}__{}.json", r.function, r.id));
            std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
        }
        std::fs::write(dir.join("index.csv"), self.index_csv())?;
        std::fs::write(dir.join("plot.csv"), self.plot_csv())?;
        std::fs::write(dir.join("bundle.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
