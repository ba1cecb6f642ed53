//! CSV tables of the checks. Row order follows the sample order and floats
//! use the shortest round-trip representation, so equal inputs give equal bytes.

use serde::Serialize;

use crate::contact::StradReport;
use crate::error::{LabError, Result};
use crate::sync::SyncPoint;

/// Serialize rows with a header taken from the field names.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| LabError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| LabError::Csv(e.to_string()))
}

#[derive(Serialize)]
struct SyncRow {
    point: usize,
    x: f64,
    y: f64,
    z: f64,
    #[serde(rename = "T")]
    t: f64,
    r_t: f64,
    baseline: f64,
    #[serde(rename = "A_T")]
    a: f64,
    #[serde(rename = "B_T")]
    b: f64,
    #[serde(rename = "Xr_T")]
    xr_t: f64,
    flags: String,
}

pub fn sync_table(points: &[SyncPoint]) -> Result<String> {
    let rows: Vec<SyncRow> = points
        .iter()
        .enumerate()
        .map(|(i, s)| SyncRow {
            point: i,
            x: s.point[0],
            y: s.point[1],
            z: s.point[2],
            t: s.t,
            r_t: s.r_t,
            baseline: s.baseline,
            a: s.a,
            b: s.b,
            xr_t: s.xr_t,
            flags: s.flags.label(),
        })
        .collect();
    to_csv(&rows)
}

#[derive(Serialize)]
struct StradRow {
    point: usize,
    x: f64,
    y: f64,
    z: f64,
    m1: f64,
    m2: f64,
    m3: f64,
    m4: f64,
    m5: f64,
    m6: f64,
    m7: f64,
    m8: f64,
    rc2: f64,
    rc3: f64,
    rc4: f64,
    reebquad: f64,
    verdict: &'static str,
}

pub fn strad_table(report: &StradReport) -> Result<String> {
    let rows: Vec<StradRow> = report
        .samples
        .iter()
        .map(|s| {
            let [m1, m2, m3, m4, m5, m6, m7, m8] = s.margins;
            let [rc2, rc3, rc4] = s.reeb_margins;
            let verdict = match (s.indeterminate(), s.unanimous()) {
                (true, _) => "indeterminate",
                (false, Some(true)) => "true",
                (false, Some(false)) => "false",
                (false, None) => "disagree",
            };
            StradRow {
                point: s.index,
                x: s.point[0],
                y: s.point[1],
                z: s.point[2],
                m1,
                m2,
                m3,
                m4,
                m5,
                m6,
                m7,
                m8,
                rc2,
                rc3,
                rc4,
                reebquad: s.reebquad,
                verdict,
            }
        })
        .collect();
    to_csv(&rows)
}
