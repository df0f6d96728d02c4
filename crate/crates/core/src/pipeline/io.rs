use std::fs;
use std::path::Path;

use super::{RoutingResult, ScanRecord};
use crate::error::{Error, Result};
use crate::models::ClassLabel;
use crate::phantom::ManifestEntry;
use crate::volume::read_svol;

pub const RESULTS_HEADER: &str = "id,true_label,predicted_label,category,dice";

/// Loads every scan in a JSON-lines manifest. Relative paths resolve
/// against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ScanRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| {
            Error::Validation(format!("{}:{}: {e}", path.display(), n + 1))
        })?;
        let volume = read_svol(base.join(&entry.volume))?;
        let mask = read_svol(base.join(&entry.mask))?;
        out.push(ScanRecord::new(entry.id, volume, mask, entry.label)?);
    }
    let mut ids: Vec<&str> = out.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Validation(format!("duplicate scan id {} in {}", w[0], path.display())));
    }
    Ok(out)
}

/// CSV with one row per result; failure rows leave `dice` empty.
pub fn results_to_csv(results: &[RoutingResult]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in results {
        let predicted = r.predicted_label.as_ref().map(ClassLabel::as_str).unwrap_or("");
        let dice = r.dice.map(|d| d.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{}\n", r.id, r.true_label, predicted, r.category, dice));
    }
    s
}

pub fn results_to_jsonl(results: &[RoutingResult]) -> Result<String> {
    let mut s = String::new();
    for r in results {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

/// One parsed line of a results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub id: String,
    pub true_label: ClassLabel,
    pub predicted_label: Option<ClassLabel>,
    pub category: String,
    pub dice: Option<f64>,
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let bad = |n: usize, why: String| Error::Validation(format!("{}:{}: {why}", path.display(), n + 1));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == RESULTS_HEADER => {}
        _ => return Err(bad(0, format!("expected header {RESULTS_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 5 {
            return Err(bad(n, format!("expected 5 fields, found {}", f.len())));
        }
        let predicted_label = if f[2].is_empty() {
            None
        } else {
            Some(ClassLabel::new(f[2])?)
        };
        let dice = if f[4].is_empty() {
            None
        } else {
            Some(f[4].parse::<f64>().map_err(|e| bad(n, format!("dice {:?}: {e}", f[4])))?)
        };
        out.push(ResultRow {
            id: f[0].to_string(),
            true_label: ClassLabel::new(f[1])?,
            predicted_label,
            category: f[3].to_string(),
            dice,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(id: &str, dice: Option<f64>) -> RoutingResult {
        RoutingResult {
            id: id.into(),
            true_label: ClassLabel::pld(),
            predicted_label: Some(ClassLabel::mcc()),
            scores: None,
            model: Some("MCC".into()),
            category: "PLD->MCC".into(),
            dice,
            error: dice.is_none().then(|| "boom".to_string()),
            mask: None,
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rs = vec![result("a", Some(0.1 + 0.2)), result("b", None)];
        let csv = results_to_csv(&rs);
        assert_eq!(
            csv,
            "id,true_label,predicted_label,category,dice\na,PLD,MCC,PLD->MCC,0.30000000000000004\nb,PLD,MCC,PLD->MCC,\n"
        );
        fs::write(&path, csv).unwrap();
        let rows = read_results_csv(&path).unwrap();
        assert_eq!(rows[0].dice, Some(0.1 + 0.2));
        assert_eq!(rows[1].dice, None);
        assert_eq!(rows[0].category, "PLD->MCC");
    }

    #[test]
    fn jsonl_carries_errors() {
        let s = results_to_jsonl(&[result("b", None)]).unwrap();
        assert!(s.contains(r#""error":"boom""#));
        assert!(s.ends_with('\n'));
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        fs::write(&path, "id,dice\n").unwrap();
        assert!(read_results_csv(&path).is_err());
    }
}
